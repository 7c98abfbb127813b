"""Turn a video or image directory into the canonical chunked frame layout.

A sequence root looks like::

    out_root/
      chunk_000/0000001.jpg ... chunk_000/0003000.jpg
      chunk_001/0003001.jpg ...
      manifest.jsonl

Global numbering is 1-based, continuous across chunk subfolders, with frames
re-encoded as maximum-quality baseline JPEG so re-running ingest on identical
input is byte-identical.  Video decoding is delegated to a configurable
external command template; the tool's own contract starts at raster images.
"""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .errors import DecodeError, InvalidConfigError, NamingOverflowError
from .formats import read_jsonl, require_fields, write_jsonl

log = logging.getLogger(__name__)

MAX_CHUNK_DEFAULT = 3000
MAX_GLOBAL_INDEX = 9_999_999

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff", ".webp"}

# Deterministic frame encoding: max-quality baseline JPEG, no chroma subsampling.
JPEG_SETTINGS = {"format": "JPEG", "quality": 100, "subsampling": 0}


def plan_frames(total: int, stride: int) -> list[int]:
    """Source indices kept at the given sampling stride: 0, stride, 2*stride, ..."""
    if stride < 1:
        raise InvalidConfigError(f"stride must be >= 1, got {stride}")
    if total < 0:
        raise InvalidConfigError(f"frame count must be >= 0, got {total}")
    return list(range(0, total, stride))


def chunk_frames(n_selected: int, max_chunk: int = MAX_CHUNK_DEFAULT) -> list[int]:
    """Greedy chunk sizes: every chunk is max_chunk except possibly the last."""
    if max_chunk < 1:
        raise InvalidConfigError(f"max_chunk must be >= 1, got {max_chunk}")
    if n_selected < 0:
        raise InvalidConfigError(f"selected count must be >= 0, got {n_selected}")
    sizes = [max_chunk] * (n_selected // max_chunk)
    if n_selected % max_chunk:
        sizes.append(n_selected % max_chunk)
    return sizes


def frame_name(global_index: int) -> str:
    """Zero-padded 7-digit frame filename, e.g. 23 -> '0000023.jpg'."""
    if not (1 <= global_index <= MAX_GLOBAL_INDEX):
        raise NamingOverflowError(
            f"global index {global_index} outside [1, {MAX_GLOBAL_INDEX}]"
        )
    return f"{global_index:07d}.jpg"


def chunk_dir_name(chunk_id: int) -> str:
    return f"chunk_{chunk_id:03d}"


@dataclass(frozen=True)
class IngestPlan:
    total_source_frames: int
    stride: int
    selected: list[int]
    chunks: list[tuple[int, int, int]]  # (chunk_id, first_global_index, count)

    @classmethod
    def build(cls, total: int, stride: int, max_chunk: int = MAX_CHUNK_DEFAULT) -> "IngestPlan":
        selected = plan_frames(total, stride)
        sizes = chunk_frames(len(selected), max_chunk)
        chunks = []
        first = 1
        for cid, size in enumerate(sizes):
            chunks.append((cid, first, size))
            first += size
        return cls(total, stride, selected, chunks)


@dataclass(frozen=True)
class SequenceLayout:
    """A materialized sequence root with its manifest loaded."""

    root: Path
    frames: list[dict]  # manifest rows: global_index, chunk_id, filename, source_index
    errors: list[dict]

    def frame_path(self, global_index: int) -> Path:
        row = self._by_index().get(global_index)
        if row is None:
            raise KeyError(f"no frame with global index {global_index}")
        return self.root / chunk_dir_name(row["chunk_id"]) / row["filename"]

    def _by_index(self) -> dict[int, dict]:
        return {row["global_index"]: row for row in self.frames}

    @property
    def n_frames(self) -> int:
        return len(self.frames)


MANIFEST_NAME = "manifest.jsonl"


def write_manifest(root: Path, frames: list[dict], errors: list[dict]) -> Path:
    path = Path(root) / MANIFEST_NAME
    write_jsonl(path, frames + errors)
    return path


def load_layout(root) -> SequenceLayout:
    root = Path(root)
    frames, errors = [], []
    for rec in read_jsonl(root / MANIFEST_NAME):
        if "error" in rec:
            errors.append(rec)
        else:
            require_fields(rec, ("global_index", "chunk_id", "filename", "source_index"),
                           str(root / MANIFEST_NAME))
            frames.append(rec)
    frames.sort(key=lambda r: r["global_index"])
    return SequenceLayout(root=root, frames=frames, errors=errors)


def _list_source_images(src_dir: Path) -> list[Path]:
    files = [p for p in sorted(src_dir.iterdir())
             if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    return files


def _decode_video(source: Path, stride: int, decoder_cmd: str, work_dir: Path) -> list[Path]:
    """Run the external decoder template and collect its output frames.

    The template gets {input}, {stride} and {out_pattern}; the decoder is
    responsible for applying the stride, so its outputs are ingested 1:1.
    """
    out_pattern = str(work_dir / "frame_%07d.png")
    cmd = decoder_cmd.format(input=str(source), stride=stride, out_pattern=out_pattern)
    proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True)
    if proc.returncode != 0:
        raise DecodeError(
            f"decoder exited {proc.returncode} for {source}:\n"
            f"command: {cmd}\nstdout: {proc.stdout}\nstderr: {proc.stderr}"
        )
    frames = _list_source_images(work_dir)
    if not frames:
        raise DecodeError(f"decoder produced no frames in {work_dir} (command: {cmd})")
    return frames


def _tmp_root() -> str | None:
    # The only environment override the tool honors.
    return os.environ.get("HERDPIPE_TMP") or None


def ingest(source, stride: int, max_chunk: int, out_root,
           decoder_cmd: str | None = None) -> SequenceLayout:
    """Materialize the chunked layout + manifest from a video or image directory.

    Directory sources are consumed in lexicographic order and sampled at
    ``stride``; video sources are decoded by ``decoder_cmd`` first (which
    applies the stride itself) and then ingested unsampled.  Unreadable images
    are recorded as error rows in the manifest and skipped; global numbering
    stays gapless.
    """
    source = Path(source)
    out_root = Path(out_root)

    if source.is_dir():
        sources = _list_source_images(source)
        plan = IngestPlan.build(len(sources), stride, max_chunk)
        selected = [sources[i] for i in plan.selected]
        selected_src_idx = plan.selected
        return _materialize(selected, selected_src_idx, max_chunk, out_root)

    if not source.is_file():
        raise InvalidConfigError(f"source {source} is neither a file nor a directory")
    if decoder_cmd is None:
        raise InvalidConfigError(
            f"source {source} looks like a video; configure a decoder command template"
        )
    with tempfile.TemporaryDirectory(dir=_tmp_root()) as tmp:
        decoded = _decode_video(source, stride, decoder_cmd, Path(tmp))
        return _materialize(decoded, list(range(len(decoded))), max_chunk, out_root)


def _materialize(selected: list[Path], source_indices: list[int],
                 max_chunk: int, out_root: Path) -> SequenceLayout:
    out_root.mkdir(parents=True, exist_ok=True)
    frames: list[dict] = []
    errors: list[dict] = []
    global_index = 1
    for src_path, src_idx in zip(selected, source_indices):
        try:
            with Image.open(src_path) as im:
                rgb = im.convert("RGB")
        except OSError as exc:
            log.warning("skipping unreadable image %s: %s", src_path, exc)
            errors.append({"source_index": src_idx, "source": str(src_path),
                           "error": f"unreadable image: {exc}"})
            continue
        chunk_id = (global_index - 1) // max_chunk
        chunk_path = out_root / chunk_dir_name(chunk_id)
        chunk_path.mkdir(exist_ok=True)
        name = frame_name(global_index)
        rgb.save(chunk_path / name, **JPEG_SETTINGS)
        frames.append({"global_index": global_index, "chunk_id": chunk_id,
                       "filename": name, "source_index": src_idx})
        global_index += 1
    write_manifest(out_root, frames, errors)
    return SequenceLayout(root=out_root, frames=frames, errors=errors)
