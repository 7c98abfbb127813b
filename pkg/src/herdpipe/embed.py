"""Fixed-dimension embeddings for crops: producers, binary codec, on-disk store.

Embedders are pluggable: a deterministic in-process toy embedder (grayscale,
exact 16x16 area average, L2 normalized) keeps everything runnable at desk
scale, while real models sit behind an external batch command.  Vectors are
persisted one file per crop in a compact binary format plus a manifest.
"""

from __future__ import annotations

import shlex
import struct
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    FormatError,
    IncompleteStoreError,
    InvalidInputError,
    NotAnEmbeddingError,
    StageError,
    StoreInconsistentError,
    TruncatedEmbeddingError,
)
from .formats import read_jsonl, require_fields, write_jsonl

MAGIC = b"EMB1"
TOY_GRID = 16
TOY_DIM = TOY_GRID * TOY_GRID


def _area_average_axis(n_src: int, n_out: int) -> np.ndarray:
    """(n_out, n_src) weight matrix whose row i averages source bin i exactly."""
    weights = np.zeros((n_out, n_src))
    bin_size = n_src / n_out
    for i in range(n_out):
        lo, hi = i * bin_size, (i + 1) * bin_size
        first, last = int(np.floor(lo)), int(np.ceil(hi))
        for s in range(first, min(last, n_src)):
            overlap = min(hi, s + 1) - max(lo, s)
            if overlap > 0:
                weights[i, s] = overlap / bin_size
    return weights


def toy_embedder(crop: np.ndarray) -> np.ndarray:
    """256-dim stand-in descriptor: gray 16x16 area average, row-major, unit norm.

    All-equal rasters (including all-zero) map to the uniform unit vector, so
    the output norm is always exactly 1.
    """
    arr = np.asarray(crop, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInputError("cannot embed a zero-size raster")
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    elif arr.ndim != 2:
        raise InvalidInputError(f"expected HxW or HxWx3 raster, got shape {arr.shape}")
    h, w = arr.shape
    pooled = _area_average_axis(h, TOY_GRID) @ arr @ _area_average_axis(w, TOY_GRID).T
    vec = pooled.reshape(-1)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return np.full(TOY_DIM, 1.0 / TOY_GRID)
    return vec / norm


# --- EMB1 binary codec ---------------------------------------------------------

def write_embedding(path, vector) -> None:
    vec = np.asarray(vector, dtype=np.float32)
    if vec.ndim != 1 or vec.size < 1:
        raise InvalidInputError(f"embedding must be a non-empty 1-D vector, got shape {vec.shape}")
    if not np.isfinite(vec).all():
        raise FormatError("embedding contains non-finite components")
    payload = MAGIC + struct.pack("<I", vec.size) + vec.astype("<f4").tobytes()
    Path(path).write_bytes(payload)


def read_embedding(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise NotAnEmbeddingError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 8:
        raise TruncatedEmbeddingError(f"{path}: header truncated at {len(data)} bytes")
    (dim,) = struct.unpack("<I", data[4:8])
    expected = 8 + 4 * dim
    if len(data) < expected:
        raise TruncatedEmbeddingError(
            f"{path}: expected {expected} bytes for dim {dim}, got {len(data)}"
        )
    if len(data) > expected:
        raise FormatError(f"{path}: {len(data) - expected} trailing bytes after payload")
    vec = np.frombuffer(data, dtype="<f4", count=dim, offset=8)
    if not np.isfinite(vec).all():
        raise FormatError(f"{path}: embedding contains non-finite components")
    return np.array(vec)


# --- embedding store ------------------------------------------------------------

MANIFEST_NAME = "manifest.jsonl"


@dataclass(frozen=True)
class StoreRecord:
    crop_filename: str
    embedding_filename: str
    dim: int
    label: str | None = None
    identity: str | None = None
    frame_global_index: int | None = None


def embedding_filename(crop_filename: str) -> str:
    return Path(crop_filename).stem + ".emb"


@dataclass(frozen=True)
class EmbeddingStore:
    root: Path
    records: tuple[StoreRecord, ...]
    dim: int

    def vector(self, record: StoreRecord) -> np.ndarray:
        return read_embedding(self.root / record.embedding_filename)

    def matrix(self) -> np.ndarray:
        """All vectors stacked in record order, upcast to 64-bit for training."""
        return np.stack([self.vector(r) for r in self.records]).astype(np.float64)

    def labels(self) -> list[str | None]:
        return [r.label for r in self.records]


def build_store(root, entries) -> EmbeddingStore:
    """Write one embedding file per (crop_filename, vector, metadata) entry."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    records: list[StoreRecord] = []
    dim = None
    for entry in entries:
        crop_filename, vector = entry[0], np.asarray(entry[1])
        meta = entry[2] if len(entry) > 2 else {}
        if dim is None:
            dim = int(vector.size)
        elif vector.size != dim:
            raise StoreInconsistentError(
                f"vector for {crop_filename} has dim {vector.size}, store dim is {dim}"
            )
        emb_name = embedding_filename(crop_filename)
        write_embedding(root / emb_name, vector)
        records.append(StoreRecord(
            crop_filename=crop_filename, embedding_filename=emb_name, dim=dim,
            label=meta.get("label"), identity=meta.get("identity"),
            frame_global_index=meta.get("frame_global_index")))
    _write_store_manifest(root, records)
    return EmbeddingStore(root=root, records=tuple(records), dim=dim or 0)


def _write_store_manifest(root: Path, records: list[StoreRecord]) -> None:
    write_jsonl(root / MANIFEST_NAME, [
        {"crop_filename": r.crop_filename, "embedding_filename": r.embedding_filename,
         "dim": r.dim, "label": r.label if r.label is not None else "",
         "identity": r.identity if r.identity is not None else "",
         "frame_global_index": r.frame_global_index
         if r.frame_global_index is not None else -1}
        for r in records
    ])


def open_store(root) -> EmbeddingStore:
    """Load and fully validate a store: manifest rows and files must be 1:1."""
    root = Path(root)
    records: list[StoreRecord] = []
    for rec in read_jsonl(root / MANIFEST_NAME):
        require_fields(rec, ("crop_filename", "embedding_filename", "dim"),
                       str(root / MANIFEST_NAME))
        label = str(rec.get("label", "")) or None
        identity = str(rec.get("identity", "")) or None
        fgi = int(rec.get("frame_global_index", -1))
        records.append(StoreRecord(
            crop_filename=str(rec["crop_filename"]),
            embedding_filename=str(rec["embedding_filename"]),
            dim=int(rec["dim"]),
            label=label, identity=identity,
            frame_global_index=fgi if fgi >= 0 else None))
    missing = [r.crop_filename for r in records
               if not (root / r.embedding_filename).is_file()]
    if missing:
        raise IncompleteStoreError(
            f"store {root} is missing embedding files for: {', '.join(missing)}"
        )
    manifest_files = {r.embedding_filename for r in records}
    stray = sorted(p.name for p in root.glob("*.emb") if p.name not in manifest_files)
    if stray:
        raise StoreInconsistentError(
            f"store {root} has embedding files absent from the manifest: {', '.join(stray)}"
        )
    dims = set()
    for r in records:
        vec = read_embedding(root / r.embedding_filename)
        if vec.size != r.dim:
            raise StoreInconsistentError(
                f"{r.embedding_filename}: file dim {vec.size} != manifest dim {r.dim}"
            )
        dims.add(vec.size)
    if len(dims) > 1:
        raise StoreInconsistentError(f"store {root} mixes dims {sorted(dims)}")
    dim = dims.pop() if dims else 0
    return EmbeddingStore(root=root, records=tuple(records), dim=dim)


def embed_crops(crop_dir, crop_records, out_dir) -> EmbeddingStore:
    """Run the toy embedder over a crop manifest's images."""
    crop_dir = Path(crop_dir)
    entries = []
    for rec in crop_records:
        with Image.open(crop_dir / rec.filename) as im:
            raster = np.asarray(im.convert("RGB"))
        entries.append((rec.filename, toy_embedder(raster),
                        {"label": rec.behavior_label, "identity": rec.identity,
                         "frame_global_index": rec.frame_global_index}))
    return build_store(out_dir, entries)


def run_external_embedder(cmd_template: str, crop_manifest, crop_records,
                          out_dir, dim: int) -> EmbeddingStore:
    """Invoke the batch embedder command, then validate and index its output.

    The command must leave one embedding file per manifest row in out_dir,
    named after the crop with an .emb suffix.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cmd = cmd_template.format(manifest=str(crop_manifest), out_dir=str(out_dir), dim=dim)
    proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True)
    if proc.returncode != 0:
        raise StageError(
            f"embedder exited {proc.returncode}:\ncommand: {cmd}\n"
            f"stdout: {proc.stdout}\nstderr: {proc.stderr}"
        )
    records: list[StoreRecord] = []
    missing: list[str] = []
    for rec in crop_records:
        emb_name = embedding_filename(rec.filename)
        path = out_dir / emb_name
        if not path.is_file():
            missing.append(rec.filename)
            continue
        vec = read_embedding(path)
        if vec.size != dim:
            raise StoreInconsistentError(
                f"{emb_name}: embedder produced dim {vec.size}, expected {dim}"
            )
        records.append(StoreRecord(
            crop_filename=rec.filename, embedding_filename=emb_name, dim=dim,
            label=rec.behavior_label, identity=rec.identity,
            frame_global_index=rec.frame_global_index))
    if missing:
        raise IncompleteStoreError(
            f"embedder produced no output for: {', '.join(missing)}"
        )
    _write_store_manifest(out_dir, records)
    return EmbeddingStore(root=out_dir, records=tuple(records), dim=dim)
