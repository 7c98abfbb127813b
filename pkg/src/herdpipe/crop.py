"""Standardized per-individual crops: isolate, fill, resize, name, parallelize.

Each tracked instance becomes one fixed-size RGB image: the box interior is
kept (optionally intersected with a segmentation mask, everything else filled
with a background color) and stretched to the output size with bilinear
interpolation.  Sparse behavior annotations are densified by carrying each
label forward until a newer one overrides it.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConflictingAnnotationError, DegenerateCropError, InvalidConfigError
from .formats import read_jsonl, require_fields, write_jsonl
from .geometry import BBox, Mask, mask_decode

log = logging.getLogger(__name__)

BG_COLORS = {"black": (0, 0, 0), "white": (255, 255, 255)}
DEFAULT_OUT_SIZE = (224, 224)
JPEG_SETTINGS = {"format": "JPEG", "quality": 100, "subsampling": 0}


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1) - 2)


def bilinear_resize(raster: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Aligned-corners bilinear resample: corner pixels map onto corner pixels.

    Source coordinate of output pixel j is j*(src-1)/(dst-1), so identity sizes
    round-trip exactly and the 4 corners are preserved for any size.
    """
    if out_w < 1 or out_h < 1:
        raise InvalidConfigError(f"output size must be positive, got {out_w}x{out_h}")
    src = np.asarray(raster, dtype=np.float64)
    squeeze = src.ndim == 2
    if squeeze:
        src = src[:, :, None]
    h, w = src.shape[:2]
    ys = np.zeros(out_h) if out_h == 1 or h == 1 else np.arange(out_h) * (h - 1) / (out_h - 1)
    xs = np.zeros(out_w) if out_w == 1 or w == 1 else np.arange(out_w) * (w - 1) / (out_w - 1)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    if squeeze:
        out = out[:, :, 0]
    return out


@dataclass(frozen=True)
class CropTask:
    frame_path: str
    frame_global_index: int
    identity: str
    box: BBox
    mask: Mask | None = None
    bg_color: tuple[int, int, int] = (0, 0, 0)
    out_size: tuple[int, int] = DEFAULT_OUT_SIZE
    behavior_label: str | None = None

    def __post_init__(self):
        if self.out_size[0] < 1 or self.out_size[1] < 1:
            raise InvalidConfigError(f"out_size must be positive, got {self.out_size}")


@dataclass(frozen=True)
class CropRecord:
    filename: str
    frame_global_index: int
    identity: str
    behavior_label: str | None = None


def crop_filename(frame_global_index: int, identity: str, suffix: str = ".jpg") -> str:
    return f"{frame_global_index:07d}_{identity}{suffix}"


def crop_instance(frame: np.ndarray, task: CropTask) -> np.ndarray:
    """Isolate one instance: mask-fill inside the box window, then resize.

    The window is the smallest integer pixel grid covering the (clamped) box;
    pixels outside the mask become bg_color before scaling, so the fill color
    never bleeds from interpolation against image content.
    """
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise InvalidConfigError(f"frame must be HxWx3, got shape {frame.shape}")
    fh, fw = frame.shape[:2]
    box = task.box.clamped(fw, fh)
    x0, y0 = math.floor(box.x), math.floor(box.y)
    x1, y1 = math.ceil(box.x + box.w), math.ceil(box.y + box.h)
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(fw, x1), min(fh, y1)
    if x1 <= x0 or y1 <= y0:
        raise DegenerateCropError(
            f"box {task.box} for {task.identity} at frame {task.frame_global_index} "
            f"clamps to zero area in a {fw}x{fh} frame"
        )
    window = frame[y0:y1, x0:x1].astype(np.float64)
    if task.mask is not None:
        raster = mask_decode(task.mask)
        if raster.shape != (fh, fw):
            raise InvalidConfigError(
                f"mask is {raster.shape[1]}x{raster.shape[0]} but frame is {fw}x{fh}"
            )
        keep = raster[y0:y1, x0:x1].astype(bool)
        window[~keep] = np.asarray(task.bg_color, dtype=np.float64)
    out = bilinear_resize(window, task.out_size[0], task.out_size[1])
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _run_task(task: CropTask, out_dir: str, encoder: str) -> tuple[CropRecord | None, dict | None]:
    suffix = ".png" if encoder == "png" else ".jpg"
    name = crop_filename(task.frame_global_index, task.identity, suffix)
    try:
        with Image.open(task.frame_path) as im:
            frame = np.asarray(im.convert("RGB"))
        raster = crop_instance(frame, task)
        img = Image.fromarray(raster)
        if encoder == "png":
            img.save(Path(out_dir) / name, format="PNG")
        else:
            img.save(Path(out_dir) / name, **JPEG_SETTINGS)
    except Exception as exc:  # individual failures must not sink the batch
        return None, {"frame_global_index": task.frame_global_index,
                      "identity": task.identity, "error": str(exc)}
    return CropRecord(filename=name, frame_global_index=task.frame_global_index,
                      identity=task.identity, behavior_label=task.behavior_label), None


def crop_batch(tasks: list[CropTask], out_dir, workers: int | None = None,
               encoder: str = "jpeg") -> tuple[list[CropRecord], list[dict]]:
    """Process every task through a worker pool; output is scheduling-independent.

    Failed tasks land in the returned error list (and the manifest) instead of
    aborting the batch.  Records come back sorted by (frame, identity), so the
    worker count never changes the result.
    """
    if workers is None:
        workers = default_workers()
    if workers < 1:
        raise InvalidConfigError(f"workers must be >= 1, got {workers}")
    if encoder not in ("jpeg", "png"):
        raise InvalidConfigError(f"encoder must be jpeg or png, got {encoder!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    results: list[tuple[CropRecord | None, dict | None]] = []
    if workers == 1:
        results = [_run_task(t, str(out_dir), encoder) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks,
                                    [str(out_dir)] * len(tasks),
                                    [encoder] * len(tasks)))
    records = sorted((r for r, _ in results if r is not None),
                     key=lambda r: (r.frame_global_index, r.identity))
    errors = sorted((e for _, e in results if e is not None),
                    key=lambda e: (e["frame_global_index"], e["identity"]))
    for e in errors:
        log.warning("crop task failed: %s", e)
    return records, errors


def forward_propagate_labels(sparse: list[tuple[int, str, str]],
                             horizon: tuple[int, int]) -> dict[str, dict[int, str]]:
    """Densify sparse annotations: a label holds from its frame until overridden.

    Frames before an identity's first annotation stay unlabeled.  Two distinct
    labels for one identity at one frame is a data error, not a tie to break.
    """
    lo, hi = horizon
    if hi < lo:
        raise InvalidConfigError(f"horizon end {hi} before start {lo}")
    per_identity: dict[str, dict[int, str]] = {}
    for frame, identity, behavior in sparse:
        anns = per_identity.setdefault(identity, {})
        if frame in anns and anns[frame] != behavior:
            raise ConflictingAnnotationError(
                f"identity {identity} has labels {anns[frame]!r} and {behavior!r} "
                f"at frame {frame}"
            )
        anns[frame] = behavior
    dense: dict[str, dict[int, str]] = {}
    for identity, anns in per_identity.items():
        frames = sorted(anns)
        out: dict[int, str] = {}
        current: str | None = None
        nxt = 0
        for f in range(lo, hi + 1):
            while nxt < len(frames) and frames[nxt] <= f:
                current = anns[frames[nxt]]
                nxt += 1
            if current is not None:
                out[f] = current
        dense[identity] = out
    return dense


# --- file formats -------------------------------------------------------------

MANIFEST_HEADER_KEY = "crop_manifest"


def write_crop_manifest(path, records: list[CropRecord], errors: list[dict],
                        out_size: tuple[int, int], bg_color: tuple[int, int, int],
                        encoder: str) -> int:
    header = {MANIFEST_HEADER_KEY: 1, "resize_mode": "stretch",
              "out_size": list(out_size), "bg_color": list(bg_color),
              "encoder": encoder}
    rows: list[dict] = [header]
    rows += [{"filename": r.filename, "frame_global_index": r.frame_global_index,
              "identity": r.identity,
              "behavior_label": r.behavior_label if r.behavior_label is not None else ""}
             for r in records]
    rows += [{"error_frame_global_index": e["frame_global_index"],
              "error_identity": e["identity"], "error": e["error"]} for e in errors]
    return write_jsonl(path, rows)


def read_crop_manifest(path) -> tuple[dict, list[CropRecord], list[dict]]:
    header: dict = {}
    records: list[CropRecord] = []
    errors: list[dict] = []
    for rec in read_jsonl(path):
        if MANIFEST_HEADER_KEY in rec:
            header = rec
        elif "error" in rec:
            errors.append(rec)
        else:
            require_fields(rec, ("filename", "frame_global_index", "identity",
                                 "behavior_label"), str(path))
            label = rec["behavior_label"] or None
            records.append(CropRecord(filename=str(rec["filename"]),
                                      frame_global_index=int(rec["frame_global_index"]),
                                      identity=str(rec["identity"]),
                                      behavior_label=label))
    return header, records, errors


def read_labels(path) -> list[tuple[int, str, str]]:
    out = []
    for rec in read_jsonl(path):
        require_fields(rec, ("frame_index", "identity", "behavior"), str(path))
        out.append((int(rec["frame_index"]), str(rec["identity"]), str(rec["behavior"])))
    return out


def write_labels(path, labels: list[tuple[int, str, str]]) -> int:
    return write_jsonl(path, [
        {"frame_index": f, "identity": i, "behavior": b} for f, i, b in labels
    ])
