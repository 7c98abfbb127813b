"""Shared domain types: boxes, run-length masks, frames, detections, trajectories.

Boxes are ``[x, y, w, h]`` with real-valued coordinates (annotations may be
subpixel); ``(x, y)`` is the top-left corner, ``x`` runs along columns and
``y`` along rows.  Masks are binary rasters stored as uncompressed run-length
counts in column-major order, zeros first, so external tools can interoperate.
All types are immutable values and safe to share between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    CorruptMaskError,
    EmptyMaskError,
    InvalidGeometryError,
    InvalidInputError,
)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box ``[x, y, w, h]`` in pixels, top-left origin."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for v in (self.x, self.y, self.w, self.h):
            if not math.isfinite(v):
                raise InvalidGeometryError(f"non-finite box coordinate: {self}")
        if self.w < 0 or self.h < 0:
            raise InvalidGeometryError(f"negative box extent: {self}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def clamped(self, frame_w: float, frame_h: float) -> "BBox":
        """Intersect the box with the frame rectangle ``[0, 0, frame_w, frame_h]``."""
        x0 = min(max(self.x, 0.0), frame_w)
        y0 = min(max(self.y, 0.0), frame_h)
        x1 = min(max(self.x2, 0.0), frame_w)
        y1 = min(max(self.y2, 0.0), frame_h)
        return BBox(x0, y0, x1 - x0, y1 - y0)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when the union is empty."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class Mask:
    """Binary raster as uncompressed RLE, column-major, starting with zeros.

    ``counts[0]`` is the length of the leading zero run (possibly 0); runs
    alternate 0/1 and must cover exactly ``width * height`` pixels.
    """

    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise CorruptMaskError(
                f"mask dimensions must be positive, got {self.width}x{self.height}"
            )
        if any(c < 0 for c in self.counts):
            raise CorruptMaskError(f"negative run length in {self.counts}")
        total = sum(self.counts)
        if total != self.width * self.height:
            raise CorruptMaskError(
                f"counts sum {total} != {self.width}x{self.height}"
                f"={self.width * self.height}"
            )
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))


def mask_encode(raster: np.ndarray) -> Mask:
    """Encode a binary ``(height, width)`` raster as a column-major RLE mask."""
    arr = np.asarray(raster)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInputError(f"raster must be a non-empty 2-D grid, got shape {arr.shape}")
    flat = arr.astype(bool).ravel(order="F")
    # run boundaries: indices where the value flips
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs = [0] + runs
    return Mask(width=arr.shape[1], height=arr.shape[0], counts=tuple(runs))


def mask_decode(mask: Mask) -> np.ndarray:
    """Decode an RLE mask back to a ``(height, width)`` uint8 raster."""
    values = np.arange(len(mask.counts)) % 2  # alternating 0,1,0,1,...
    flat = np.repeat(values.astype(np.uint8), mask.counts)
    if flat.size != mask.width * mask.height:
        raise CorruptMaskError(
            f"counts sum {flat.size} != {mask.width * mask.height}"
        )
    return flat.reshape((mask.height, mask.width), order="F")


def mask_to_bbox(mask: Mask) -> BBox:
    """Tightest axis-aligned box containing every set pixel of the mask."""
    raster = mask_decode(mask)
    ys, xs = np.nonzero(raster)
    if xs.size == 0:
        raise EmptyMaskError("mask has no set pixels")
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return BBox(float(x0), float(y0), float(x1 - x0 + 1), float(y1 - y0 + 1))


FRAME_NAME_DIGITS = 7


@dataclass(frozen=True)
class FrameRef:
    """A frame's place in a sequence layout: 1-based global index, chunk, filename."""

    global_index: int
    chunk_id: int
    filename: str

    def __post_init__(self):
        expected = f"{self.global_index:0{FRAME_NAME_DIGITS}d}.jpg"
        if self.filename != expected:
            raise InvalidInputError(
                f"frame filename {self.filename!r} does not match index"
                f" {self.global_index} (expected {expected!r})"
            )


@dataclass(frozen=True)
class Detection:
    """A scored, labeled box on one frame (frame referenced by global index)."""

    frame_index: int
    box: BBox
    score: float
    label: str

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise InvalidInputError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class TrajectoryEntry:
    box: BBox
    mask: Optional[Mask] = None


@dataclass
class Trajectory:
    """Per-identity time-indexed sequence of boxes (and optional masks)."""

    identity: str
    entries: dict[int, TrajectoryEntry] = field(default_factory=dict)

    def add(self, frame_index: int, box: BBox, mask: Optional[Mask] = None) -> None:
        if frame_index in self.entries:
            raise InvalidInputError(
                f"trajectory {self.identity!r} already has an entry at frame {frame_index}"
            )
        self.entries[frame_index] = TrajectoryEntry(box, mask)

    def frames(self) -> list[int]:
        return sorted(self.entries)

    def last_entry_within(self, last_frame: int, lookback: int) -> Optional[tuple[int, TrajectoryEntry]]:
        """Most recent entry in ``[last_frame - lookback + 1, last_frame]``, or None."""
        for f in range(last_frame, last_frame - lookback, -1):
            if f in self.entries:
                return f, self.entries[f]
        return None

    def __len__(self) -> int:
        return len(self.entries)
