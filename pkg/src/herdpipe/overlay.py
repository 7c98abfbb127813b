"""Visual verification overlays: seeded identity colors, outlines, mask tints."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .geometry import BBox, Mask, mask_decode

log = logging.getLogger(__name__)

MIN_CHANNEL_DISTANCE = 48  # pairwise L-infinity separation of palette colors
TINT_ALPHA = 0.4
OUTLINE_PX = 2


@dataclass(frozen=True)
class OverlayItem:
    identity: str
    box: BBox
    mask: Mask | None = None
    score: float | None = None


def palette(identities: list[str], seed: int = 0) -> dict[str, tuple[int, int, int]]:
    """Deterministic visually-distinct colors, one per identity (sorted order).

    Rejection sampling keeps every pair at channel distance >= 48; candidates
    come from a seeded generator, so the same identities and seed always give
    the same colors.
    """
    rng = np.random.default_rng(seed)
    colors: list[tuple[int, int, int]] = []
    for _ in sorted(set(identities)):
        for _ in range(10_000):
            cand = tuple(int(v) for v in rng.integers(32, 256, size=3))
            if all(max(abs(cand[k] - c[k]) for k in range(3)) >= MIN_CHANNEL_DISTANCE
                   for c in colors):
                colors.append(cand)
                break
        else:
            raise RuntimeError("palette sampling failed; too many identities")
    return dict(zip(sorted(set(identities)), colors))


def render_overlay(frame: np.ndarray, items: list[OverlayItem],
                   palette_seed: int = 0) -> np.ndarray:
    """Draw boxes/masks/labels onto a copy of the frame; empty input is a no-op.

    Boxes fully outside the frame are skipped with a warning rather than
    clamped into view, since they usually signal an upstream bug worth seeing.
    """
    frame = np.asarray(frame, dtype=np.uint8)
    if not items:
        return frame.copy()
    fh, fw = frame.shape[:2]
    colors = palette([it.identity for it in items], palette_seed)
    out = frame.astype(np.float64)

    drawable = []
    for item in sorted(items, key=lambda it: it.identity):
        b = item.box
        if b.x + b.w <= 0 or b.y + b.h <= 0 or b.x >= fw or b.y >= fh:
            log.warning("overlay: box for %s lies fully outside the %dx%d frame; skipped",
                        item.identity, fw, fh)
            continue
        drawable.append(item)

    for item in drawable:
        if item.mask is None:
            continue
        raster = mask_decode(item.mask).astype(bool)
        if raster.shape != (fh, fw):
            log.warning("overlay: mask for %s is %s, frame is %dx%d; skipped",
                        item.identity, raster.shape, fw, fh)
            continue
        color = np.array(colors[item.identity], dtype=np.float64)
        out[raster] = (1 - TINT_ALPHA) * out[raster] + TINT_ALPHA * color

    img = Image.fromarray(np.clip(np.rint(out), 0, 255).astype(np.uint8))
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    for item in drawable:
        color = colors[item.identity]
        b = item.box
        draw.rectangle([b.x, b.y, b.x + b.w - 1, b.y + b.h - 1],
                       outline=color, width=OUTLINE_PX)
        text = item.identity if item.score is None else f"{item.identity} {item.score:.2f}"
        tx = min(max(b.x, 0), fw - 1)
        ty = max(b.y - 11, 0)
        draw.text((tx, ty), text, fill=color, font=font)
    return np.asarray(img)


def overlay_png_bytes(frame: np.ndarray, items: list[OverlayItem],
                      palette_seed: int = 0) -> bytes:
    raster = render_overlay(frame, items, palette_seed)
    buf = io.BytesIO()
    Image.fromarray(raster).save(buf, format="PNG")
    return buf.getvalue()
