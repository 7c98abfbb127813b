import type { Box } from "./types.js";

export type DragHandle = "nw" | "ne" | "sw" | "se" | "body";

/**
 * Intersect a box with the frame rectangle, the same rule the server applies
 * before persisting. Keeping both sides identical means a save is never a
 * surprise rewrite of what the reviewer sees.
 */
export function clampBox(box: Box, frameW: number, frameH: number): Box {
  const x0 = Math.min(Math.max(box.x, 0), frameW);
  const y0 = Math.min(Math.max(box.y, 0), frameH);
  const x1 = Math.min(Math.max(box.x + box.w, 0), frameW);
  const y1 = Math.min(Math.max(box.y + box.h, 0), frameH);
  return { x: x0, y: y0, w: x1 - x0, h: y1 - y0 };
}

/** Corner-pair rectangle with normalized (non-negative) extent. */
export function normalizeRect(x0: number, y0: number, x1: number, y1: number): Box {
  return {
    x: Math.min(x0, x1),
    y: Math.min(y0, y1),
    w: Math.abs(x1 - x0),
    h: Math.abs(y1 - y0),
  };
}

function corners(box: Box): Array<[DragHandle, number, number]> {
  return [
    ["nw", box.x, box.y],
    ["ne", box.x + box.w, box.y],
    ["sw", box.x, box.y + box.h],
    ["se", box.x + box.w, box.y + box.h],
  ];
}

/**
 * What a pointer at (px, py) grabs on this box: a corner handle wins over the
 * body so small boxes stay resizable.
 */
export function hitTest(box: Box, px: number, py: number, grab: number): DragHandle | null {
  for (const [handle, cx, cy] of corners(box)) {
    if (Math.abs(px - cx) <= grab && Math.abs(py - cy) <= grab) {
      return handle;
    }
  }
  const inside = px >= box.x && px <= box.x + box.w && py >= box.y && py <= box.y + box.h;
  return inside ? "body" : null;
}

/**
 * Apply a drag of (dx, dy) to a box. Body drags translate without resizing,
 * stopped at the frame edge; corner drags move that corner, flipping through
 * the opposite corner if dragged past it, then clamp to the frame.
 */
export function applyDrag(box: Box, handle: DragHandle, dx: number, dy: number, frameW: number, frameH: number): Box {
  if (handle === "body") {
    const x = Math.min(Math.max(box.x + dx, 0), frameW - box.w);
    const y = Math.min(Math.max(box.y + dy, 0), frameH - box.h);
    return { x, y, w: box.w, h: box.h };
  }
  let [movingX, movingY] = [box.x, box.y];
  let [anchorX, anchorY] = [box.x + box.w, box.y + box.h];
  if (handle === "ne" || handle === "se") {
    [movingX, anchorX] = [anchorX, movingX];
  }
  if (handle === "sw" || handle === "se") {
    [movingY, anchorY] = [anchorY, movingY];
  }
  const moved = normalizeRect(anchorX, anchorY, movingX + dx, movingY + dy);
  return clampBox(moved, frameW, frameH);
}

/** Red for low confidence through green for high; used for candidate boxes. */
export function scoreColor(score: number): string {
  const hue = Math.round(120 * Math.min(Math.max(score, 0), 1));
  return `hsl(${hue}, 85%, 45%)`;
}
