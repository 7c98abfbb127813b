import { scoreColor } from "./geometry.js";
import type { ReviewState } from "./state.js";
import type { Box } from "./types.js";

export const HANDLE_PX = 5;

function drawHandles(ctx: CanvasRenderingContext2D, box: Box): void {
  ctx.fillStyle = "#ffffff";
  for (const [cx, cy] of [
    [box.x, box.y],
    [box.x + box.w, box.y],
    [box.x, box.y + box.h],
    [box.x + box.w, box.y + box.h],
  ]) {
    ctx.fillRect(cx - HANDLE_PX / 2, cy - HANDLE_PX / 2, HANDLE_PX, HANDLE_PX);
  }
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  frame: CanvasImageSource | null,
  state: ReviewState,
  selected: string | null,
  preview: Box | null,
): void {
  ctx.clearRect(0, 0, state.frameWidth, state.frameHeight);
  if (frame) {
    ctx.drawImage(frame, 0, 0);
  } else {
    ctx.fillStyle = "#202020";
    ctx.fillRect(0, 0, state.frameWidth, state.frameHeight);
  }

  ctx.font = "11px sans-serif";
  for (const { index, candidate } of state.visibleCandidates()) {
    if (state.isAccepted(index)) {
      continue; // the accepted copy is drawn as a seed below
    }
    ctx.strokeStyle = scoreColor(candidate.score);
    ctx.setLineDash([5, 3]);
    ctx.lineWidth = 1;
    ctx.strokeRect(candidate.x, candidate.y, candidate.w, candidate.h);
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(candidate.score.toFixed(2), candidate.x + 2, candidate.y + 11);
  }
  ctx.setLineDash([]);

  for (const seed of state.seeds()) {
    const isSelected = seed.object_name === selected;
    ctx.strokeStyle = isSelected ? "#00e5ff" : "#ffd400";
    ctx.lineWidth = isSelected ? 2 : 1.5;
    ctx.strokeRect(seed.x, seed.y, seed.w, seed.h);
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(seed.object_name, seed.x + 2, seed.y + seed.h - 3);
    if (isSelected) {
      drawHandles(ctx, seed);
    }
  }

  if (preview) {
    ctx.strokeStyle = "#ffffff";
    ctx.lineWidth = 1;
    ctx.setLineDash([3, 3]);
    ctx.strokeRect(preview.x, preview.y, preview.w, preview.h);
    ctx.setLineDash([]);
  }
}
