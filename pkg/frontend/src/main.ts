import { ReviewClient } from "./client.js";
import { applyDrag, hitTest, normalizeRect } from "./geometry.js";
import type { DragHandle } from "./geometry.js";
import { HANDLE_PX, drawScene } from "./render.js";
import { ReviewState } from "./state.js";
import type { Box } from "./types.js";

interface Drag {
  kind: "edit" | "draw";
  name: string | null;
  handle: DragHandle;
  startX: number;
  startY: number;
  original: Box | null;
  moved: boolean;
}

function requireEl<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`page is missing #${id}`);
  }
  return el as T;
}

export async function bootstrap(): Promise<void> {
  const canvas = requireEl<HTMLCanvasElement>("frame");
  const slider = requireEl<HTMLInputElement>("threshold");
  const sliderValue = requireEl<HTMLSpanElement>("threshold-value");
  const acceptAll = requireEl<HTMLButtonElement>("accept-all");
  const save = requireEl<HTMLButtonElement>("save");
  const status = requireEl<HTMLDivElement>("status");
  const seedList = requireEl<HTMLUListElement>("seed-list");

  const client = new ReviewClient("");
  const info = await client.session();
  const candidates = await client.candidates();
  const state = new ReviewState(candidates, info.frame_width, info.frame_height);

  canvas.width = info.frame_width;
  canvas.height = info.frame_height;
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    throw new Error("canvas 2d context unavailable");
  }

  let frame: HTMLImageElement | null = null;
  let selected: string | null = null;
  let drag: Drag | null = null;
  let preview: Box | null = null;

  const img = new Image();
  img.onload = () => {
    frame = img;
    redraw();
  };
  img.src = client.frameUrl(info.frame_index);

  function tell(message: string): void {
    status.textContent = message;
  }

  function redraw(): void {
    drawScene(ctx!, frame, state, selected, preview);
    seedList.replaceChildren(
      ...state.seeds().map((seed) => {
        const item = document.createElement("li");
        if (seed.object_name === selected) {
          item.classList.add("selected");
        }
        const label = document.createElement("span");
        label.textContent = seed.object_name;
        label.onclick = () => {
          selected = seed.object_name;
          redraw();
        };
        label.ondblclick = () => {
          const next = window.prompt("Rename seed", seed.object_name);
          if (next !== null && !state.renameSeed(seed.object_name, next)) {
            tell(`cannot rename to "${next}": empty or already taken`);
          } else if (next !== null) {
            selected = next.trim();
          }
          redraw();
        };
        const remove = document.createElement("button");
        remove.textContent = "x";
        remove.title = "delete this seed";
        remove.onclick = () => {
          state.removeSeed(seed.object_name);
          if (selected === seed.object_name) {
            selected = null;
          }
          redraw();
        };
        item.append(label, remove);
        return item;
      }),
    );
    tell(`${state.seeds().length} seeds, ${state.visibleCandidates().length} candidates shown`);
  }

  function canvasPoint(ev: MouseEvent): [number, number] {
    // canvas pixels match on-disk frame pixels; only CSS scaling is undone
    const rect = canvas.getBoundingClientRect();
    const x = ((ev.clientX - rect.left) / rect.width) * canvas.width;
    const y = ((ev.clientY - rect.top) / rect.height) * canvas.height;
    return [x, y];
  }

  canvas.onmousedown = (ev) => {
    const [x, y] = canvasPoint(ev);
    for (const seed of [...state.seeds()].reverse()) {
      const handle = hitTest(seed, x, y, HANDLE_PX);
      if (handle) {
        selected = seed.object_name;
        drag = {
          kind: "edit",
          name: seed.object_name,
          handle,
          startX: x,
          startY: y,
          original: { x: seed.x, y: seed.y, w: seed.w, h: seed.h },
          moved: false,
        };
        redraw();
        return;
      }
    }
    drag = { kind: "draw", name: null, handle: "se", startX: x, startY: y, original: null, moved: false };
  };

  canvas.onmousemove = (ev) => {
    if (!drag) {
      return;
    }
    const [x, y] = canvasPoint(ev);
    if (Math.abs(x - drag.startX) + Math.abs(y - drag.startY) > 2) {
      drag.moved = true;
    }
    if (drag.kind === "edit" && drag.name && drag.original) {
      const next = applyDrag(drag.original, drag.handle, x - drag.startX, y - drag.startY, state.frameWidth, state.frameHeight);
      state.updateBox(drag.name, next);
    } else if (drag.kind === "draw" && drag.moved) {
      preview = normalizeRect(drag.startX, drag.startY, x, y);
    }
    redraw();
  };

  canvas.onmouseup = (ev) => {
    if (!drag) {
      return;
    }
    const [x, y] = canvasPoint(ev);
    if (drag.kind === "draw") {
      if (drag.moved) {
        const box = normalizeRect(drag.startX, drag.startY, x, y);
        if (box.w >= 2 && box.h >= 2) {
          selected = state.addBox(box);
        }
      } else {
        // a plain click: accept the candidate under the cursor, else deselect
        const hit = state
          .visibleCandidates()
          .find(({ index, candidate }) => !state.isAccepted(index) && hitTest(candidate, x, y, 0) !== null);
        selected = hit ? state.acceptCandidate(hit.index) : null;
      }
    }
    drag = null;
    preview = null;
    redraw();
  };

  document.onkeydown = (ev) => {
    if ((ev.key === "Delete" || ev.key === "Backspace") && selected) {
      state.removeSeed(selected);
      selected = null;
      redraw();
    }
  };

  slider.oninput = () => {
    state.threshold = Number(slider.value);
    sliderValue.textContent = Number(slider.value).toFixed(2);
    redraw();
  };

  acceptAll.onclick = () => {
    const added = state.acceptAllVisible();
    tell(`accepted ${added.length} candidates`);
    redraw();
  };

  save.onclick = async () => {
    const seeds = state.seeds();
    if (seeds.length === 0 && !window.confirm("No seeds in the working list. Try to save anyway?")) {
      return;
    }
    try {
      const written = await client.saveSeeds(seeds);
      tell(`saved ${written} seeds to ${info.seeds_path}`);
    } catch (err) {
      tell(`save failed: ${(err as Error).message}`);
    }
  };

  redraw();
}

bootstrap().catch((err) => {
  const status = document.getElementById("status");
  if (status) {
    status.textContent = `failed to start: ${(err as Error).message}`;
  }
});
