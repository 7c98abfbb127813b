"""Scripted synthetic sequences with exact ground truth for desk-scale runs.

Objects are rectangular patterned blobs.  A behavior prescribes both motion
and an appearance pattern; patterns are drawn in object-local coordinates so
a crop of the object looks the same wherever it is.  Appearance must differ
structurally (solid vs stripes vs checkerboard), not just in brightness,
because downstream descriptors are normalized and a global brightness change
is invisible to them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SynthSpecError
from .geometry import BBox, Trajectory, TrajectoryEntry, iou, mask_encode
from .track import TrackRun

PATTERNS = ("solid", "stripes", "checker")


@dataclass(frozen=True)
class BehaviorStyle:
    velocity: tuple[float, float]
    pattern: str
    brightness: float = 1.0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise SynthSpecError(f"unknown pattern {self.pattern!r}; choose from {PATTERNS}")
        if not 0.0 < self.brightness <= 1.0:
            raise SynthSpecError(f"brightness must be in (0,1], got {self.brightness}")


DEFAULT_BEHAVIORS = {
    "resting": BehaviorStyle(velocity=(0.0, 0.0), pattern="solid", brightness=0.6),
    "walking": BehaviorStyle(velocity=(1.0, 0.0), pattern="stripes"),
    "running": BehaviorStyle(velocity=(3.0, 0.0), pattern="checker"),
}


@dataclass(frozen=True)
class BehaviorPhase:
    behavior: str
    n_frames: int

    def __post_init__(self):
        if self.n_frames < 1:
            raise SynthSpecError(f"phase length must be >= 1, got {self.n_frames}")


@dataclass(frozen=True)
class ObjectScript:
    name: str
    x: float
    y: float
    w: int
    h: int
    color: tuple[int, int, int]
    phases: tuple[BehaviorPhase, ...]

    def __post_init__(self):
        if self.w < 2 or self.h < 2:
            raise SynthSpecError(f"object {self.name}: size must be >= 2x2")
        if not self.phases:
            raise SynthSpecError(f"object {self.name}: needs at least one phase")


@dataclass(frozen=True)
class SynthSpec:
    width: int
    height: int
    n_frames: int
    objects: tuple[ObjectScript, ...]
    behaviors: dict[str, BehaviorStyle] = field(default_factory=lambda: dict(DEFAULT_BEHAVIORS))
    bg_color: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        if self.width < 8 or self.height < 8 or self.n_frames < 1:
            raise SynthSpecError("frame must be at least 8x8 with n_frames >= 1")
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise SynthSpecError(f"duplicate object names in {names}")
        for obj in self.objects:
            if not (0 <= obj.x and obj.x + obj.w <= self.width
                    and 0 <= obj.y and obj.y + obj.h <= self.height):
                raise SynthSpecError(f"object {obj.name} spawns outside the frame")
            for phase in obj.phases:
                if phase.behavior not in self.behaviors:
                    raise SynthSpecError(
                        f"object {obj.name} uses unknown behavior {phase.behavior!r}"
                    )
        for i, a in enumerate(self.objects):
            for b in self.objects[i + 1:]:
                if iou(BBox(a.x, a.y, a.w, a.h), BBox(b.x, b.y, b.w, b.h)) > 0:
                    raise SynthSpecError(
                        f"objects {a.name} and {b.name} spawn overlapping"
                    )


@dataclass
class SyntheticSequence:
    spec: SynthSpec
    frames: list[np.ndarray]                # 1-based frame i at frames[i-1]
    gt_run: TrackRun                        # boxes + masks per identity
    dense_labels: dict[str, dict[int, str]]
    sparse_labels: list[tuple[int, str, str]]


def _phase_at(phases: tuple[BehaviorPhase, ...], frame_offset: int) -> str:
    """Behavior active at 0-based offset; the last phase holds beyond the script."""
    t = frame_offset
    for phase in phases:
        if t < phase.n_frames:
            return phase.behavior
        t -= phase.n_frames
    return phases[-1].behavior


def _draw_pattern(frame: np.ndarray, x: int, y: int, obj: ObjectScript,
                  style: BehaviorStyle) -> None:
    color = np.array(obj.color, dtype=np.float64) * style.brightness
    dim = color * 0.25
    block = np.empty((obj.h, obj.w, 3), dtype=np.float64)
    ly = np.arange(obj.h)[:, None]
    lx = np.arange(obj.w)[None, :]
    if style.pattern == "solid":
        sel = np.ones((obj.h, obj.w), dtype=bool)
    elif style.pattern == "stripes":
        sel = (ly // 2 % 2 == 0) & np.ones_like(lx, dtype=bool)
    else:  # checker
        sel = (ly // 2 + lx // 2) % 2 == 0
    block[sel] = color
    block[~sel] = dim
    frame[y:y + obj.h, x:x + obj.w] = np.clip(np.rint(block), 0, 255).astype(np.uint8)


def make_synthetic_sequence(spec: SynthSpec) -> SyntheticSequence:
    """Render frames and exact ground truth (boxes, masks, labels) for a spec.

    Objects move with their phase's velocity and bounce off frame edges, so
    they never leave the canvas.  Positions stay integral whenever velocities
    are integral, keeping crops pixel-identical within a behavior.
    """
    frames: list[np.ndarray] = []
    entries: dict[str, dict[int, TrajectoryEntry]] = {o.name: {} for o in spec.objects}
    dense: dict[str, dict[int, str]] = {o.name: {} for o in spec.objects}
    sparse: list[tuple[int, str, str]] = []

    pos = {o.name: [float(o.x), float(o.y)] for o in spec.objects}
    vel_sign = {o.name: [1.0, 1.0] for o in spec.objects}
    last_behavior: dict[str, str] = {}

    for t in range(spec.n_frames):
        frame_index = t + 1
        frame = np.empty((spec.height, spec.width, 3), dtype=np.uint8)
        frame[:, :] = spec.bg_color
        for obj in spec.objects:
            behavior = _phase_at(obj.phases, t)
            style = spec.behaviors[behavior]
            if last_behavior.get(obj.name) != behavior:
                sparse.append((frame_index, obj.name, behavior))
                last_behavior[obj.name] = behavior

            x, y = pos[obj.name]
            ix, iy = int(round(x)), int(round(y))
            _draw_pattern(frame, ix, iy, obj, style)

            raster = np.zeros((spec.height, spec.width), dtype=np.uint8)
            raster[iy:iy + obj.h, ix:ix + obj.w] = 1
            entries[obj.name][frame_index] = TrajectoryEntry(
                box=BBox(float(ix), float(iy), float(obj.w), float(obj.h)),
                mask=mask_encode(raster))
            dense[obj.name][frame_index] = behavior

            vx = style.velocity[0] * vel_sign[obj.name][0]
            vy = style.velocity[1] * vel_sign[obj.name][1]
            nx, ny = x + vx, y + vy
            if nx < 0 or nx + obj.w > spec.width:
                vel_sign[obj.name][0] *= -1.0
                nx = x - vx
            if ny < 0 or ny + obj.h > spec.height:
                vel_sign[obj.name][1] *= -1.0
                ny = y - vy
            pos[obj.name] = [min(max(nx, 0.0), spec.width - obj.w),
                             min(max(ny, 0.0), spec.height - obj.h)]
        frames.append(frame)

    trajectories = tuple(Trajectory(identity=name, entries=entries[name])
                         for name in sorted(entries))
    return SyntheticSequence(
        spec=spec, frames=frames,
        gt_run=TrackRun(trajectories=trajectories, chunk_boundaries=(),
                        tracker_id="synth_gt"),
        dense_labels=dense, sparse_labels=sparse)


def lane_spec(n_objects: int = 4, n_frames: int = 600, width: int = 160,
              height: int = 160, phase_len: int = 50) -> SynthSpec:
    """Non-crossing default script: one horizontal lane per object, cycling
    through the three stock behaviors with staggered phase offsets."""
    if n_objects < 1:
        raise SynthSpecError("need at least one object")
    names = list(DEFAULT_BEHAVIORS)
    objects = []
    lane_h = height // n_objects
    size = max(8, min(24, lane_h - 8))
    colors = [(220, 60, 60), (60, 220, 60), (60, 60, 220), (220, 220, 60),
              (220, 60, 220), (60, 220, 220), (220, 140, 60), (140, 60, 220)]
    for k in range(n_objects):
        cycle = names[k % len(names):] + names[:k % len(names)]
        phases = []
        total = 0
        i = 0
        while total < n_frames:
            length = min(phase_len, n_frames - total)
            phases.append(BehaviorPhase(behavior=cycle[i % len(cycle)], n_frames=length))
            total += length
            i += 1
        objects.append(ObjectScript(
            name=f"blob_{k + 1:02d}", x=4.0, y=float(k * lane_h + (lane_h - size) // 2),
            w=size, h=size, color=colors[k % len(colors)], phases=tuple(phases)))
    return SynthSpec(width=width, height=height, n_frames=n_frames,
                     objects=tuple(objects))
