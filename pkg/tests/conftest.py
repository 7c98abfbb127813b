"""Shared generators and converters for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from herdpipe.geometry import BBox, Detection, Trajectory, TrajectoryEntry
from herdpipe.track import TrackRun


def run_from_frames(frames: dict[int, dict[str, tuple]], tracker_id: str) -> TrackRun:
    """frame -> identity -> (x, y, w, h) into a TrackRun."""
    per_id: dict[str, dict[int, TrajectoryEntry]] = {}
    for frame, boxes in frames.items():
        for ident, (x, y, w, h) in boxes.items():
            per_id.setdefault(ident, {})[frame] = TrajectoryEntry(box=BBox(x, y, w, h))
    trajectories = tuple(Trajectory(identity=i, entries=per_id[i])
                         for i in sorted(per_id))
    return TrackRun(trajectories=trajectories, chunk_boundaries=(), tracker_id=tracker_id)


def random_mot_scenario(rng: np.random.Generator,
                        max_ids: int = 8,
                        max_frames: int = 50) -> tuple[dict, dict]:
    """A ground-truth scenario and a deliberately flawed tracker output.

    The prediction inherits ground truth with box jitter, dropped frames,
    identity swaps part-way through, and spurious boxes, so every CLEAR
    bookkeeping path (switches, fragmentations, FP, FN, gaps) gets exercised.
    Boxes are continuous random floats, which keeps assignment costs free of
    exact ties.
    """
    n_ids = int(rng.integers(1, max_ids + 1))
    n_frames = int(rng.integers(5, max_frames + 1))
    idents = [f"g{i}" for i in range(n_ids)]

    pos = {g: rng.uniform(10, 180, size=2) for g in idents}
    size = {g: rng.uniform(12, 30, size=2) for g in idents}
    vel = {g: rng.uniform(-3, 3, size=2) for g in idents}
    appear = {g: int(rng.integers(1, max(2, n_frames // 2))) for g in idents}
    vanish = {g: int(rng.integers(appear[g], n_frames + 1)) for g in idents}

    gt: dict[int, dict[str, tuple]] = {}
    for frame in range(1, n_frames + 1):
        here = {}
        for g in idents:
            if not (appear[g] <= frame <= vanish[g]):
                continue
            pos[g] = pos[g] + vel[g]
            here[g] = (float(pos[g][0]), float(pos[g][1]),
                       float(size[g][0]), float(size[g][1]))
        if here:
            gt[frame] = here

    # prediction: per-identity relabeling that changes at a random frame
    labels = {g: f"p{i}" for i, g in enumerate(idents)}
    swap_at = None
    if n_ids >= 2 and rng.random() < 0.7:
        swap_at = int(rng.integers(2, n_frames + 1))
        a, b = rng.choice(idents, size=2, replace=False)
    pred: dict[int, dict[str, tuple]] = {}
    for frame, here in gt.items():
        if swap_at is not None and frame == swap_at:
            labels[a], labels[b] = labels[b], labels[a]
        out = {}
        for g, (x, y, w, h) in here.items():
            if rng.random() < 0.15:  # missed detection
                continue
            jitter = rng.uniform(-3, 3, size=2)
            scale = rng.uniform(0.85, 1.15, size=2)
            out[labels[g]] = (x + float(jitter[0]), y + float(jitter[1]),
                              w * float(scale[0]), h * float(scale[1]))
        if rng.random() < 0.2:  # spurious detection
            out[f"fp{frame}"] = (float(rng.uniform(0, 200)), float(rng.uniform(0, 200)),
                                 float(rng.uniform(8, 25)), float(rng.uniform(8, 25)))
        if out:
            pred[frame] = out
    if not pred:  # metrics need at least something predicted
        frame = min(gt)
        g = next(iter(gt[frame]))
        pred[frame] = {"p0": gt[frame][g]}
    return gt, pred


def random_detection_scene(rng: np.random.Generator, n_frames: int = 6,
                           with_ties: bool = True):
    """Paired ground truth and scored detections for sweep cross-checks.

    Returns (gt_boxes, det_objs, gt_tuples, det_tuples): the first two in
    package types, the last two as plain tuples for the reference code.
    """
    gt_boxes: dict[int, list[BBox]] = {}
    det_objs: dict[int, list[Detection]] = {}
    gt_tuples: dict[int, list[tuple]] = {}
    det_tuples: dict[int, list[tuple]] = {}
    tie_pool = [round(float(s), 1) for s in rng.uniform(0.1, 1.0, size=4)]
    for frame in range(1, n_frames + 1):
        n_gt = int(rng.integers(0, 5))
        boxes = []
        for _ in range(n_gt):
            boxes.append((float(rng.uniform(0, 160)), float(rng.uniform(0, 160)),
                          float(rng.uniform(10, 40)), float(rng.uniform(10, 40))))
        dets = []
        for x, y, w, h in boxes:
            if rng.random() < 0.8:  # detection near this ground truth
                score = (float(rng.choice(tie_pool)) if with_ties and rng.random() < 0.5
                         else float(rng.uniform(0.05, 1.0)))
                dets.append((score, (x + float(rng.uniform(-6, 6)),
                                     y + float(rng.uniform(-6, 6)),
                                     w * float(rng.uniform(0.8, 1.2)),
                                     h * float(rng.uniform(0.8, 1.2)))))
        for _ in range(int(rng.integers(0, 3))):  # background firings
            score = (float(rng.choice(tie_pool)) if with_ties and rng.random() < 0.5
                     else float(rng.uniform(0.05, 1.0)))
            dets.append((score, (float(rng.uniform(0, 160)), float(rng.uniform(0, 160)),
                                 float(rng.uniform(8, 30)), float(rng.uniform(8, 30)))))
        gt_tuples[frame] = boxes
        det_tuples[frame] = dets
        gt_boxes[frame] = [BBox(*b) for b in boxes]
        det_objs[frame] = [Detection(frame_index=frame, box=BBox(*b), score=s,
                                     label="pig") for s, b in dets]
    if all(len(v) == 0 for v in gt_tuples.values()):
        gt_tuples[1] = [(10.0, 10.0, 20.0, 20.0)]
        gt_boxes[1] = [BBox(10.0, 10.0, 20.0, 20.0)]
    return gt_boxes, det_objs, gt_tuples, det_tuples


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
