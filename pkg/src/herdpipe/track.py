"""Trajectory production (adapters + baseline), chunk chaining, and MOT scoring.

Tracking backends are adapters behind one interface: an external command, a
ground-truth oracle, and a greedy-IoU baseline that exists so the pipeline can
run end-to-end without any heavyweight model.  Chunks are processed strictly
in order; each identity's last box seeds the next chunk.

Scoring implements the CLEAR conventions (match carryover before Hungarian,
per-ground-truth switch counting) plus identity-level IDF1 from a single
global pairing.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detect import PROVENANCE_AUTO, Seed, SeedSet
from .errors import (
    ChunkTrackingError,
    FormatError,
    InvalidConfigError,
    NoSeedsError,
    UndefinedMetricsError,
)
from .formats import read_jsonl, require_fields, write_jsonl
from .geometry import BBox, Mask, Trajectory, TrajectoryEntry, iou, mask_to_bbox

log = logging.getLogger(__name__)


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment over min(rows, cols) pairs."""
    arr = np.asarray(cost, dtype=float)
    if arr.size == 0:
        return []
    if arr.ndim != 2:
        raise InvalidConfigError(f"cost matrix must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidConfigError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(arr)
    return list(zip(rows.tolist(), cols.tolist()))


@dataclass(frozen=True)
class TrackRun:
    trajectories: tuple[Trajectory, ...]
    chunk_boundaries: tuple[int, ...]
    tracker_id: str

    def __post_init__(self):
        names = [t.identity for t in self.trajectories]
        if len(set(names)) != len(names):
            raise InvalidConfigError(f"duplicate trajectory identities in {names}")

    def by_identity(self) -> dict[str, Trajectory]:
        return {t.identity: t for t in self.trajectories}

    def frames(self) -> list[int]:
        all_frames: set[int] = set()
        for t in self.trajectories:
            all_frames.update(t.frames())
        return sorted(all_frames)


def naive_iou_tracker(per_frame_boxes: list[list[BBox]], seeds: SeedSet,
                      iou_floor: float, first_frame_index: int = 1) -> TrackRun:
    """Greedy spatial-overlap baseline.

    Frame 0 boxes are assigned to seeds by maximal IoU; afterwards each frame's
    boxes are assigned to live identities by Hungarian assignment on IoU
    against each identity's most recent box.  Assignments below iou_floor are
    rejected, so the identity coasts (keeps its old box, gets no entry).
    Crossing objects therefore swap identities: a documented failure mode, not
    a bug.
    """
    if not seeds.seeds:
        raise NoSeedsError("cannot track with an empty seed set")
    identities = [s.object_name for s in seeds.seeds]
    last_box: dict[str, BBox] = {s.object_name: s.box for s in seeds.seeds}
    entries: dict[str, dict[int, TrajectoryEntry]] = {name: {} for name in identities}

    for offset, boxes in enumerate(per_frame_boxes):
        frame = first_frame_index + offset
        if not boxes:
            continue
        cost = np.ones((len(identities), len(boxes)))
        for i, name in enumerate(identities):
            for j, box in enumerate(boxes):
                cost[i, j] = 1.0 - iou(last_box[name], box)
        for i, j in hungarian(cost):
            if 1.0 - cost[i, j] < iou_floor:
                continue
            name = identities[i]
            entries[name][frame] = TrajectoryEntry(box=boxes[j])
            last_box[name] = boxes[j]

    trajectories = tuple(Trajectory(identity=name, entries=entries[name])
                         for name in identities if entries[name])
    return TrackRun(trajectories=trajectories, chunk_boundaries=(), tracker_id="naive")


def oracle_tracker(gt: TrackRun, seeds: SeedSet,
                   frame_range: tuple[int, int]) -> TrackRun:
    """Ground-truth playback adapter for desk-scale runs.

    Seeds are assigned to ground-truth identities by maximal IoU at the first
    frame of the range (one-to-one); each seed then replays its ground-truth
    trajectory within the range under the seed's name.
    """
    if not seeds.seeds:
        raise NoSeedsError("cannot track with an empty seed set")
    lo, hi = frame_range
    gt_by_id = gt.by_identity()
    gt_names = sorted(gt_by_id)
    seed_list = list(seeds.seeds)

    overlap = np.zeros((len(seed_list), len(gt_names)))
    for i, seed in enumerate(seed_list):
        for j, gname in enumerate(gt_names):
            entry = gt_by_id[gname].entries.get(lo)
            if entry is not None:
                overlap[i, j] = iou(seed.box, entry.box)
    assigned: dict[str, str] = {}
    for i, j in hungarian(1.0 - overlap):
        if overlap[i, j] <= 0.0:
            log.warning("seed %s overlaps no ground truth at frame %d; dropped",
                        seed_list[i].object_name, lo)
            continue
        assigned[seed_list[i].object_name] = gt_names[j]

    trajectories = []
    for seed_name, gname in sorted(assigned.items()):
        src = gt_by_id[gname]
        entries = {f: e for f, e in src.entries.items() if lo <= f <= hi}
        if entries:
            trajectories.append(Trajectory(identity=seed_name, entries=entries))
    return TrackRun(trajectories=tuple(trajectories), chunk_boundaries=(),
                    tracker_id="oracle")


def chain_chunks(prev: TrackRun, last_frame: int, lookback: int = 1) -> SeedSet:
    """Seed the next chunk from each identity's final box in the previous one.

    Identities with no entry in the final ``lookback`` frames are dropped with
    a warning; chaining is causal, so a fully empty handoff is an error.
    """
    if lookback < 1:
        raise InvalidConfigError(f"lookback must be >= 1, got {lookback}")
    seeds = []
    for traj in prev.trajectories:
        found = traj.last_entry_within(last_frame, lookback)
        if found is None:
            log.warning("identity %s absent from final %d frame(s) ending at %d; "
                        "dropped from chained seeds", traj.identity, lookback, last_frame)
            continue
        _, entry = found
        box = mask_to_bbox(entry.mask) if entry.mask is not None else entry.box
        seeds.append(Seed(object_name=traj.identity, box=box))
    if not seeds:
        raise NoSeedsError(
            f"no identity has an entry in the final {lookback} frame(s) of the chunk"
        )
    return SeedSet(frame_index=last_frame, seeds=tuple(seeds),
                   provenance=PROVENANCE_AUTO)


def chunked_track(tracker, chunk_ranges: list[tuple[int, int]], seeds: SeedSet,
                  lookback: int = 1, tracker_id: str = "chunked") -> TrackRun:
    """Run ``tracker(frame_range, seeds) -> TrackRun`` per chunk and chain.

    Per-chunk results merge by identity name; identities dropped at a boundary
    simply stop extending.
    """
    merged: dict[str, dict[int, TrajectoryEntry]] = {}
    boundaries = []
    current = seeds
    for idx, (lo, hi) in enumerate(chunk_ranges):
        result = tracker((lo, hi), current)
        for traj in result.trajectories:
            merged.setdefault(traj.identity, {}).update(traj.entries)
        if idx + 1 < len(chunk_ranges):
            boundaries.append(hi)
            current = chain_chunks(result, hi, lookback)
    trajectories = tuple(Trajectory(identity=name, entries=entries)
                         for name, entries in sorted(merged.items()))
    return TrackRun(trajectories=trajectories, chunk_boundaries=tuple(boundaries),
                    tracker_id=tracker_id)


# --- external tracker adapter ------------------------------------------------

def run_external_tracker(cmd_template: str, chunk_dir, seeds_file,
                         out_file, chunk_id: int = 0) -> dict[int, dict[str, Mask]]:
    """Invoke the external tracker command and parse its mask stream output.

    Any failure (nonzero exit, malformed output) halts the sequence: later
    chunks depend causally on this one.
    """
    cmd = cmd_template.format(chunk_dir=str(chunk_dir), seeds_file=str(seeds_file),
                              out_file=str(out_file))
    proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True)
    if proc.returncode != 0:
        raise ChunkTrackingError(
            f"tracker exited {proc.returncode} on chunk {chunk_id}:\n"
            f"command: {cmd}\nstdout: {proc.stdout}\nstderr: {proc.stderr}"
        )
    try:
        return read_mask_stream(out_file)
    except (FormatError, OSError) as exc:
        raise ChunkTrackingError(
            f"tracker output for chunk {chunk_id} unreadable: {exc}"
        ) from exc


def masks_to_run(per_frame: dict[int, dict[str, Mask]], tracker_id: str) -> TrackRun:
    entries: dict[str, dict[int, TrajectoryEntry]] = {}
    for frame in sorted(per_frame):
        for identity, mask in per_frame[frame].items():
            box = mask_to_bbox(mask)
            entries.setdefault(identity, {})[frame] = TrajectoryEntry(box=box, mask=mask)
    trajectories = tuple(Trajectory(identity=name, entries=e)
                         for name, e in sorted(entries.items()))
    return TrackRun(trajectories=trajectories, chunk_boundaries=(),
                    tracker_id=tracker_id)


# --- evaluation ---------------------------------------------------------------

@dataclass(frozen=True)
class MotReport:
    idf1: float
    idp: float
    idr: float
    recall: float
    precision: float
    mota: float
    num_switches: int
    fragmentations: int
    mostly_tracked: int
    partially_tracked: int
    mostly_lost: int
    num_tracklets: int
    avg_tracklet_length: float

    def metrics(self) -> dict:
        return {"idf1": self.idf1, "idp": self.idp, "idr": self.idr,
                "recall": self.recall, "precision": self.precision,
                "mota": self.mota, "num_switches": self.num_switches,
                "fragmentations": self.fragmentations,
                "mostly_tracked": self.mostly_tracked,
                "partially_tracked": self.partially_tracked,
                "mostly_lost": self.mostly_lost,
                "num_tracklets": self.num_tracklets,
                "avg_tracklet_length": self.avg_tracklet_length}


_DISALLOWED = 1e9  # cost poison: Hungarian must never pick a sub-threshold pair


def evaluate_mot(gt: TrackRun, pred: TrackRun, iou_thr: float = 0.5) -> MotReport:
    """CLEAR pass for MOTA/switches/fragmentations, global pairing for IDF1.

    Per frame, each ground truth first keeps its previous partner if the pair
    still overlaps >= iou_thr (matches persist across gaps); the remainder go
    through Hungarian on 1 - IoU with sub-threshold pairs disallowed.  A
    switch is a ground truth changing partners between its consecutive
    matched frames.
    """
    gt_map = {t.identity: t for t in gt.trajectories}
    pred_map = {t.identity: t for t in pred.trajectories}
    total_gt = sum(len(t.entries) for t in gt.trajectories)
    total_pred = sum(len(t.entries) for t in pred.trajectories)
    if total_gt == 0:
        raise UndefinedMetricsError("ground truth has no entries; metrics undefined")

    frames = sorted(set(gt.frames()) | set(pred.frames()))
    gt_ids = sorted(gt_map)
    pred_ids = sorted(pred_map)

    last_partner: dict[str, str] = {}   # gt identity -> partner at most recent matched frame
    matched_frames: dict[str, int] = {g: 0 for g in gt_ids}
    match_flags: dict[str, list[bool]] = {g: [] for g in gt_ids}  # per gt-present frame
    fp = fn = idsw = n_matches = 0

    for frame in frames:
        gt_here = [g for g in gt_ids if frame in gt_map[g].entries]
        pred_here = [p for p in pred_ids if frame in pred_map[p].entries]
        gt_boxes = {g: gt_map[g].entries[frame].box for g in gt_here}
        pred_boxes = {p: pred_map[p].entries[frame].box for p in pred_here}

        matches: dict[str, str] = {}
        free_pred = set(pred_here)
        for g in gt_here:
            p = last_partner.get(g)
            if p in free_pred and iou(gt_boxes[g], pred_boxes[p]) >= iou_thr:
                matches[g] = p
                free_pred.discard(p)

        rest_gt = [g for g in gt_here if g not in matches]
        rest_pred = sorted(free_pred)
        if rest_gt and rest_pred:
            cost = np.full((len(rest_gt), len(rest_pred)), _DISALLOWED)
            for i, g in enumerate(rest_gt):
                for j, p in enumerate(rest_pred):
                    v = iou(gt_boxes[g], pred_boxes[p])
                    if v >= iou_thr:
                        cost[i, j] = 1.0 - v
            for i, j in hungarian(cost):
                if cost[i, j] >= _DISALLOWED:
                    continue
                matches[rest_gt[i]] = rest_pred[j]

        for g in gt_here:
            p = matches.get(g)
            match_flags[g].append(p is not None)
            if p is None:
                fn += 1
                continue
            n_matches += 1
            matched_frames[g] += 1
            prev = last_partner.get(g)
            if prev is not None and prev != p:
                idsw += 1
            last_partner[g] = p
        fp += len(pred_here) - len(matches)

    frag = 0
    for g in gt_ids:
        flags = match_flags[g]
        seen_match = False
        in_gap = False
        for flag in flags:
            if flag:
                if seen_match and in_gap:
                    frag += 1
                seen_match = True
                in_gap = False
            elif seen_match:
                in_gap = True

    mt = pt = ml = 0
    for g in gt_ids:
        present = len(gt_map[g].entries)
        coverage = matched_frames[g] / present if present else 0.0
        if coverage >= 0.8:
            mt += 1
        elif coverage < 0.2:
            ml += 1
        else:
            pt += 1

    # IDF1: one global pairing of identities maximizing jointly-overlapping frames.
    overlap = np.zeros((len(gt_ids), len(pred_ids)))
    for i, g in enumerate(gt_ids):
        for j, p in enumerate(pred_ids):
            common = set(gt_map[g].entries) & set(pred_map[p].entries)
            overlap[i, j] = sum(
                1 for f in common
                if iou(gt_map[g].entries[f].box, pred_map[p].entries[f].box) >= iou_thr
            )
    idtp = 0.0
    if overlap.size:
        for i, j in hungarian(-overlap):
            idtp += overlap[i, j]
    idf1 = 2.0 * idtp / (total_gt + total_pred) if (total_gt + total_pred) else 0.0
    idp = idtp / total_pred if total_pred else 0.0
    idr = idtp / total_gt

    lengths = [len(t.entries) for t in pred.trajectories]
    return MotReport(
        idf1=idf1, idp=idp, idr=idr,
        recall=n_matches / total_gt,
        precision=n_matches / total_pred if total_pred else 0.0,
        mota=1.0 - (fn + fp + idsw) / total_gt,
        num_switches=idsw,
        fragmentations=frag,
        mostly_tracked=mt, partially_tracked=pt, mostly_lost=ml,
        num_tracklets=len(pred.trajectories),
        avg_tracklet_length=sum(lengths) / len(lengths) if lengths else 0.0,
    )


# --- file formats -------------------------------------------------------------

def write_tracks(path, run: TrackRun) -> int:
    records = []
    for traj in run.trajectories:
        for frame in traj.frames():
            entry = traj.entries[frame]
            rec = {"frame_index": frame, "identity": traj.identity,
                   "x": entry.box.x, "y": entry.box.y,
                   "w": entry.box.w, "h": entry.box.h}
            if entry.mask is not None:
                rec["mask"] = {"width": entry.mask.width, "height": entry.mask.height,
                               "counts": list(entry.mask.counts)}
            records.append(rec)
    records.sort(key=lambda r: (r["frame_index"], r["identity"]))
    return write_jsonl(path, records)


def read_tracks(path, tracker_id: str = "file") -> TrackRun:
    entries: dict[str, dict[int, TrajectoryEntry]] = {}
    for rec in read_jsonl(path):
        require_fields(rec, ("frame_index", "identity", "x", "y", "w", "h"), str(path))
        box = BBox(float(rec["x"]), float(rec["y"]), float(rec["w"]), float(rec["h"]))
        mask = None
        if "mask" in rec:
            m = rec["mask"]
            require_fields(m, ("width", "height", "counts"), f"{path} mask")
            mask = Mask(width=int(m["width"]), height=int(m["height"]),
                        counts=tuple(int(c) for c in m["counts"]))
        frame = int(rec["frame_index"])
        ident = str(rec["identity"])
        per = entries.setdefault(ident, {})
        if frame in per:
            raise FormatError(f"{path}: duplicate entry for {ident} at frame {frame}")
        per[frame] = TrajectoryEntry(box=box, mask=mask)
    trajectories = tuple(Trajectory(identity=name, entries=e)
                         for name, e in sorted(entries.items()))
    return TrackRun(trajectories=trajectories, chunk_boundaries=(), tracker_id=tracker_id)


def write_mask_stream(path, per_frame: dict[int, dict[str, Mask]]) -> int:
    records = []
    for frame in sorted(per_frame):
        for identity in sorted(per_frame[frame]):
            m = per_frame[frame][identity]
            records.append({"frame_index": frame, "identity": identity,
                            "width": m.width, "height": m.height,
                            "counts": list(m.counts)})
    return write_jsonl(path, records)


def read_mask_stream(path) -> dict[int, dict[str, Mask]]:
    per_frame: dict[int, dict[str, Mask]] = {}
    for rec in read_jsonl(path):
        require_fields(rec, ("frame_index", "identity", "width", "height", "counts"),
                       str(path))
        mask = Mask(width=int(rec["width"]), height=int(rec["height"]),
                    counts=tuple(int(c) for c in rec["counts"]))
        per_frame.setdefault(int(rec["frame_index"]), {})[str(rec["identity"])] = mask
    return per_frame
