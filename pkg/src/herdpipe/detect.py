"""Candidate-detection ingest, two-stage filtering, seeding, and evaluation.

The filter keeps target-class detections above a confidence threshold; the
survivors of the first frame become named tracking seeds.  Evaluation follows
the usual per-frame protocol: greedy score-ordered one-to-one matching at an
IoU threshold, pooled operating-point metrics, and average precision as the
area under the all-points precision-recall curve swept over the distinct
detection scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, InvalidConfigError, NoSeedsError, UndefinedRecallError
from .geometry import BBox, Detection, iou
from .formats import read_jsonl, require_fields, write_jsonl

PROVENANCE_AUTO = "auto_filtered"
PROVENANCE_HUMAN = "human_reviewed"
PROVENANCES = (PROVENANCE_AUTO, PROVENANCE_HUMAN)


@dataclass(frozen=True)
class Seed:
    object_name: str
    box: BBox


@dataclass(frozen=True)
class SeedSet:
    frame_index: int
    seeds: tuple[Seed, ...]
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise InvalidConfigError(f"unknown provenance {self.provenance!r}")
        names = [s.object_name for s in self.seeds]
        if len(set(names)) != len(names):
            raise InvalidConfigError(f"duplicate seed names in {names}")


def filter_detections(dets: list[Detection], target_labels, threshold: float) -> list[Detection]:
    """Two-stage filter: target class membership, then confidence >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise InvalidConfigError(f"threshold must be in [0,1], got {threshold}")
    labels = set(target_labels)
    return [d for d in dets if d.label in labels and d.score >= threshold]


def make_seeds(filtered: list[Detection], naming_prefix: str,
               frame_size: tuple[float, float] | None = None) -> SeedSet:
    """Name surviving first-frame detections <prefix>_01.. by descending score.

    Score ties break by (x, y) ascending so naming is deterministic.
    """
    if not filtered:
        raise NoSeedsError("no detections survived filtering; tracking cannot start")
    frames = {d.frame_index for d in filtered}
    if len(frames) != 1:
        raise InvalidConfigError(f"seeds must come from a single frame, got {sorted(frames)}")
    ordered = sorted(filtered, key=lambda d: (-d.score, d.box.x, d.box.y))
    seeds = []
    for i, det in enumerate(ordered, start=1):
        box = det.box
        if frame_size is not None:
            box = box.clamped(frame_size[0], frame_size[1])
        seeds.append(Seed(object_name=f"{naming_prefix}_{i:02d}", box=box))
    return SeedSet(frame_index=frames.pop(), seeds=tuple(seeds), provenance=PROVENANCE_AUTO)


@dataclass(frozen=True)
class FrameMatch:
    pairs: tuple[tuple[int, int, float], ...]  # (det_idx, gt_idx, iou)
    unmatched_gt: tuple[int, ...]              # FN indices
    unmatched_dets: tuple[int, ...]            # FP indices


def match_frame(gt: list[BBox], dets: list[Detection], iou_thr: float) -> FrameMatch:
    """Greedy one-to-one matching in descending score order.

    Each detection claims the still-unmatched ground-truth box with the highest
    IoU >= iou_thr; IoU ties go to the lowest GT index.  Score ties keep input
    order (stable sort), pinning the semantics exactly.
    """
    if not 0.0 < iou_thr <= 1.0:
        raise InvalidConfigError(f"iou_thr must be in (0,1], got {iou_thr}")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken: set[int] = set()
    pairs: list[tuple[int, int, float]] = []
    unmatched_dets: list[int] = []
    for di in order:
        best_gi, best_iou = -1, 0.0
        for gi, g in enumerate(gt):
            if gi in taken:
                continue
            v = iou(dets[di].box, g)
            if v >= iou_thr and v > best_iou:
                best_gi, best_iou = gi, v
        if best_gi >= 0:
            taken.add(best_gi)
            pairs.append((di, best_gi, best_iou))
        else:
            unmatched_dets.append(di)
    unmatched_gt = tuple(gi for gi in range(len(gt)) if gi not in taken)
    return FrameMatch(tuple(pairs), unmatched_gt, tuple(sorted(unmatched_dets)))


@dataclass(frozen=True)
class DetectionReport:
    ap: float
    precision: float
    recall: float
    f1: float
    tpr: float
    fpr: float
    miss_rate: float
    mean_iou: float
    count_mae: float
    # Operating-point bookkeeping: Table-style metrics only make sense at a
    # stated confidence threshold, so the report carries it.
    iou_threshold: float
    score_threshold: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    n_frames: int = 0

    def metrics(self) -> dict:
        return {"ap": self.ap, "precision": self.precision, "recall": self.recall,
                "f1": self.f1, "tpr": self.tpr, "fpr": self.fpr,
                "miss_rate": self.miss_rate, "mean_iou": self.mean_iou,
                "count_mae": self.count_mae}


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def average_precision(scored_flags: list[tuple[float, bool]], total_gt: int) -> float:
    """Area under the all-points PR curve.

    ``scored_flags`` holds (score, is_true_positive) for every detection under
    the full greedy matching (no score cutoff).  Thresholds sweep the distinct
    score values descending; detections sharing a score enter as one group, so
    a tie never splits into fractional operating points.
    """
    if total_gt <= 0:
        raise UndefinedRecallError("no ground-truth boxes; recall undefined")
    if not scored_flags:
        return 0.0
    ordered = sorted(scored_flags, key=lambda t: -t[0])
    points: list[tuple[float, float]] = []  # (recall, precision)
    tp = fp = 0
    i = 0
    n = len(ordered)
    while i < n:
        j = i
        while j < n and ordered[j][0] == ordered[i][0]:
            tp += 1 if ordered[j][1] else 0
            fp += 0 if ordered[j][1] else 1
            j += 1
        points.append((tp / total_gt, _safe_div(tp, tp + fp)))
        i = j
    # Monotone non-increasing precision envelope, then rectangle sum.
    envelope = [0.0] * len(points)
    best = 0.0
    for k in range(len(points) - 1, -1, -1):
        best = max(best, points[k][1])
        envelope[k] = best
    area = 0.0
    prev_r = 0.0
    for (r, _), p_env in zip(points, envelope):
        area += (r - prev_r) * p_env
        prev_r = r
    return area


def evaluate_detection(gt_frames: dict[int, list[BBox]],
                       det_frames: dict[int, list[Detection]],
                       iou_thr: float = 0.5,
                       score_threshold: float = 0.5) -> DetectionReport:
    """Pooled detection metrics at the operating threshold plus threshold-swept AP.

    Note the naming quirk: fpr here is FP/(TP+FP), the false-discovery rate,
    kept under this name for report compatibility.
    """
    total_gt = sum(len(v) for v in gt_frames.values())
    if total_gt == 0:
        raise UndefinedRecallError("no ground-truth boxes in any frame; recall undefined")

    frames = sorted(set(gt_frames) | set(det_frames))
    tp = fp = fn = 0
    ious: list[float] = []
    count_err = 0.0
    scored_flags: list[tuple[float, bool]] = []

    for f in frames:
        gt = gt_frames.get(f, [])
        dets = det_frames.get(f, [])
        # AP uses the unthresholded pool; greedy matching over a score-sorted
        # prefix equals greedy over the full list, so one pass serves every
        # threshold.
        full = match_frame(gt, dets, iou_thr) if dets else FrameMatch((), tuple(range(len(gt))), ())
        matched_dets = {di for di, _, _ in full.pairs}
        for di, d in enumerate(dets):
            scored_flags.append((d.score, di in matched_dets))

        kept = [d for d in dets if d.score >= score_threshold]
        m = match_frame(gt, kept, iou_thr) if kept else FrameMatch((), tuple(range(len(gt))), ())
        tp += len(m.pairs)
        fp += len(m.unmatched_dets)
        fn += len(m.unmatched_gt)
        ious.extend(v for _, _, v in m.pairs)
        count_err += abs(len(kept) - len(gt))

    precision = _safe_div(tp, tp + fp)
    recall = tp / total_gt
    f1 = _safe_div(2 * precision * recall, precision + recall)
    report = DetectionReport(
        ap=average_precision(scored_flags, total_gt),
        precision=precision,
        recall=recall,
        f1=f1,
        tpr=recall,
        fpr=_safe_div(fp, tp + fp),
        miss_rate=1.0 - recall,
        mean_iou=sum(ious) / len(ious) if ious else 0.0,
        count_mae=count_err / len(frames) if frames else 0.0,
        iou_threshold=iou_thr,
        score_threshold=score_threshold,
        tp=tp, fp=fp, fn=fn, n_frames=len(frames),
    )
    return report


# --- file formats -----------------------------------------------------------

DETECTION_FIELDS = ("frame_index", "label", "score", "x", "y", "w", "h")


def write_detections(path, dets: list[Detection]) -> int:
    return write_jsonl(path, [
        {"frame_index": d.frame_index, "label": d.label, "score": d.score,
         "x": d.box.x, "y": d.box.y, "w": d.box.w, "h": d.box.h}
        for d in dets
    ])


def read_detections(path) -> list[Detection]:
    out = []
    for rec in read_jsonl(path):
        require_fields(rec, DETECTION_FIELDS, str(path))
        out.append(Detection(
            frame_index=int(rec["frame_index"]), label=str(rec["label"]),
            score=float(rec["score"]),
            box=BBox(float(rec["x"]), float(rec["y"]), float(rec["w"]), float(rec["h"])),
        ))
    return out


def detections_by_frame(dets: list[Detection]) -> dict[int, list[Detection]]:
    frames: dict[int, list[Detection]] = {}
    for d in dets:
        frames.setdefault(d.frame_index, []).append(d)
    return frames


def write_seeds(path, seed_set: SeedSet) -> int:
    return write_jsonl(path, [
        {"object_name": s.object_name, "x": s.box.x, "y": s.box.y,
         "w": s.box.w, "h": s.box.h, "provenance": seed_set.provenance}
        for s in seed_set.seeds
    ])


def read_seeds(path, frame_index: int = 1) -> SeedSet:
    seeds = []
    provenances = set()
    for rec in read_jsonl(path):
        require_fields(rec, ("object_name", "x", "y", "w", "h", "provenance"), str(path))
        seeds.append(Seed(object_name=str(rec["object_name"]),
                          box=BBox(float(rec["x"]), float(rec["y"]),
                                   float(rec["w"]), float(rec["h"]))))
        provenances.add(rec["provenance"])
    if not seeds:
        raise NoSeedsError(f"seed file {path} is empty")
    if len(provenances) != 1:
        raise FormatError(f"seed file {path} mixes provenances {sorted(provenances)}")
    return SeedSet(frame_index=frame_index, seeds=tuple(seeds), provenance=provenances.pop())
