"""Dataset mechanics: stratified splitting, class weighting, temporal windows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidClassError, InvalidConfigError, StratificationError

DEFAULT_RATIOS = (0.70, 0.15, 0.15)


def stratified_split(labels, ratios=DEFAULT_RATIOS, seed: int = 0):
    """Per-class largest-remainder allocation into (train, val, test) index sets.

    Counts are deterministic: each class's leftover seats go to the splits with
    the largest fractional remainders, remainder ties to the latest split
    (test, then val).  The seed only shuffles which examples fill the seats.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidConfigError(f"ratios must be 3 non-negatives summing to 1, got {ratios}")
    labels = np.asarray(labels)
    if labels.size == 0:
        raise InvalidConfigError("cannot split an empty label list")
    rng = np.random.default_rng(seed)
    splits: list[list[int]] = [[], [], []]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 3:
            raise StratificationError(
                f"class {cls!r} has only {idx.size} example(s); at least 3 required"
            )
        counts = _largest_remainder(idx.size, ratios)
        rng.shuffle(idx)
        start = 0
        for k, count in enumerate(counts):
            splits[k].extend(idx[start:start + count].tolist())
            start += count
    return tuple(np.array(sorted(s), dtype=int) for s in splits)


def _largest_remainder(n: int, ratios: tuple[float, float, float]) -> list[int]:
    exact = [n * r for r in ratios]
    base = [int(np.floor(e)) for e in exact]
    leftover = n - sum(base)
    order = sorted(range(3), key=lambda k: (-(exact[k] - base[k]), -k))
    for k in order[:leftover]:
        base[k] += 1
    return base


def class_weights(counts) -> np.ndarray:
    """Inverse-frequency weights normalized to sum to 1."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        raise InvalidConfigError("no classes to weight")
    if np.any(counts <= 0):
        bad = np.flatnonzero(counts <= 0).tolist()
        raise InvalidClassError(f"class index(es) {bad} have zero examples")
    inv = 1.0 / counts
    return inv / inv.sum()


@dataclass(frozen=True)
class WindowExample:
    sequence: np.ndarray  # (T, d) float64
    label: str
    identity: str
    start_frame: int

    def __post_init__(self):
        if self.sequence.ndim != 2:
            raise InvalidConfigError(
                f"window sequence must be (T, d), got shape {self.sequence.shape}"
            )


def sliding_windows(per_identity: dict[str, list[tuple[int, np.ndarray, str]]],
                    window: int, stride: int,
                    majority_floor: float = 0.5) -> list[WindowExample]:
    """Fixed-length windows over each identity's consecutive labeled frames.

    A window's label is its modal frame label; windows whose modal fraction is
    not strictly above majority_floor are discarded (at the default 0.5 an
    exact tie dies).  Mode ties above the floor break to the label appearing
    first in the window.
    """
    if window < 1 or stride < 1:
        raise InvalidConfigError(f"window and stride must be >= 1, got {window}, {stride}")
    out: list[WindowExample] = []
    for identity in sorted(per_identity):
        frames = sorted(per_identity[identity], key=lambda t: t[0])
        for run in _consecutive_runs(frames):
            for start in range(0, len(run) - window + 1, stride):
                chunk = run[start:start + window]
                labels = [lab for _, _, lab in chunk]
                label, count = _mode_first(labels)
                if count / window <= majority_floor:
                    continue
                seq = np.stack([vec for _, vec, _ in chunk]).astype(np.float64)
                out.append(WindowExample(sequence=seq, label=label,
                                         identity=identity, start_frame=chunk[0][0]))
    return out


def _consecutive_runs(frames):
    runs, current = [], []
    for item in frames:
        if current and item[0] != current[-1][0] + 1:
            runs.append(current)
            current = []
        current.append(item)
    if current:
        runs.append(current)
    return runs


def _mode_first(labels: list[str]) -> tuple[str, int]:
    counts: dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    best = max(counts.values())
    for lab in labels:  # first occurrence wins a tie
        if counts[lab] == best:
            return lab, best
    raise AssertionError("unreachable")


def examples_from_store(store):
    """Labeled frame-level examples from an embedding store.

    Returns (X float64 (N,d), labels list, identities list, frame indices list);
    unlabeled records are skipped.
    """
    X, labels, identities, frames = [], [], [], []
    for rec in store.records:
        if rec.label is None:
            continue
        X.append(store.vector(rec).astype(np.float64))
        labels.append(rec.label)
        identities.append(rec.identity or "")
        frames.append(rec.frame_global_index if rec.frame_global_index is not None else -1)
    if not X:
        raise InvalidConfigError(f"store {store.root} has no labeled records")
    return np.stack(X), labels, identities, frames


def windows_by_identity(store) -> dict[str, list[tuple[int, np.ndarray, str]]]:
    """Group a store's labeled records by identity for window construction."""
    per: dict[str, list[tuple[int, np.ndarray, str]]] = {}
    for rec in store.records:
        if rec.label is None or rec.identity is None or rec.frame_global_index is None:
            continue
        per.setdefault(rec.identity, []).append(
            (rec.frame_global_index, store.vector(rec).astype(np.float64), rec.label))
    return per
