"""Exact t-SNE: perplexity bisection, early exaggeration, momentum descent.

No tree approximations; inputs stay at desk scale (a few thousand points).
Deterministic given the seed, including the jitter applied to duplicate rows.
Reported KL divergences (initial and final) use the plain, non-exaggerated
affinities, so they are comparable across the exaggeration boundary.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import InvalidConfigError

_EPS = 1e-12


def _squared_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def _row_affinities(d2_row: np.ndarray, target_entropy: float,
                    tol: float = 1e-5, max_iter: int = 64) -> np.ndarray:
    """Bisection on precision beta so the row's Shannon entropy hits the target."""
    beta, lo, hi = 1.0, 0.0, np.inf
    p = np.zeros_like(d2_row)
    for _ in range(max_iter):
        p = np.exp(-d2_row * beta)
        total = p.sum()
        if total <= 0:
            entropy = 0.0
            p[:] = 0.0
        else:
            p /= total
            nz = p > 0
            entropy = float(-np.sum(p[nz] * np.log(p[nz])))
        diff = entropy - target_entropy
        if abs(diff) < tol:
            break
        if diff > 0:  # too flat, sharpen
            lo = beta
            beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
        else:
            hi = beta
            beta = 0.5 * (beta + lo)
    return p


def joint_affinities(x: np.ndarray, perplexity: float) -> np.ndarray:
    n = x.shape[0]
    d2 = _squared_distances(x)
    target = float(np.log(perplexity))
    cond = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d2[i], i)
        p = _row_affinities(row, target)
        cond[i, np.arange(n) != i] = p
    joint = (cond + cond.T) / (2.0 * n)
    return np.maximum(joint, _EPS)


def _q_distribution(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + _squared_distances(y))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, _EPS), num


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = ~np.eye(p.shape[0], dtype=bool)
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def _deduplicate(x: np.ndarray, seed: int) -> np.ndarray:
    """Seeded epsilon-jitter on duplicate rows so bandwidths stay solvable."""
    _, inverse, counts = np.unique(x, axis=0, return_inverse=True, return_counts=True)
    dup_rows = np.flatnonzero(counts[inverse] > 1)
    if dup_rows.size == 0:
        return x
    rng = np.random.default_rng([seed, 0xD1CE])
    out = x.copy()
    scale = max(float(np.abs(x).max()), 1.0) * 1e-7
    out[dup_rows] += rng.standard_normal((dup_rows.size, x.shape[1])) * scale
    return out


def tsne(x: np.ndarray, perplexity: float = 30.0, iterations: int = 1000,
         seed: int = 0, learning_rate: float = 200.0,
         early_exaggeration: float = 12.0,
         exaggeration_iters: int = 250) -> tuple[np.ndarray, float, float]:
    """Project to 2-D; returns (points, kl_initial, kl_final)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise InvalidConfigError(f"need at least 3 points in a 2-D array, got shape {x.shape}")
    n = x.shape[0]
    if not 0 < perplexity < n:
        raise InvalidConfigError(f"perplexity must be in (0, n={n}), got {perplexity}")
    if iterations < 1:
        raise InvalidConfigError(f"iterations must be >= 1, got {iterations}")

    x = _deduplicate(x, seed)
    p = joint_affinities(x, perplexity)

    # short runs must still end on the true objective, not the exaggerated
    # surrogate, so the reported final KL reflects what the descent optimized
    exaggeration_iters = min(exaggeration_iters, iterations // 2)

    rng = np.random.default_rng(seed)
    y = rng.standard_normal((n, 2)) * 1e-4
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)

    q, _ = _q_distribution(y)
    kl_initial = _kl(p, q)

    for it in range(iterations):
        p_eff = p * early_exaggeration if it < exaggeration_iters else p
        q, num = _q_distribution(y)
        pq = (p_eff - q) * num
        grad = 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ y)
        momentum = 0.5 if it < exaggeration_iters else 0.8
        # per-coordinate gains damp the oscillation a fixed step rate causes
        gains = np.where(np.sign(grad) != np.sign(velocity), gains + 0.2, gains * 0.8)
        np.clip(gains, 0.01, None, out=gains)
        velocity = momentum * velocity - learning_rate * gains * grad
        y = y + velocity

    q, _ = _q_distribution(y)
    kl_final = _kl(p, q)
    return y, kl_initial, kl_final


class TSNE(BaseEstimator):
    """fit_transform-style wrapper; attributes expose the KL checkpoints."""

    def __init__(self, perplexity=30.0, iterations=1000, seed=0,
                 learning_rate=200.0, early_exaggeration=12.0,
                 exaggeration_iters=250):
        self.perplexity = perplexity
        self.iterations = iterations
        self.seed = seed
        self.learning_rate = learning_rate
        self.early_exaggeration = early_exaggeration
        self.exaggeration_iters = exaggeration_iters

    def fit(self, X, y=None):
        self.fit_transform(X)
        return self

    def fit_transform(self, X, y=None):
        points, kl_init, kl_final = tsne(
            np.asarray(X, dtype=np.float64), perplexity=self.perplexity,
            iterations=self.iterations, seed=self.seed,
            learning_rate=self.learning_rate,
            early_exaggeration=self.early_exaggeration,
            exaggeration_iters=self.exaggeration_iters)
        self.embedding_ = points
        self.kl_initial_ = kl_init
        self.kl_final_ = kl_final
        return points
