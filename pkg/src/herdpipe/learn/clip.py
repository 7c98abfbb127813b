"""Contrastive image-text loss and the zero-shot decision rule.

The logits here are temperature-times-cosine (L_ij = tau * S_ij), a
multiplicative scaling: the widely used variant divides by the temperature
instead, so tau plays the inverse role of what some readers may expect.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidConfigError, UndefinedCosineError


def _normalize_rows(x: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        bad = np.flatnonzero(norms == 0.0).tolist()
        raise UndefinedCosineError(f"{what} row(s) {bad} have zero norm; cosine undefined")
    return x / norms[:, None], norms


def clip_loss(image_embs: np.ndarray, text_embs: np.ndarray,
              tau: float = 1.0) -> tuple[float, np.ndarray, np.ndarray]:
    """Symmetric cross-entropy over cosine logits; returns (loss, dI, dT).

    Row i of both inputs is a matched pair.  Loss averages the row-wise
    (image-to-text) and column-wise (text-to-image) cross-entropies against
    the diagonal; gradients are exact through the L2 normalization.
    """
    I = np.asarray(image_embs, dtype=np.float64)
    T = np.asarray(text_embs, dtype=np.float64)
    if I.ndim != 2 or T.ndim != 2 or I.shape != T.shape:
        raise InvalidConfigError(
            f"matched (N, d) batches required, got {I.shape} and {T.shape}"
        )
    if tau <= 0:
        raise InvalidConfigError(f"temperature must be positive, got {tau}")
    n = I.shape[0]
    In, I_norms = _normalize_rows(I, "image")
    Tn, T_norms = _normalize_rows(T, "text")

    logits = tau * (In @ Tn.T)
    shifted_r = logits - logits.max(axis=1, keepdims=True)
    p_rows = np.exp(shifted_r)
    p_rows /= p_rows.sum(axis=1, keepdims=True)
    shifted_c = logits - logits.max(axis=0, keepdims=True)
    p_cols = np.exp(shifted_c)
    p_cols /= p_cols.sum(axis=0, keepdims=True)

    diag = np.arange(n)
    loss_i = float(np.mean(-np.log(np.clip(p_rows[diag, diag], 1e-300, None))))
    loss_t = float(np.mean(-np.log(np.clip(p_cols[diag, diag], 1e-300, None))))
    loss = 0.5 * (loss_i + loss_t)

    eye = np.eye(n)
    dlogits = ((p_rows - eye) + (p_cols - eye)) / (2.0 * n)
    ds = tau * dlogits
    d_In = ds @ Tn
    d_Tn = ds.T @ In
    dI = (d_In - In * np.sum(d_In * In, axis=1, keepdims=True)) / I_norms[:, None]
    dT = (d_Tn - Tn * np.sum(d_Tn * Tn, axis=1, keepdims=True)) / T_norms[:, None]
    return loss, dI, dT


def clip_zero_shot(image_emb: np.ndarray, class_text_embs: np.ndarray) -> int:
    """Index of the class text embedding most cosine-similar to the image.

    Ties break to the lowest class index; the decision is invariant to any
    positive rescaling of the image embedding.
    """
    v = np.asarray(image_emb, dtype=np.float64).reshape(-1)
    M = np.asarray(class_text_embs, dtype=np.float64)
    if M.ndim != 2 or M.shape[1] != v.size:
        raise InvalidConfigError(
            f"class embeddings must be (C, {v.size}), got shape {M.shape}"
        )
    v_norm = np.linalg.norm(v)
    if v_norm == 0.0:
        raise UndefinedCosineError("image embedding has zero norm; cosine undefined")
    row_norms = np.linalg.norm(M, axis=1)
    if np.any(row_norms == 0.0):
        bad = np.flatnonzero(row_norms == 0.0).tolist()
        raise UndefinedCosineError(f"class embedding row(s) {bad} have zero norm")
    sims = (M @ v) / (row_norms * v_norm)
    return int(np.argmax(sims))


def prompt_text(class_name: str) -> str:
    """Canonical zero-shot prompt for a behavior class."""
    return f"a photo of a {class_name}"
