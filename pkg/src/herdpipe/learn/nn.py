"""Hand-written network kernels with exact analytic gradients.

Everything here is plain numpy in 64-bit: a three-layer MLP head for
frame-level classification and a bidirectional LSTM for temporal windows.
Dropout is inverted (activations scale by 1/(1-p) at train time) and every
backward pass is exact for the sampled masks, so central finite differences
validate each kernel directly.
"""

from __future__ import annotations

import numpy as np

from ..errors import EmptySequenceError, InvalidConfigError

MLP_HIDDEN1 = 512
MLP_HIDDEN2 = 256
MLP_DROPOUT = 0.5
LSTM_HIDDEN = 128
HEAD_HIDDEN = 128
HEAD_DROPOUT = 0.3


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def weighted_cross_entropy(logits: np.ndarray, targets: np.ndarray,
                           weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-example loss -w[target] * log softmax(logits)[target], batch-averaged.

    Returns (loss, dloss/dlogits); the gradient already includes the 1/B batch
    mean.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=int)
    weights = np.asarray(weights, dtype=np.float64)
    if logits.ndim != 2:
        raise InvalidConfigError(f"logits must be (B, C), got shape {logits.shape}")
    b, c = logits.shape
    p = softmax(logits)
    picked = np.clip(p[np.arange(b), targets], 1e-300, None)
    w = weights[targets]
    loss = float(np.mean(-w * np.log(picked)))
    grad = p.copy()
    grad[np.arange(b), targets] -= 1.0
    grad *= w[:, None] / b
    return loss, grad


def dropout_mask(rng: np.random.Generator, shape, p: float) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability p, else 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise InvalidConfigError(f"dropout rate must be in [0,1), got {p}")
    if p == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= p) / (1.0 - p)


# --- MLP ------------------------------------------------------------------------

def init_mlp(dim: int, n_classes: int, seed: int = 0,
             hidden1: int = MLP_HIDDEN1, hidden2: int = MLP_HIDDEN2) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    def he(n_in, n_out):
        return rng.standard_normal((n_in, n_out)) * np.sqrt(2.0 / n_in)
    return {
        "w1": he(dim, hidden1), "b1": np.zeros(hidden1),
        "w2": he(hidden1, hidden2), "b2": np.zeros(hidden2),
        "w3": rng.standard_normal((hidden2, n_classes)) * np.sqrt(1.0 / hidden2),
        "b3": np.zeros(n_classes),
    }


def mlp_forward(params: dict, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None,
                masks: tuple[np.ndarray, np.ndarray] | None = None,
                dropout: float = MLP_DROPOUT):
    """dense+ReLU+dropout twice, then a linear head.  Returns (logits, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params["w1"].shape[0]:
        raise InvalidConfigError(
            f"batch shape {x.shape} incompatible with input dim {params['w1'].shape[0]}"
        )
    z1 = x @ params["w1"] + params["b1"]
    a1 = np.maximum(z1, 0.0)
    if train:
        if masks is None:
            if rng is None:
                raise InvalidConfigError("train-mode forward needs an rng or fixed masks")
            masks = (dropout_mask(rng, a1.shape, dropout), None)
        a1 = a1 * masks[0]
    z2 = a1 @ params["w2"] + params["b2"]
    a2 = np.maximum(z2, 0.0)
    if train:
        if masks[1] is None:
            masks = (masks[0], dropout_mask(rng, a2.shape, dropout))
        a2 = a2 * masks[1]
    logits = a2 @ params["w3"] + params["b3"]
    cache = {"x": x, "z1": z1, "a1": a1, "z2": z2, "a2": a2,
             "masks": masks if train else None}
    return logits, cache


def mlp_backward(params: dict, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    grads = {}
    grads["w3"] = cache["a2"].T @ dlogits
    grads["b3"] = dlogits.sum(axis=0)
    da2 = dlogits @ params["w3"].T
    if cache["masks"] is not None:
        da2 = da2 * cache["masks"][1]
    dz2 = da2 * (cache["z2"] > 0)
    grads["w2"] = cache["a1"].T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ params["w2"].T
    if cache["masks"] is not None:
        da1 = da1 * cache["masks"][0]
    dz1 = da1 * (cache["z1"] > 0)
    grads["w1"] = cache["x"].T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return grads


# --- bidirectional LSTM ----------------------------------------------------------

def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_bilstm(dim: int, n_classes: int, seed: int = 0,
                hidden: int = LSTM_HIDDEN, head_hidden: int = HEAD_HIDDEN) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    def mat(n_in, n_out):
        return rng.standard_normal((n_in, n_out)) * np.sqrt(1.0 / n_in)
    params = {}
    for side in ("f", "b"):
        params[f"wx_{side}"] = mat(dim, 4 * hidden)
        params[f"wh_{side}"] = mat(hidden, 4 * hidden)
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0  # open forget gates so early gradients flow
        params[f"b_{side}"] = bias
    params["wh1"] = mat(2 * hidden, head_hidden)
    params["bh1"] = np.zeros(head_hidden)
    params["wh2"] = mat(head_hidden, n_classes)
    params["bh2"] = np.zeros(n_classes)
    return params


def _lstm_step(x, h_prev, c_prev, wx, wh, b, hidden):
    z = x @ wx + h_prev @ wh + b
    i = _sigmoid(z[:, :hidden])
    f = _sigmoid(z[:, hidden:2 * hidden])
    g = np.tanh(z[:, 2 * hidden:3 * hidden])
    o = _sigmoid(z[:, 3 * hidden:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, (x, h_prev, c_prev, i, f, g, o, c)


def _lstm_step_backward(dh, dc, cache, wx, wh, hidden):
    x, h_prev, c_prev, i, f, g, o, c = cache
    tc = np.tanh(c)
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    di, df, dg = dc * g, dc * c_prev, dc * i
    dc_prev = dc * f
    dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                         dg * (1 - g * g), do * o * (1 - o)], axis=1)
    dwx = x.T @ dz
    dwh = h_prev.T @ dz
    db = dz.sum(axis=0)
    dx = dz @ wx.T
    dh_prev = dz @ wh.T
    return dx, dh_prev, dc_prev, dwx, dwh, db


def bilstm_forward(params: dict, x: np.ndarray, train: bool = False,
                   rng: np.random.Generator | None = None,
                   mask: np.ndarray | None = None,
                   dropout: float = HEAD_DROPOUT):
    """Sequence representation at the last timestep, then a small dense head.

    The representation concatenates the forward cell's hidden state after the
    whole sequence with the backward cell's state after consuming only the
    final input: the last element of the usual per-step bidirectional output
    sequence.  (Later reverse-pass steps cannot influence it, so they are not
    computed.)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, :, :]
    if x.ndim != 3:
        raise InvalidConfigError(f"sequence batch must be (B, T, d), got shape {x.shape}")
    bsz, t_len, _ = x.shape
    if t_len == 0:
        raise EmptySequenceError("cannot classify a zero-length sequence")
    hidden = params["wh_f"].shape[0]

    h = np.zeros((bsz, hidden))
    c = np.zeros((bsz, hidden))
    fwd_caches = []
    for t in range(t_len):
        h, c, step_cache = _lstm_step(x[:, t, :], h, c, params["wx_f"],
                                      params["wh_f"], params["b_f"], hidden)
        fwd_caches.append(step_cache)

    zeros = np.zeros((bsz, hidden))
    h_b, _, bwd_cache = _lstm_step(x[:, t_len - 1, :], zeros, zeros,
                                   params["wx_b"], params["wh_b"], params["b_b"], hidden)

    rep = np.concatenate([h, h_b], axis=1)
    z1 = rep @ params["wh1"] + params["bh1"]
    a1 = np.maximum(z1, 0.0)
    if train:
        if mask is None:
            if rng is None:
                raise InvalidConfigError("train-mode forward needs an rng or a fixed mask")
            mask = dropout_mask(rng, a1.shape, dropout)
        a1 = a1 * mask
    logits = a1 @ params["wh2"] + params["bh2"]
    cache = {"x": x, "fwd": fwd_caches, "bwd": bwd_cache, "rep": rep,
             "z1": z1, "a1": a1, "mask": mask if train else None, "hidden": hidden}
    return logits, cache


def bilstm_backward(params: dict, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    hidden = cache["hidden"]
    grads = {k: np.zeros_like(v) for k, v in params.items()}

    grads["wh2"] = cache["a1"].T @ dlogits
    grads["bh2"] = dlogits.sum(axis=0)
    da1 = dlogits @ params["wh2"].T
    if cache["mask"] is not None:
        da1 = da1 * cache["mask"]
    dz1 = da1 * (cache["z1"] > 0)
    grads["wh1"] = cache["rep"].T @ dz1
    grads["bh1"] = dz1.sum(axis=0)
    drep = dz1 @ params["wh1"].T

    dh = drep[:, :hidden]
    dc = np.zeros_like(dh)
    for step_cache in reversed(cache["fwd"]):
        _, dh, dc, dwx, dwh, db = _lstm_step_backward(
            dh, dc, step_cache, params["wx_f"], params["wh_f"], hidden)
        grads["wx_f"] += dwx
        grads["wh_f"] += dwh
        grads["b_f"] += db

    dh_b = drep[:, hidden:]
    _, _, _, dwx, dwh, db = _lstm_step_backward(
        dh_b, np.zeros_like(dh_b), cache["bwd"], params["wx_b"], params["wh_b"], hidden)
    grads["wx_b"] += dwx
    grads["wh_b"] += dwh
    grads["b_b"] += db
    return grads
