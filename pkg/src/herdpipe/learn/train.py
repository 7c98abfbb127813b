"""The training recipe: minibatch Adam, inverse-frequency weights, early stopping.

Both model kinds train identically: stratified 70/15/15 split, class weights
from the training portion, shuffled batches of 64, weighted cross-entropy,
Adam at lr 1e-3 with 1e-5 coupled weight decay, validation after every epoch,
and early stopping with patience 10 over at most 50 epochs.  The parameters at
the best validation loss are what training returns.  Dropout masks derive from
(seed, epoch, batch), so a rerun with the same seed is bit-identical.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, InvalidConfigError
from .classify import ClassificationReport, classification_report
from .data import DEFAULT_RATIOS, class_weights, stratified_split
from .nn import (
    bilstm_backward,
    bilstm_forward,
    init_bilstm,
    init_mlp,
    mlp_backward,
    mlp_forward,
    softmax,
    weighted_cross_entropy,
)
from .optim import AdamState, adam_step

MODEL_KINDS = ("mlp", "bilstm")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 50
    patience: int = 10
    batch_size: int = 64
    split: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise InvalidConfigError("learning_rate, batch_size, max_epochs must be positive")
        if self.patience < 1:
            raise InvalidConfigError(f"patience must be >= 1, got {self.patience}")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise InvalidConfigError(f"split ratios must sum to 1, got {self.split}")


@dataclass
class TrainResult:
    kind: str
    params: dict[str, np.ndarray]
    history: list[dict]
    class_names: tuple[str, ...]
    weights: np.ndarray
    split_indices: tuple[np.ndarray, np.ndarray, np.ndarray]
    best_epoch: int
    report: ClassificationReport | None = None
    config: TrainConfig = field(default_factory=TrainConfig)


def _forward(kind: str, params, x, train=False, rng=None):
    if kind == "mlp":
        return mlp_forward(params, x, train=train, rng=rng)
    return bilstm_forward(params, x, train=train, rng=rng)


def _backward(kind: str, params, cache, dlogits):
    if kind == "mlp":
        return mlp_backward(params, cache, dlogits)
    return bilstm_backward(params, cache, dlogits)


def predict_logits(kind: str, params, x, batch_size: int = 256) -> np.ndarray:
    outs = []
    for start in range(0, len(x), batch_size):
        logits, _ = _forward(kind, params, x[start:start + batch_size], train=False)
        outs.append(logits)
    return np.concatenate(outs, axis=0)


def _eval_split(kind, params, x, y, weights):
    logits = predict_logits(kind, params, x)
    loss, _ = weighted_cross_entropy(logits, y, weights)
    acc = float(np.mean(np.argmax(logits, axis=1) == y)) if len(y) else 0.0
    return loss, acc


def encode_labels(labels) -> tuple[np.ndarray, tuple[str, ...]]:
    names = tuple(sorted(set(str(l) for l in labels)))
    index = {n: i for i, n in enumerate(names)}
    return np.array([index[str(l)] for l in labels], dtype=int), names


def train_model(kind: str, x: np.ndarray, y: np.ndarray, config: TrainConfig,
                class_names, splits=None, init_params=None) -> TrainResult:
    """Full recipe over encoded integer labels; returns best params + history.

    ``splits`` overrides the internal stratified split with caller-provided
    (train, val, test) index arrays (needed when windows are built after an
    upstream frame-level split).  The test portion is evaluated once with the
    best parameters.
    """
    if kind not in MODEL_KINDS:
        raise InvalidConfigError(f"model kind must be one of {MODEL_KINDS}, got {kind!r}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    class_names = tuple(str(n) for n in class_names)
    n_classes = len(class_names)

    if splits is None:
        splits = stratified_split(y, config.split, config.seed)
    train_idx, val_idx, test_idx = (np.asarray(s, dtype=int) for s in splits)
    counts = np.bincount(y[train_idx], minlength=n_classes)
    weights = class_weights(np.maximum(counts, 1))  # guard classes the split starved
    weights = np.where(counts > 0, weights, 0.0)
    weights = weights / weights.sum()

    if init_params is None:
        dim = x.shape[-1]
        init_params = (init_mlp(dim, n_classes, seed=config.seed) if kind == "mlp"
                       else init_bilstm(dim, n_classes, seed=config.seed))
    params = {k: v.copy() for k, v in init_params.items()}
    state = AdamState.for_params(params)

    history: list[dict] = []
    best_loss = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0
    stall = 0

    for epoch in range(1, config.max_epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(train_idx)
        epoch_loss = 0.0
        n_batches = 0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start:start + config.batch_size]
            rng = np.random.default_rng([config.seed, epoch, b])
            logits, cache = _forward(kind, params, x[batch], train=True, rng=rng)
            loss, dlogits = weighted_cross_entropy(logits, y[batch], weights)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch} batch {b}", history)
            grads = _backward(kind, params, cache, dlogits)
            adam_step(params, grads, state, lr=config.learning_rate,
                      weight_decay=config.weight_decay, beta1=config.beta1,
                      beta2=config.beta2, eps=config.eps)
            epoch_loss += loss
            n_batches += 1

        val_loss, val_acc = _eval_split(kind, params, x[val_idx], y[val_idx], weights)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}", history)
        history.append({"epoch": epoch,
                        "train_loss": epoch_loss / max(n_batches, 1),
                        "val_loss": val_loss, "val_accuracy": val_acc})
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = copy.deepcopy(params)
            best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                break

    result = TrainResult(kind=kind, params=best_params, history=history,
                         class_names=class_names, weights=weights,
                         split_indices=(train_idx, val_idx, test_idx),
                         best_epoch=best_epoch, config=config)
    if len(test_idx):
        preds = np.argmax(predict_logits(kind, best_params, x[test_idx]), axis=1)
        result.report = classification_report(y[test_idx], preds, class_names)
    return result


def predict_classes(kind: str, params, x) -> np.ndarray:
    return np.argmax(predict_logits(kind, params, x), axis=1)


def predict_proba(kind: str, params, x) -> np.ndarray:
    return softmax(predict_logits(kind, params, x))
