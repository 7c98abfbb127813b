"""Behavior classifiers over embedding stores: data prep, kernels, training."""

from .checkpoint import load_checkpoint, save_checkpoint
from .classify import ClassificationReport, classification_report
from .clip import clip_loss, clip_zero_shot, prompt_text
from .data import (
    WindowExample,
    class_weights,
    examples_from_store,
    sliding_windows,
    stratified_split,
    windows_by_identity,
)
from .estimators import BiLstmClassifier, MlpClassifier
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
from .train import (
    TrainConfig,
    TrainResult,
    encode_labels,
    predict_classes,
    predict_logits,
    predict_proba,
    train_model,
)

__all__ = [
    "AdamState", "BiLstmClassifier", "ClassificationReport", "MlpClassifier",
    "TrainConfig", "TrainResult", "WindowExample", "adam_step",
    "bilstm_backward", "bilstm_forward", "class_weights",
    "classification_report", "clip_loss", "clip_zero_shot", "encode_labels",
    "examples_from_store", "init_bilstm", "init_mlp", "load_checkpoint",
    "mlp_backward", "mlp_forward", "predict_classes", "predict_logits",
    "predict_proba", "prompt_text", "save_checkpoint", "sliding_windows",
    "softmax", "stratified_split", "train_model", "weighted_cross_entropy",
    "windows_by_identity",
]
