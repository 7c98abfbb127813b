"""Estimator wrappers with the familiar fit/predict surface.

fit(X, y) applies the whole training recipe, including the internal
stratified 70/15/15 split and early stopping; the held-out test report lands
on ``report_``.  Only the classifiers (and the projector in the sibling
module) take this shape: the file-oriented pipeline stages gain nothing from
fit/transform and keep their functional interfaces.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .train import TrainConfig, encode_labels, predict_classes, predict_proba, train_model


class _RecipeClassifier(BaseEstimator, ClassifierMixin):
    _kind = ""

    def __init__(self, learning_rate=1e-3, weight_decay=1e-5, max_epochs=50,
                 patience=10, batch_size=64, seed=0):
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate,
                           weight_decay=self.weight_decay,
                           max_epochs=self.max_epochs, patience=self.patience,
                           batch_size=self.batch_size, seed=self.seed)

    def fit(self, X, y, splits=None):
        y_idx, names = encode_labels(y)
        result = train_model(self._kind, np.asarray(X, dtype=np.float64), y_idx,
                             self._config(), names, splits=splits)
        self.classes_ = np.array(names)
        self.params_ = result.params
        self.history_ = result.history
        self.report_ = result.report
        self.split_indices_ = result.split_indices
        self.best_epoch_ = result.best_epoch
        return self

    def predict(self, X):
        idx = predict_classes(self._kind, self.params_, np.asarray(X, dtype=np.float64))
        return self.classes_[idx]

    def predict_proba(self, X):
        return predict_proba(self._kind, self.params_, np.asarray(X, dtype=np.float64))


class MlpClassifier(_RecipeClassifier):
    """Frame-level classifier over (N, d) embeddings."""

    _kind = "mlp"


class BiLstmClassifier(_RecipeClassifier):
    """Temporal classifier over (N, T, d) embedding windows."""

    _kind = "bilstm"
