"""Classification reports: per-class precision/recall/F1/support plus confusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfigError


@dataclass(frozen=True)
class ClassificationReport:
    class_names: tuple[str, ...]
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    support: tuple[int, ...]
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusion: tuple[tuple[int, ...], ...]  # rows = true class
    absent_classes: tuple[str, ...]         # zero truth and zero predictions

    def per_class(self) -> list[dict]:
        return [
            {"behavior": name, "precision": self.precision[i], "recall": self.recall[i],
             "f1": self.f1[i], "support": self.support[i]}
            for i, name in enumerate(self.class_names)
        ]


def classification_report(y_true, y_pred, class_names) -> ClassificationReport:
    """Metrics from integer class indices; rows of the confusion are the truth."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise InvalidConfigError(
            f"prediction/truth shape mismatch: {y_pred.shape} vs {y_true.shape}"
        )
    names = tuple(str(n) for n in class_names)
    c = len(names)
    if y_true.size and (y_true.max() >= c or y_pred.max() >= c or
                        y_true.min() < 0 or y_pred.min() < 0):
        raise InvalidConfigError(f"class index outside [0, {c})")
    confusion = np.zeros((c, c), dtype=int)
    np.add.at(confusion, (y_true, y_pred), 1)

    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    tp = np.diag(confusion)
    precision = np.divide(tp, predicted, out=np.zeros(c, dtype=float), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros(c, dtype=float), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(c, dtype=float),
                   where=denom > 0)
    total = int(support.sum())
    absent = tuple(names[i] for i in range(c) if support[i] == 0 and predicted[i] == 0)

    def wavg(metric):
        return float((metric * support).sum() / total) if total else 0.0

    return ClassificationReport(
        class_names=names,
        precision=tuple(precision.tolist()),
        recall=tuple(recall.tolist()),
        f1=tuple(f1.tolist()),
        support=tuple(int(s) for s in support.tolist()),
        accuracy=float(tp.sum() / total) if total else 0.0,
        weighted_precision=wavg(precision),
        weighted_recall=wavg(recall),
        weighted_f1=wavg(f1),
        confusion=tuple(tuple(int(v) for v in row) for row in confusion.tolist()),
        absent_classes=absent,
    )
