"""Report emission: machine-readable JSON plus aligned text tables.

Every evaluation writes the same numbers twice: a JSON document validating
against the frozen schemas shipped in ``herdpipe/schemas`` and an aligned
plain-text table whose headers and row labels mirror the usual reporting
layout (metric/value for detection, per-sequence rows with an average line for
tracking, per-behavior rows with a weighted-average line for classification).
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .detect import DetectionReport
from .track import MotReport
from .learn.classify import ClassificationReport

DETECTION_SCHEMA = "detection_report.schema.json"
MOT_SCHEMA = "mot_report.schema.json"
CLASSIFICATION_SCHEMA = "classification_report.schema.json"


def load_schema(name: str) -> dict:
    text = resources.files("herdpipe.schemas").joinpath(name).read_text("utf-8")
    return json.loads(text)


def _write_json(path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")


# --- detection ------------------------------------------------------------------

def detection_report_payload(report: DetectionReport) -> dict:
    return {
        "report": "detection",
        "metrics": report.metrics(),
        "operating_point": {"iou_threshold": report.iou_threshold,
                            "score_threshold": report.score_threshold},
        "counts": {"tp": report.tp, "fp": report.fp, "fn": report.fn,
                   "n_frames": report.n_frames},
    }


def write_detection_report(path, report: DetectionReport) -> None:
    _write_json(path, detection_report_payload(report))


_DET_ROWS = (
    ("Average Precision (AP)", "ap", "pct"),
    ("Precision", "precision", "pct"),
    ("Recall", "recall", "pct"),
    ("F1 Score", "f1", "pct"),
    ("True Positive Rate", "tpr", "pct"),
    ("False Positive Rate", "fpr", "pct"),
    ("Missed Detection Rate", "miss_rate", "pct"),
    ("Average IoU", "mean_iou", "raw3"),
    ("Count MAE", "count_mae", "raw2"),
)


def _fmt(value: float, style: str) -> str:
    if style == "pct":
        return f"{value * 100:.2f}%"
    if style == "raw3":
        return f"{value:.3f}"
    if style == "raw2":
        return f"{value:.2f}"
    if style == "count":
        return f"{value:d}" if isinstance(value, int) else _trim(value)
    raise ValueError(style)


def _trim(value: float) -> str:
    if float(value) == int(value):
        return str(int(value))
    return f"{value:.2f}"


def render_detection_table(metrics: dict) -> str:
    rows = [("Metrics", "Value")]
    rows += [(label, _fmt(metrics[key], style)) for label, key, style in _DET_ROWS]
    return _align(rows)


# --- tracking -------------------------------------------------------------------

def mot_report_payload(report: MotReport, sequence: str = "") -> dict:
    return {"report": "mot", "sequence": sequence, "metrics": report.metrics()}


def write_mot_report(path, report: MotReport, sequence: str = "") -> None:
    _write_json(path, mot_report_payload(report, sequence))


MOT_COLUMNS = ("Validation Sequences", "Idf1", "Recall", "Precision", "Mostly Lost",
               "Num Switches", "Mota", "Avg. Tracklet Length", "Num Tracklets")


def render_mot_table(rows: list[tuple[str, dict]]) -> str:
    """Per-sequence rows plus a computed Average line, in the standard layout."""
    table = [MOT_COLUMNS]
    keys = ("idf1", "recall", "precision", "mostly_lost", "num_switches",
            "mota", "avg_tracklet_length", "num_tracklets")
    pct = {"idf1", "recall", "precision", "mota"}
    for name, m in rows:
        cells = [name]
        for k in keys:
            cells.append(f"{m[k] * 100:.2f}%" if k in pct else _trim(m[k]))
        table.append(tuple(cells))
    if rows:
        cells = ["Average"]
        for k in keys:
            mean = sum(m[k] for _, m in rows) / len(rows)
            cells.append(f"{mean * 100:.2f}%" if k in pct else _trim(mean))
        table.append(tuple(cells))
    return _align(table)


# --- classification ---------------------------------------------------------------

def classification_report_payload(report: ClassificationReport) -> dict:
    return {
        "report": "classification",
        "classes": report.per_class(),
        "weighted_average": {"precision": report.weighted_precision,
                             "recall": report.weighted_recall,
                             "f1": report.weighted_f1,
                             "support": int(sum(report.support))},
        "accuracy": report.accuracy,
        "confusion": [list(row) for row in report.confusion],
        "class_names": list(report.class_names),
        "absent_classes": list(report.absent_classes),
    }


def write_classification_report(path, report: ClassificationReport) -> None:
    _write_json(path, classification_report_payload(report))


CLS_COLUMNS = ("Behavior", "Precision", "Recall", "F1-Score", "Support")


def render_classification_table(payload: dict) -> str:
    table = [CLS_COLUMNS]
    for row in payload["classes"]:
        table.append((row["behavior"], f"{row['precision']:.3f}",
                      f"{row['recall']:.3f}", f"{row['f1']:.3f}",
                      str(int(row["support"]))))
    w = payload["weighted_average"]
    table.append(("Weighted Average", f"{w['precision']:.3f}", f"{w['recall']:.3f}",
                  f"{w['f1']:.3f}", str(int(w["support"]))))
    return _align(table)


def _align(rows: list[tuple[str, ...]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
             for row in rows]
    return "\n".join(lines) + "\n"
