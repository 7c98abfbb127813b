"""Report payload schemas and aligned text table rendering."""

import json

import jsonschema
import pytest

from herdpipe.detect import evaluate_detection
from herdpipe.learn.classify import classification_report
from herdpipe.reports import (
    CLASSIFICATION_SCHEMA,
    DETECTION_SCHEMA,
    MOT_SCHEMA,
    classification_report_payload,
    detection_report_payload,
    load_schema,
    mot_report_payload,
    render_classification_table,
    render_detection_table,
    render_mot_table,
    write_classification_report,
    write_detection_report,
    write_mot_report,
)
from herdpipe.track import evaluate_mot

from conftest import random_detection_scene, run_from_frames


def validate(payload, schema_name):
    jsonschema.validate(payload, load_schema(schema_name),
                        cls=jsonschema.Draft202012Validator)


class TestSchemas:
    def test_detection_payload_validates(self, rng):
        gt, dets, _, _ = random_detection_scene(rng)
        payload = detection_report_payload(evaluate_detection(gt, dets))
        validate(payload, DETECTION_SCHEMA)

    def test_mot_payload_validates(self):
        frames = {1: {"a": (0, 0, 10, 10)}, 2: {"a": (1, 0, 10, 10)}}
        gt = run_from_frames(frames, "gt")
        pred = run_from_frames(frames, "pred")
        payload = mot_report_payload(evaluate_mot(gt, pred), sequence="seq01")
        validate(payload, MOT_SCHEMA)
        assert payload["sequence"] == "seq01"

    def test_classification_payload_validates(self):
        rep = classification_report([0, 0, 1, 1, 1], [0, 1, 1, 1, 0], ("rest", "walk"))
        payload = classification_report_payload(rep)
        validate(payload, CLASSIFICATION_SCHEMA)
        assert payload["weighted_average"]["support"] == 5

    def test_unknown_keys_rejected(self, rng):
        gt, dets, _, _ = random_detection_scene(rng)
        payload = detection_report_payload(evaluate_detection(gt, dets))
        payload["surprise"] = 1
        with pytest.raises(jsonschema.ValidationError):
            validate(payload, DETECTION_SCHEMA)

    def test_missing_keys_rejected(self, rng):
        gt, dets, _, _ = random_detection_scene(rng)
        payload = detection_report_payload(evaluate_detection(gt, dets))
        del payload["metrics"]["ap"]
        with pytest.raises(jsonschema.ValidationError):
            validate(payload, DETECTION_SCHEMA)

    def test_written_files_reload_and_validate(self, tmp_path, rng):
        gt, dets, _, _ = random_detection_scene(rng)
        det_rep = evaluate_detection(gt, dets)
        write_detection_report(tmp_path / "r" / "detection.json", det_rep)
        validate(json.loads((tmp_path / "r" / "detection.json").read_text()),
                 DETECTION_SCHEMA)

        frames = {1: {"a": (0, 0, 5, 5)}, 2: {"a": (0, 0, 5, 5)}}
        mot_rep = evaluate_mot(run_from_frames(frames, "gt"),
                               run_from_frames(frames, "p"))
        write_mot_report(tmp_path / "mot.json", mot_rep, sequence="s")
        validate(json.loads((tmp_path / "mot.json").read_text()), MOT_SCHEMA)

        cls_rep = classification_report([0, 0, 1], [0, 0, 1], ("a", "b"))
        write_classification_report(tmp_path / "cls.json", cls_rep)
        validate(json.loads((tmp_path / "cls.json").read_text()),
                 CLASSIFICATION_SCHEMA)


DET_FIGURES = {"ap": 0.8928, "precision": 0.8019, "recall": 0.8805, "f1": 0.8394,
               "tpr": 0.8805, "fpr": 0.1981, "miss_rate": 0.1195,
               "mean_iou": 0.747, "count_mae": 1.53}

SEQ_ROWS = [
    ("2019_11_05_000002", 0.9100, 0, 0.8200),
    ("2019_11_11_000028", 0.8740, 2, 0.7480),
    ("2019_11_11_000036", 0.9160, 0, 0.8320),
    ("2019_11_22_000010", 0.8640, 0, 0.7280),
    ("2019_11_28_000113", 0.9830, 0, 0.9660),
    ("2019_12_02_000005", 0.9450, 0, 0.8910),
    ("2019_12_02_000208", 0.9810, 0, 0.9620),
    ("2019_12_10_000060", 0.9990, 0, 0.9980),
    ("2019_12_10_000078", 0.9280, 2, 0.8560),
]

CLS_ROWS = [
    ("Standing", 0.892, 0.762, 0.821, 475),
    ("Lying", 0.816, 0.962, 0.883, 478),
    ("Eating", 0.965, 0.996, 0.980, 821),
    ("Drinking", 0.860, 0.896, 0.878, 96),
    ("Sitting", 0.662, 0.878, 0.754, 49),
    ("Sleeping", 0.992, 0.937, 0.964, 2289),
    ("Running", 0.473, 0.643, 0.546, 14),
    ("Playing with toy", 0.900, 0.947, 0.923, 19),
    ("Nose-to-nose", 0.492, 0.938, 0.645, 64),
]


def columns_align(text):
    lines = text.splitlines()
    # column boundaries come from the header; every cell must start there
    header = lines[0]
    starts = [0]
    i = 0
    while True:
        j = header.find("  ", i)
        if j < 0:
            break
        while j < len(header) and header[j] == " ":
            j += 1
        starts.append(j)
        i = j
    return lines, starts


class TestDetectionTable:
    def test_published_values_render(self):
        text = render_detection_table(DET_FIGURES)
        lines = text.splitlines()
        assert lines[0].split("  ")[0].strip() == "Metrics"
        want = [("Average Precision (AP)", "89.28%"),
                ("Precision", "80.19%"),
                ("Recall", "88.05%"),
                ("F1 Score", "83.94%"),
                ("True Positive Rate", "88.05%"),
                ("False Positive Rate", "19.81%"),
                ("Missed Detection Rate", "11.95%"),
                ("Average IoU", "0.747"),
                ("Count MAE", "1.53")]
        for line, (label, value) in zip(lines[1:], want):
            assert line.startswith(label)
            assert line.endswith(value)

    def test_alignment(self):
        lines, starts = columns_align(render_detection_table(DET_FIGURES))
        assert len(starts) == 2
        for line in lines[1:]:
            assert line[starts[1] - 1] == " "
            assert line[starts[1]] != " "


class TestMotTable:
    def rows(self):
        out = []
        for name, idf1, switches, mota in SEQ_ROWS:
            out.append((name, {"idf1": idf1, "recall": idf1, "precision": idf1,
                               "mostly_lost": 0, "num_switches": switches,
                               "mota": mota, "avg_tracklet_length": 600,
                               "num_tracklets": 8}))
        return out

    def test_published_sequences_and_recomputed_average(self):
        text = render_mot_table(self.rows())
        lines = text.splitlines()
        assert lines[0].startswith("Validation Sequences")
        assert "Avg. Tracklet Length" in lines[0]
        first = lines[1].split()
        assert first[0] == "2019_11_05_000002"
        assert "91.00%" in lines[1] and "82.00%" in lines[1]
        avg = lines[-1]
        assert avg.startswith("Average")
        # the average row is derived from the data, so the MOTA cell carries the
        # true column mean rather than a transcription of any source table
        assert "93.33%" in avg
        assert "86.68%" in avg
        assert "0.44" in avg
        assert avg.rstrip().endswith("8")
        assert " 600 " in avg + " "

    def test_alignment_and_empty(self):
        lines, starts = columns_align(render_mot_table(self.rows()))
        assert len(starts) == 9
        for line in lines[1:]:
            for s in starts[1:]:
                if s < len(line):
                    assert line[s - 1] == " "
        assert render_mot_table([]).splitlines()[0].startswith("Validation Sequences")


class TestClassificationTable:
    def payload(self):
        classes = [{"behavior": b, "precision": p, "recall": r, "f1": f, "support": s}
                   for b, p, r, f, s in CLS_ROWS]
        return {"report": "classification", "classes": classes,
                "weighted_average": {"precision": 0.940, "recall": 0.929,
                                     "f1": 0.932, "support": 4305},
                "accuracy": 0.929,
                "confusion": [[0] * 9 for _ in range(9)],
                "class_names": [b for b, *_ in CLS_ROWS],
                "absent_classes": []}

    def test_published_values_render(self):
        payload = self.payload()
        validate(payload, CLASSIFICATION_SCHEMA)
        text = render_classification_table(payload)
        lines = text.splitlines()
        assert lines[0].split("  ")[0] == "Behavior"
        assert lines[1].startswith("Standing")
        assert "0.892" in lines[1] and lines[1].rstrip().endswith("475")
        assert lines[6].startswith("Sleeping") and lines[6].rstrip().endswith("2289")
        last = lines[-1]
        assert last.startswith("Weighted Average")
        assert "0.940" in last and "0.929" in last and "0.932" in last
        assert last.rstrip().endswith("4305")

    def test_alignment(self):
        lines, starts = columns_align(render_classification_table(self.payload()))
        assert len(starts) == 5
        for line in lines[1:]:
            for s in starts[1:]:
                if s < len(line):
                    assert line[s - 1] == " "
