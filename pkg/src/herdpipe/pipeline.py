"""One-config orchestration: stage functions, digest ledger, fixed run order.

Stages communicate only through the declared file formats under one root
directory, so any stage can be replaced by externally supplied files in the
same format.  A digest ledger makes reruns cheap: a stage is skipped when its
inputs and outputs still hash to what the last successful run recorded.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np

from . import __version__
from .crop import (
    BG_COLORS,
    CropTask,
    crop_batch,
    forward_propagate_labels,
    read_crop_manifest,
    read_labels,
    write_crop_manifest,
    write_labels,
)
from .detect import (
    detections_by_frame,
    filter_detections,
    make_seeds,
    read_detections,
    read_seeds,
    write_detections,
    write_seeds,
)
from .embed import embed_crops, open_store, run_external_embedder
from .errors import DependencyError, InvalidConfigError, StageError
from .formats import read_jsonl, write_jsonl
from .geometry import BBox
from .ingest import ingest as ingest_op
from .ingest import load_layout
from .learn import (
    TrainConfig,
    encode_labels,
    examples_from_store,
    load_checkpoint,
    save_checkpoint,
    sliding_windows,
    stratified_split,
    train_model,
    windows_by_identity,
)
from .learn.classify import classification_report
from .learn.train import predict_classes
from .reports import (
    classification_report_payload,
    render_classification_table,
    render_detection_table,
    render_mot_table,
    write_classification_report,
    write_detection_report,
    write_mot_report,
)
from .synth import lane_spec, make_synthetic_sequence
from .track import (
    chain_chunks,
    evaluate_mot,
    masks_to_run,
    naive_iou_tracker,
    oracle_tracker,
    read_tracks,
    run_external_tracker,
    write_tracks,
)
from .tsne import TSNE

STAGE_ORDER = ("synth", "ingest", "detect", "track", "crop", "embed", "train",
               "eval-det", "eval-mot", "eval-cls", "tsne")

DEFAULTS = {
    "seed": 7,
    "paths": {"root": "."},
    "synth": {"objects": 4, "frames": 600, "width": 160, "height": 160,
              "phase_len": 50},
    "ingest": {"source": "", "stride": 1, "max_chunk": 3000, "decoder_cmd": ""},
    "detect": {"labels": ["pig"], "threshold": 0.5, "prefix": "pig", "frame": 1},
    "track": {"tracker": "naive", "cmd": "", "iou_floor": 0.3, "lookback": 1},
    "crop": {"bg": "black", "size": 224, "workers": 0, "encoder": "jpeg"},
    "embed": {"embedder": "toy", "cmd": "", "dim": 256},
    "learn": {"model": "mlp", "window": 8, "stride": 4, "majority_floor": 0.5,
              "train": {}},
    "eval": {"iou": 0.5, "score_threshold": 0.5, "sequence": ""},
    "tsne": {"perplexity": 30.0, "iterations": 1000, "limit": 0},
}

_TRAIN_KEYS = {"learning_rate", "weight_decay", "beta1", "beta2", "eps",
               "max_epochs", "patience", "batch_size", "split", "seed"}


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text("utf-8"))
    except FileNotFoundError as exc:
        raise DependencyError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return merge_config(raw)


def merge_config(raw: dict) -> dict:
    """Overlay user keys on the defaults, rejecting anything unknown."""
    if not isinstance(raw, dict):
        raise InvalidConfigError("config root must be an object")
    cfg = json.loads(json.dumps(DEFAULTS))  # deep copy
    for key, value in raw.items():
        if key not in DEFAULTS:
            raise InvalidConfigError(f"unknown config key {key!r}")
        if key == "seed":
            cfg["seed"] = int(value)
            continue
        if not isinstance(value, dict):
            raise InvalidConfigError(f"config section {key!r} must be an object")
        for sub, sub_value in value.items():
            if key == "paths":
                cfg["paths"][sub] = str(sub_value)
            elif key == "learn" and sub == "train":
                unknown = set(sub_value) - _TRAIN_KEYS
                if unknown:
                    raise InvalidConfigError(
                        f"unknown learn.train key(s): {sorted(unknown)}")
                cfg["learn"]["train"] = dict(sub_value)
            elif sub not in DEFAULTS[key]:
                raise InvalidConfigError(f"unknown config key {key}.{sub}")
            else:
                cfg[key][sub] = sub_value
    return cfg


_LAYOUT_DEFAULTS = {
    "frames": "layout", "detections": "detections.jsonl",
    "filtered": "filtered.jsonl", "seeds": "seeds.jsonl",
    "gt_tracks": "gt_tracks.jsonl", "labels": "labels.jsonl",
    "tracks": "tracks.jsonl", "crops": "crops", "store": "store",
    "model": "model.mdl", "reports": "reports", "points": "points.csv",
    "ledger": "ledger.jsonl", "lock": ".lock",
}


@dataclasses.dataclass
class Layout:
    """Artifact paths for one pipeline root; any path can be overridden."""

    root: Path
    frames: Path = None
    detections: Path = None
    filtered: Path = None
    seeds: Path = None
    gt_tracks: Path = None
    labels: Path = None
    tracks: Path = None
    crops: Path = None
    crop_manifest: Path = None
    store: Path = None
    model: Path = None
    reports: Path = None
    points: Path = None
    ledger: Path = None
    lock: Path = None

    def __post_init__(self):
        self.root = Path(self.root)
        for name, rel in _LAYOUT_DEFAULTS.items():
            value = getattr(self, name)
            setattr(self, name, Path(value) if value is not None else self.root / rel)
        if self.crop_manifest is None:
            self.crop_manifest = self.crops / "manifest.jsonl"
        else:
            self.crop_manifest = Path(self.crop_manifest)


def layout_for(cfg: dict) -> Layout:
    return Layout(root=Path(cfg["paths"]["root"]))


def _require(path: Path, stage: str) -> Path:
    if not Path(path).exists():
        raise DependencyError(f"stage {stage!r} needs missing input {path}")
    return Path(path)


# --- digest ledger ---------------------------------------------------------------

def digest_path(path) -> str:
    """sha256 of a file, or of a directory's sorted (relpath, file-digest) list."""
    path = Path(path)
    if path.is_file():
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                h.update(block)
        return h.hexdigest()
    if path.is_dir():
        h = hashlib.sha256()
        for sub in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(str(sub.relative_to(path)).encode())
            h.update(bytes.fromhex(digest_path(sub)))
        return h.hexdigest()
    return "missing"


class RunLedger:
    """Append-only stage journal keyed by input/output digests."""

    def __init__(self, path):
        self.path = Path(path)

    def entries(self) -> list[dict]:
        if not self.path.exists():
            return []
        return list(read_jsonl(self.path))

    def record(self, stage: str, status: str, inputs: dict, outputs: dict) -> dict:
        entry = {"stage": stage, "status": status, "inputs": inputs,
                 "outputs": outputs, "finished": time.time(), "version": __version__}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return entry

    def can_skip(self, stage: str, input_paths: list[Path]) -> bool:
        last = None
        for entry in self.entries():
            if entry["stage"] == stage and entry["status"] == "ok":
                last = entry
        if last is None:
            return False
        current = {str(p): digest_path(p) for p in input_paths}
        if current != last["inputs"]:
            return False
        for path, digest in last["outputs"].items():
            if digest_path(path) != digest:
                return False
        return True


# --- stage implementations --------------------------------------------------------

def stage_synth(cfg: dict, lay: Layout) -> dict:
    s = cfg["synth"]
    spec = lane_spec(n_objects=int(s["objects"]), n_frames=int(s["frames"]),
                     width=int(s["width"]), height=int(s["height"]),
                     phase_len=int(s["phase_len"]))
    seq = make_synthetic_sequence(spec)

    from PIL import Image
    from .ingest import JPEG_SETTINGS, chunk_dir_name, frame_name, write_manifest
    max_chunk = int(cfg["ingest"]["max_chunk"])
    rows = []
    for i, frame in enumerate(seq.frames):
        global_index = i + 1
        chunk_id = (global_index - 1) // max_chunk
        chunk_dir = lay.frames / chunk_dir_name(chunk_id)
        chunk_dir.mkdir(parents=True, exist_ok=True)
        name = frame_name(global_index)
        Image.fromarray(frame).save(chunk_dir / name, **JPEG_SETTINGS)
        rows.append({"global_index": global_index, "chunk_id": chunk_id,
                     "filename": name, "source_index": i})
    write_manifest(lay.frames, rows, [])

    write_tracks(lay.gt_tracks, seq.gt_run)
    write_labels(lay.labels, seq.sparse_labels)
    dets = []
    for traj in seq.gt_run.trajectories:
        for frame_idx in traj.frames():
            box = traj.entries[frame_idx].box
            dets.append({"frame_index": frame_idx, "label": "pig", "score": 1.0,
                         "x": box.x, "y": box.y, "w": box.w, "h": box.h})
    dets.sort(key=lambda d: (d["frame_index"], d["x"], d["y"]))
    write_jsonl(lay.detections, dets)
    first = read_detections(lay.detections)
    first = [d for d in first if d.frame_index == 1]
    seeds = make_seeds(first, naming_prefix="blob",
                       frame_size=(spec.width, spec.height))
    write_seeds(lay.seeds, seeds)
    return {"frames": len(seq.frames), "objects": len(spec.objects)}


def stage_ingest(cfg: dict, lay: Layout) -> dict:
    c = cfg["ingest"]
    source = _require(Path(c["source"]), "ingest") if c["source"] else None
    if source is None:
        raise InvalidConfigError("ingest.source is required for the ingest stage")
    result = ingest_op(source, stride=int(c["stride"]), max_chunk=int(c["max_chunk"]),
                       out_root=lay.frames, decoder_cmd=c["decoder_cmd"] or None)
    return {"frames": result.n_frames, "errors": len(result.errors)}


def stage_detect(cfg: dict, lay: Layout) -> dict:
    c = cfg["detect"]
    dets = read_detections(_require(lay.detections, "detect"))
    kept = filter_detections(dets, set(c["labels"]), float(c["threshold"]))
    write_detections(lay.filtered, kept)
    frame_no = int(c["frame"])
    first = [d for d in kept if d.frame_index == frame_no]
    frame_size = None
    if lay.frames.exists():
        from PIL import Image
        layout = load_layout(lay.frames)
        with Image.open(layout.frame_path(frame_no)) as im:
            frame_size = (float(im.width), float(im.height))
    seeds = make_seeds(first, naming_prefix=str(c["prefix"]), frame_size=frame_size)
    write_seeds(lay.seeds, seeds)
    return {"kept": len(kept), "seeds": len(seeds.seeds)}


def stage_track(cfg: dict, lay: Layout) -> dict:
    c = cfg["track"]
    seeds = read_seeds(_require(lay.seeds, "track"), frame_index=int(cfg["detect"]["frame"]))
    kind = str(c["tracker"])
    if kind == "naive":
        dets = read_detections(_require(lay.filtered if lay.filtered.exists()
                                        else lay.detections, "track"))
        by_frame = detections_by_frame(dets)
        if not by_frame:
            raise StageError("no detections available to track")
        first, last = min(by_frame), max(by_frame)
        per_frame = [[d.box for d in by_frame.get(f, [])] for f in range(first, last + 1)]
        run = naive_iou_tracker(per_frame, seeds, iou_floor=float(c["iou_floor"]),
                                first_frame_index=first)
    elif kind == "oracle":
        gt = read_tracks(_require(lay.gt_tracks, "track"), tracker_id="gt")
        frames = gt.frames()
        run = oracle_tracker(gt, seeds, (frames[0], frames[-1]))
    elif kind == "external":
        layout = load_layout(_require(lay.frames, "track"))
        chunk_ids = sorted({row["chunk_id"] for row in layout.frames})
        per_frame_all = {}
        current = seeds
        from .ingest import chunk_dir_name
        for chunk_id in chunk_ids:
            frames_in = [r["global_index"] for r in layout.frames
                         if r["chunk_id"] == chunk_id]
            seeds_file = lay.root / f"chunk_{chunk_id:03d}_seeds.jsonl"
            out_file = lay.root / f"chunk_{chunk_id:03d}_masks.jsonl"
            write_seeds(seeds_file, current)
            per_frame = run_external_tracker(str(c["cmd"]),
                                             lay.frames / chunk_dir_name(chunk_id),
                                             seeds_file, out_file, chunk_id=chunk_id)
            per_frame_all.update(per_frame)
            partial = masks_to_run(per_frame, tracker_id="external")
            if chunk_id != chunk_ids[-1]:
                current = chain_chunks(partial, max(frames_in),
                                       lookback=int(c["lookback"]))
        run = masks_to_run(per_frame_all, tracker_id="external")
    else:
        raise InvalidConfigError(f"unknown tracker kind {kind!r}")
    write_tracks(lay.tracks, run)
    return {"tracker": kind, "identities": len(run.trajectories)}


def stage_crop(cfg: dict, lay: Layout) -> dict:
    c = cfg["crop"]
    if c["bg"] not in BG_COLORS:
        raise InvalidConfigError(f"crop.bg must be one of {sorted(BG_COLORS)}")
    bg = BG_COLORS[c["bg"]]
    size = (int(c["size"]), int(c["size"]))
    layout = load_layout(_require(lay.frames, "crop"))
    run = read_tracks(_require(lay.tracks, "crop"))
    dense: dict[str, dict[int, str]] = {}
    if lay.labels.exists():
        sparse = read_labels(lay.labels)
        frames = run.frames()
        if frames:
            dense = forward_propagate_labels(sparse, (frames[0], frames[-1]))
    tasks = []
    for traj in run.trajectories:
        for frame_idx in traj.frames():
            entry = traj.entries[frame_idx]
            tasks.append(CropTask(
                frame_path=str(layout.frame_path(frame_idx)),
                frame_global_index=frame_idx, identity=traj.identity,
                box=entry.box, mask=entry.mask, bg_color=bg, out_size=size,
                behavior_label=dense.get(traj.identity, {}).get(frame_idx)))
    workers = int(c["workers"]) or None
    records, errors = crop_batch(tasks, lay.crops, workers=workers,
                                 encoder=str(c["encoder"]))
    write_crop_manifest(lay.crop_manifest, records, errors, out_size=size,
                        bg_color=bg, encoder=str(c["encoder"]))
    return {"crops": len(records), "errors": len(errors)}


def stage_embed(cfg: dict, lay: Layout) -> dict:
    c = cfg["embed"]
    _, records, _ = read_crop_manifest(_require(lay.crop_manifest, "embed"))
    if str(c["embedder"]) == "toy":
        store = embed_crops(lay.crops, records, lay.store)
    elif str(c["embedder"]) == "external":
        store = run_external_embedder(str(c["cmd"]), lay.crop_manifest, records,
                                      lay.store, dim=int(c["dim"]))
    else:
        raise InvalidConfigError(f"unknown embedder kind {c['embedder']!r}")
    return {"records": len(store.records), "dim": store.dim}


def _train_config(cfg: dict) -> TrainConfig:
    overrides = dict(cfg["learn"]["train"])
    overrides.setdefault("seed", int(cfg["seed"]))
    if isinstance(overrides.get("split"), list):
        overrides["split"] = tuple(overrides["split"])
    return TrainConfig(**overrides)


def windowed_datasets_from_store(store, window: int, stride: int,
                                 majority_floor: float, ratios, seed: int):
    """Frame-level split first, then windows inside each split (no leakage)."""
    _, labels, _, _ = examples_from_store(store)
    splits = stratified_split(labels, ratios, seed)
    per_identity = windows_by_identity(store)
    frame_keys = [(rec.identity, rec.frame_global_index)
                  for rec in store.records if rec.label is not None]
    key_to_pos = {k: i for i, k in enumerate(frame_keys)}

    xs, ys, bounds = [], [], []
    for split in splits:
        members = set(split.tolist())
        restricted = {
            ident: [item for item in items
                    if key_to_pos.get((ident, item[0])) in members]
            for ident, items in per_identity.items()
        }
        examples = sliding_windows(restricted, window, stride, majority_floor)
        xs.extend(e.sequence for e in examples)
        ys.extend(e.label for e in examples)
        bounds.append(len(examples))
    if not xs:
        raise StageError("no temporal windows survived majority filtering")
    x = np.stack(xs)
    offsets = np.cumsum([0] + bounds)
    split_idx = tuple(np.arange(offsets[i], offsets[i + 1]) for i in range(3))
    return x, ys, split_idx


def stage_train(cfg: dict, lay: Layout) -> dict:
    c = cfg["learn"]
    store = open_store(_require(lay.store, "train"))
    config = _train_config(cfg)
    kind = str(c["model"])
    if kind == "mlp":
        x, labels, _, _ = examples_from_store(store)
        y, names = encode_labels(labels)
        result = train_model("mlp", x, y, config, names)
        extra = {}
    elif kind == "bilstm":
        x, labels, split_idx = windowed_datasets_from_store(
            store, int(c["window"]), int(c["stride"]), float(c["majority_floor"]),
            config.split, config.seed)
        y, names = encode_labels(labels)
        result = train_model("bilstm", x, y, config, names, splits=split_idx)
        extra = {"window": int(c["window"]), "stride": int(c["stride"]),
                 "majority_floor": float(c["majority_floor"])}
    else:
        raise InvalidConfigError(f"unknown model kind {kind!r}")
    save_checkpoint(lay.model, kind, result.params, result.class_names, config,
                    extra=extra)
    lay.reports.mkdir(parents=True, exist_ok=True)
    if result.report is not None:
        write_classification_report(lay.reports / "train_test.json", result.report)
        payload = classification_report_payload(result.report)
        (lay.reports / "train_test.txt").write_text(
            render_classification_table(payload), "utf-8")
    return {"model": kind, "best_epoch": result.best_epoch,
            "epochs_run": len(result.history),
            "test_accuracy": result.report.accuracy if result.report else None}


def _read_gt_boxes(path) -> dict[int, list[BBox]]:
    from .formats import require_fields
    frames: dict[int, list[BBox]] = {}
    for rec in read_jsonl(path):
        require_fields(rec, ("frame_index", "x", "y", "w", "h"), str(path))
        frames.setdefault(int(rec["frame_index"]), []).append(
            BBox(float(rec["x"]), float(rec["y"]), float(rec["w"]), float(rec["h"])))
    return frames


def stage_eval_det(cfg: dict, lay: Layout, gt_path=None, det_path=None) -> dict:
    from .detect import evaluate_detection
    e = cfg["eval"]
    gt_file = Path(gt_path) if gt_path else lay.gt_tracks
    det_file = Path(det_path) if det_path else (
        lay.filtered if lay.filtered.exists() else lay.detections)
    gt = _read_gt_boxes(_require(gt_file, "eval-det"))
    dets = detections_by_frame(read_detections(_require(det_file, "eval-det")))
    report = evaluate_detection(gt, dets, iou_thr=float(e["iou"]),
                                score_threshold=float(e["score_threshold"]))
    lay.reports.mkdir(parents=True, exist_ok=True)
    write_detection_report(lay.reports / "detection.json", report)
    (lay.reports / "detection.txt").write_text(
        render_detection_table(report.metrics()), "utf-8")
    return report.metrics()


def stage_eval_mot(cfg: dict, lay: Layout, gt_path=None, pred_path=None) -> dict:
    e = cfg["eval"]
    gt_file = Path(gt_path) if gt_path else lay.gt_tracks
    pred_file = Path(pred_path) if pred_path else lay.tracks
    gt = read_tracks(_require(gt_file, "eval-mot"), tracker_id="gt")
    pred = read_tracks(_require(pred_file, "eval-mot"), tracker_id="pred")
    report = evaluate_mot(gt, pred, iou_thr=float(e["iou"]))
    lay.reports.mkdir(parents=True, exist_ok=True)
    sequence = str(e["sequence"]) or lay.root.name
    write_mot_report(lay.reports / "mot.json", report, sequence=sequence)
    (lay.reports / "mot.txt").write_text(
        render_mot_table([(sequence, report.metrics())]), "utf-8")
    return report.metrics()


def evaluate_classifier(model_path, store_path, split: str = "test"):
    """Score a saved checkpoint on one split of a store; returns the report.

    The split is reconstructed from the seed and ratios echoed in the
    checkpoint, so evaluation sees exactly the examples training held out.
    """
    kind, params, names, config, extra = load_checkpoint(
        _require(model_path, "eval-cls"))
    store = open_store(_require(store_path, "eval-cls"))
    split_pos = {"train": 0, "val": 1, "test": 2}
    if split not in split_pos:
        raise InvalidConfigError(f"split must be train/val/test, got {split!r}")
    if kind == "mlp":
        x, labels, _, _ = examples_from_store(store)
        y, data_names = encode_labels(labels)
        splits = stratified_split(labels, config.split, config.seed)
        idx = splits[split_pos[split]]
    else:
        x, labels, split_idx = windowed_datasets_from_store(
            store, int(extra["window"]), int(extra["stride"]),
            float(extra["majority_floor"]), config.split, config.seed)
        y, data_names = encode_labels(labels)
        idx = split_idx[split_pos[split]]
    if tuple(data_names) != tuple(names):
        raise StageError(
            f"store classes {data_names} differ from model classes {names}")
    preds = predict_classes(kind, params, x[idx])
    return classification_report(np.asarray(y)[idx], preds, names)


def stage_eval_cls(cfg: dict, lay: Layout, split: str = "test") -> dict:
    report = evaluate_classifier(lay.model, lay.store, split)
    lay.reports.mkdir(parents=True, exist_ok=True)
    write_classification_report(lay.reports / f"classification_{split}.json", report)
    payload = classification_report_payload(report)
    (lay.reports / f"classification_{split}.txt").write_text(
        render_classification_table(payload), "utf-8")
    return {"accuracy": report.accuracy, "split": split}


def stage_tsne(cfg: dict, lay: Layout) -> dict:
    import csv
    c = cfg["tsne"]
    store = open_store(_require(lay.store, "tsne"))
    records = list(store.records)
    limit = int(c["limit"])
    if limit and len(records) > limit:
        keep = np.random.default_rng(int(cfg["seed"])).choice(
            len(records), size=limit, replace=False)
        records = [records[i] for i in sorted(keep)]
    x = np.stack([store.vector(r) for r in records]).astype(np.float64)
    proj = TSNE(perplexity=float(c["perplexity"]), iterations=int(c["iterations"]),
                seed=int(cfg["seed"]))
    points = proj.fit_transform(x)
    with open(lay.points, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["crop_filename", "label", "x", "y"])
        for rec, (px, py) in zip(records, points):
            writer.writerow([rec.crop_filename, rec.label or "", f"{px:.6f}", f"{py:.6f}"])
    return {"points": len(records), "kl_initial": proj.kl_initial_,
            "kl_final": proj.kl_final_}


_STAGE_IO = {
    "synth": (lambda l: [], lambda l: [l.frames, l.gt_tracks, l.labels,
                                       l.detections, l.seeds]),
    "ingest": (lambda l: [], lambda l: [l.frames]),
    "detect": (lambda l: [l.detections], lambda l: [l.filtered, l.seeds]),
    "track": (lambda l: [l.seeds], lambda l: [l.tracks]),
    "crop": (lambda l: [l.frames, l.tracks, l.labels], lambda l: [l.crops]),
    "embed": (lambda l: [l.crop_manifest, l.crops], lambda l: [l.store]),
    "train": (lambda l: [l.store], lambda l: [l.model]),
    "eval-det": (lambda l: [l.gt_tracks, l.detections, l.filtered],
                 lambda l: [l.reports / "detection.json", l.reports / "detection.txt"]),
    "eval-mot": (lambda l: [l.gt_tracks, l.tracks],
                 lambda l: [l.reports / "mot.json", l.reports / "mot.txt"]),
    "eval-cls": (lambda l: [l.model, l.store],
                 lambda l: [l.reports / "classification_test.json"]),
    "tsne": (lambda l: [l.store], lambda l: [l.points]),
}

_STAGE_FN = {
    "synth": stage_synth, "ingest": stage_ingest, "detect": stage_detect,
    "track": stage_track, "crop": stage_crop, "embed": stage_embed,
    "train": stage_train, "eval-det": stage_eval_det, "eval-mot": stage_eval_mot,
    "eval-cls": stage_eval_cls, "tsne": stage_tsne,
}


class _RootLock:
    def __init__(self, lay: Layout):
        self.path = lay.lock

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StageError(
                f"pipeline root {self.path.parent} is locked by another run "
                f"(remove {self.path} if that run is dead)")
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def run_pipeline(cfg: dict, stages=None, force: bool = False) -> list[dict]:
    """Execute the requested stages in fixed order under the root lock."""
    requested = list(stages) if stages else [s for s in STAGE_ORDER
                                             if s not in ("ingest", "eval-cls", "tsne")]
    unknown = [s for s in requested if s not in _STAGE_FN]
    if unknown:
        raise InvalidConfigError(f"unknown stage(s) {unknown}; choose from {STAGE_ORDER}")
    ordered = [s for s in STAGE_ORDER if s in requested]
    lay = layout_for(cfg)
    lay.root.mkdir(parents=True, exist_ok=True)
    ledger = RunLedger(lay.ledger)
    results = []
    with _RootLock(lay):
        for stage in ordered:
            inputs_fn, outputs_fn = _STAGE_IO[stage]
            input_paths = inputs_fn(lay)
            if not force and ledger.can_skip(stage, input_paths):
                results.append({"stage": stage, "status": "skipped"})
                continue
            input_digests = {str(p): digest_path(p) for p in input_paths}
            detail = _STAGE_FN[stage](cfg, lay)
            output_digests = {str(p): digest_path(p) for p in outputs_fn(lay)}
            entry = ledger.record(stage, "ok", input_digests, output_digests)
            results.append({"stage": stage, "status": "ok", "detail": detail,
                            "version": entry["version"]})
    return results
