"""Command line entry point.

Exit codes: 0 success, 2 configuration error (bad flags, bad config file),
3 dependency error (missing upstream artifact), 4 stage failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import DependencyError, HerdpipeError, InvalidConfigError
from .pipeline import Layout, load_config, merge_config, run_pipeline


def _need(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise DependencyError(f"{what} {path} not found")
    return path


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _base_config(args, **sections) -> dict:
    raw = {}
    if getattr(args, "config", None):
        text = Path(_need(args.config, "config file")).read_text("utf-8")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"config file {args.config}: {exc}") from exc
    for key, value in sections.items():
        raw.setdefault(key, {}).update(value)
    return merge_config(raw)


# --- subcommand bodies ------------------------------------------------------------

def cmd_ingest(args):
    from .ingest import ingest
    layout = ingest(_need(args.source, "source"), stride=args.stride,
                    max_chunk=args.max_chunk, out_root=args.out,
                    decoder_cmd=args.decoder_cmd)
    return {"frames": layout.n_frames, "errors": len(layout.errors),
            "out": str(args.out)}


def cmd_detect_ingest(args):
    from .detect import read_detections, write_detections
    dets = read_detections(_need(args.infile, "detections file"))
    count = write_detections(args.out, dets)
    return {"detections": count, "out": str(args.out)}


def cmd_detect_filter(args):
    from .detect import (filter_detections, make_seeds, read_detections,
                         write_detections, write_seeds)
    dets = read_detections(_need(args.infile, "detections file"))
    kept = filter_detections(dets, set(args.labels), args.threshold)
    count = write_detections(args.out, kept)
    result = {"kept": count, "out": str(args.out)}
    if args.seeds:
        first = [d for d in kept if d.frame_index == args.frame]
        frame_size = None
        if args.frame_width and args.frame_height:
            frame_size = (args.frame_width, args.frame_height)
        seed_set = make_seeds(first, naming_prefix=args.prefix,
                              frame_size=frame_size)
        write_seeds(args.seeds, seed_set)
        result["seeds"] = len(seed_set.seeds)
    return result


def cmd_review_serve(args):
    from .review import ReviewSession, make_server
    session = ReviewSession(_need(args.layout, "layout"),
                            _need(args.detections, "detections file"),
                            args.seeds_out, frame_index=args.frame)
    server = make_server(session, port=args.port, ui_dir=args.ui_dir)
    payload = session.session_payload()
    payload["port"] = server.server_address[1]
    _emit(payload)
    sys.stdout.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return None


def cmd_track(args):
    from .pipeline import stage_track
    root = Path(args.out).parent
    lay = Layout(root=root, seeds=args.seeds, tracks=args.out,
                 filtered=args.detections or root / "filtered.jsonl",
                 gt_tracks=args.gt or root / "gt_tracks.jsonl",
                 frames=args.layout or root / "layout")
    cfg = _base_config(args,
                       track={"tracker": args.tracker, "cmd": args.cmd or "",
                              "iou_floor": args.iou_floor,
                              "lookback": args.lookback},
                       detect={"frame": args.frame})
    return stage_track(cfg, lay)


def cmd_crop(args):
    from .pipeline import stage_crop
    out = Path(args.out)
    lay = Layout(root=out.parent, frames=args.layout, tracks=args.tracks,
                 labels=args.labels or out.parent / "labels.jsonl",
                 crops=out, crop_manifest=out / "manifest.jsonl")
    cfg = _base_config(args, crop={"bg": args.bg, "size": args.size,
                                   "workers": args.workers or 0,
                                   "encoder": args.encoder})
    return stage_crop(cfg, lay)


def cmd_embed(args):
    from .pipeline import stage_embed
    lay = Layout(root=Path(args.out).parent, crops=args.crops,
                 crop_manifest=args.manifest, store=args.out)
    cfg = _base_config(args, embed={"embedder": args.embedder,
                                    "cmd": args.cmd or "", "dim": args.dim})
    return stage_embed(cfg, lay)


def cmd_train(args):
    from .pipeline import stage_train
    lay = Layout(root=Path(args.out).parent, store=args.store, model=args.out,
                 reports=args.reports or Path(args.out).parent / "reports")
    train_overrides = {}
    for field in ("learning_rate", "weight_decay", "max_epochs", "patience",
                  "batch_size", "seed"):
        value = getattr(args, field)
        if value is not None:
            train_overrides[field] = value
    cfg = _base_config(args, learn={"model": args.model, "window": args.window,
                                    "stride": args.stride,
                                    "majority_floor": args.majority_floor,
                                    "train": train_overrides})
    return stage_train(cfg, lay)


def cmd_eval_det(args):
    from .detect import detections_by_frame, evaluate_detection, read_detections
    from .pipeline import _read_gt_boxes
    from .reports import render_detection_table, write_detection_report
    gt = _read_gt_boxes(_need(args.gt, "ground-truth file"))
    dets = detections_by_frame(read_detections(_need(args.det, "detections file")))
    report = evaluate_detection(gt, dets, iou_thr=args.iou,
                                score_threshold=args.score_threshold)
    write_detection_report(args.report, report)
    if args.table:
        Path(args.table).write_text(render_detection_table(report.metrics()), "utf-8")
    return report.metrics()


def cmd_eval_mot(args):
    from .reports import render_mot_table, write_mot_report
    from .track import evaluate_mot, read_tracks
    gt = read_tracks(_need(args.gt, "ground-truth tracks"), tracker_id="gt")
    pred = read_tracks(_need(args.pred, "predicted tracks"), tracker_id="pred")
    report = evaluate_mot(gt, pred, iou_thr=args.iou)
    write_mot_report(args.report, report, sequence=args.sequence)
    if args.table:
        Path(args.table).write_text(
            render_mot_table([(args.sequence, report.metrics())]), "utf-8")
    return report.metrics()


def cmd_eval_cls(args):
    from .pipeline import evaluate_classifier
    from .reports import (classification_report_payload,
                          render_classification_table,
                          write_classification_report)
    report = evaluate_classifier(args.model, args.store, split=args.split)
    write_classification_report(args.report, report)
    if args.table:
        payload = classification_report_payload(report)
        Path(args.table).write_text(render_classification_table(payload), "utf-8")
    return {"accuracy": report.accuracy, "split": args.split}


def cmd_tsne(args):
    from .pipeline import stage_tsne
    lay = Layout(root=Path(args.out).parent, store=args.store, points=args.out)
    cfg = _base_config(args, tsne={"perplexity": args.perplexity,
                                   "iterations": args.iterations,
                                   "limit": args.limit})
    if args.seed is not None:
        cfg["seed"] = args.seed
    return stage_tsne(cfg, lay)


def cmd_overlay(args):
    import numpy as np
    from PIL import Image
    from .ingest import load_layout
    from .overlay import OverlayItem, render_overlay
    from .track import read_tracks
    layout = load_layout(_need(args.layout, "layout"))
    frame = np.asarray(Image.open(layout.frame_path(args.frame)).convert("RGB"))
    items = []
    run = read_tracks(_need(args.tracks, "tracks file"))
    for traj in run.trajectories:
        entry = traj.entries.get(args.frame)
        if entry is not None:
            items.append(OverlayItem(identity=traj.identity, box=entry.box,
                                     mask=entry.mask))
    rendered = render_overlay(frame, items, palette_seed=args.palette_seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rendered).save(args.out, format="PNG")
    return {"frame": args.frame, "items": len(items), "out": str(args.out)}


def cmd_synth(args):
    from .pipeline import stage_synth
    lay = Layout(root=args.out)
    cfg = _base_config(args, synth={"objects": args.objects,
                                    "frames": args.frames,
                                    "width": args.width, "height": args.height,
                                    "phase_len": args.phase_len})
    return stage_synth(cfg, lay)


def cmd_run(args):
    cfg = load_config(args.config)
    stages = args.stages.split(",") if args.stages else None
    results = run_pipeline(cfg, stages=stages, force=args.force)
    return {"stages": results}


# --- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="herdpipe",
        description="File-oriented video behavior analysis pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="sample a video or image directory into chunked frames")
    p.add_argument("--source", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--max-chunk", type=int, default=3000)
    p.add_argument("--decoder-cmd", default=None,
                   help="template with {input} {stride} {out_pattern} for video sources")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("detect-ingest", help="validate and canonicalize a detections file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_detect_ingest)

    p = sub.add_parser("detect-filter", help="two-stage filter: label set then score threshold")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", nargs="+", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seeds", default=None, help="also write seeds for --frame here")
    p.add_argument("--frame", type=int, default=1)
    p.add_argument("--prefix", default="pig")
    p.add_argument("--frame-width", type=float, default=None)
    p.add_argument("--frame-height", type=float, default=None)
    p.set_defaults(fn=cmd_detect_filter)

    p = sub.add_parser("review-serve", help="serve one frame and its candidates for human review")
    p.add_argument("--layout", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--seeds-out", required=True)
    p.add_argument("--frame", type=int, default=1)
    p.add_argument("--port", type=int, default=0, help="0 picks a free port")
    p.add_argument("--ui-dir", default=None, help="serve a built UI from this directory")
    p.set_defaults(fn=cmd_review_serve)

    p = sub.add_parser("track", help="run a tracker from seeds")
    p.add_argument("--tracker", choices=("naive", "oracle", "external"), default="naive")
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frame", type=int, default=1, help="seed frame index")
    p.add_argument("--detections", default=None, help="per-frame boxes for the naive tracker")
    p.add_argument("--gt", default=None, help="ground-truth tracks for the oracle tracker")
    p.add_argument("--layout", default=None, help="chunked frames for the external tracker")
    p.add_argument("--cmd", default=None,
                   help="template with {chunk_dir} {seeds_file} {out_file}")
    p.add_argument("--iou-floor", type=float, default=0.3)
    p.add_argument("--lookback", type=int, default=1)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_track)

    p = sub.add_parser("crop", help="cut, mask, and resize per-identity crops")
    p.add_argument("--layout", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", default=None, help="sparse behavior annotations")
    p.add_argument("--bg", choices=("black", "white"), default="black")
    p.add_argument("--size", type=int, default=224)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--encoder", choices=("jpeg", "png"), default="jpeg")
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_crop)

    p = sub.add_parser("embed", help="embed crops into a vector store")
    p.add_argument("--crops", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embedder", choices=("toy", "external"), default="toy")
    p.add_argument("--cmd", default=None,
                   help="template with {manifest} {out_dir} {dim}")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("train", help="train a behavior classifier from a store")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=("mlp", "bilstm"), default="mlp")
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--majority-floor", type=float, default=0.5)
    p.add_argument("--reports", default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval-det", help="detection metrics against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--det", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--table", default=None)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--score-threshold", type=float, default=0.5)
    p.set_defaults(fn=cmd_eval_det)

    p = sub.add_parser("eval-mot", help="tracking metrics against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--table", default=None)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--sequence", default="sequence")
    p.set_defaults(fn=cmd_eval_mot)

    p = sub.add_parser("eval-cls", help="classification metrics on a held-out split")
    p.add_argument("--model", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--table", default=None)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(fn=cmd_eval_cls)

    p = sub.add_parser("tsne", help="project a store to 2-D for inspection")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--limit", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_tsne)

    p = sub.add_parser("overlay", help="render identity boxes and masks onto a frame")
    p.add_argument("--layout", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--palette-seed", type=int, default=0)
    p.set_defaults(fn=cmd_overlay)

    p = sub.add_parser("synth", help="generate a synthetic labeled sequence")
    p.add_argument("--out", required=True)
    p.add_argument("--objects", type=int, default=4)
    p.add_argument("--frames", type=int, default=600)
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=160)
    p.add_argument("--phase-len", type=int, default=50)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("run", help="run configured stages in order with the digest ledger")
    p.add_argument("--config", required=True)
    p.add_argument("--stages", default=None, help="comma-separated subset")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.fn(args)
    except InvalidConfigError as exc:
        print(f"herdpipe: config error: {exc}", file=sys.stderr)
        return 2
    except DependencyError as exc:
        print(f"herdpipe: dependency error: {exc}", file=sys.stderr)
        return 3
    except HerdpipeError as exc:
        print(f"herdpipe: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"herdpipe: {exc}", file=sys.stderr)
        return 4
    if result is not None:
        _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
