"""Local HTTP endpoints for human seed review.

Serves one frame of an ingested sequence plus its candidate detections to a
browser client, and accepts the reviewed seed list back.  Everything speaks
the same JSONL formats as the files on disk; the server is a thin adapter,
not a second source of truth.

Routes (all JSON unless noted):
  GET  /api/session            review context: frame index, image size, counts
  GET  /api/frame/<index>      the frame as PNG
  GET  /api/candidates         candidate detections for the frame, JSONL
  POST /api/seeds              reviewed seeds, JSONL body; writes seeds file
"""

from __future__ import annotations

import io
import json
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from PIL import Image

from . import __version__
from .detect import (
    PROVENANCE_HUMAN,
    Seed,
    SeedSet,
    read_detections,
    write_seeds,
)
from .errors import DependencyError, FormatError, HerdpipeError, NoSeedsError
from .geometry import BBox
from .ingest import load_layout

JSONL_TYPE = "application/x-ndjson"


class ReviewSession:
    """State shared by all requests: the frame, its candidates, the output path."""

    def __init__(self, layout_root, detections_path, seeds_out, frame_index: int = 1):
        self.layout = load_layout(layout_root)
        self.frame_index = int(frame_index)
        self.seeds_out = Path(seeds_out)
        detections_path = Path(detections_path)
        if not detections_path.exists():
            raise DependencyError(f"detections file {detections_path} not found")
        self.candidates = [d for d in read_detections(detections_path)
                           if d.frame_index == self.frame_index]
        self.frame_path = self.layout.frame_path(self.frame_index)
        with Image.open(self.frame_path) as im:
            self.frame_size = (im.width, im.height)
        self.saved_count: int | None = None

    def frame_png(self) -> bytes:
        with Image.open(self.frame_path) as im:
            buf = io.BytesIO()
            im.convert("RGB").save(buf, format="PNG")
        return buf.getvalue()

    def candidates_jsonl(self) -> str:
        lines = []
        for det in self.candidates:
            lines.append(json.dumps({
                "frame_index": det.frame_index, "label": det.label,
                "score": det.score, "x": det.box.x, "y": det.box.y,
                "w": det.box.w, "h": det.box.h}, sort_keys=True))
        return "".join(line + "\n" for line in lines)

    def session_payload(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "frame_width": self.frame_size[0],
            "frame_height": self.frame_size[1],
            "n_candidates": len(self.candidates),
            "seeds_path": str(self.seeds_out),
            "version": __version__,
        }

    def save_seeds(self, body: bytes) -> int:
        """Parse a JSONL seed body and write the reviewed seeds file."""
        seeds = []
        for lineno, line in enumerate(body.decode("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"seeds body line {lineno}: {exc}") from exc
            for field in ("object_name", "x", "y", "w", "h"):
                if field not in rec:
                    raise FormatError(f"seeds body line {lineno} missing {field!r}")
            box = BBox(float(rec["x"]), float(rec["y"]),
                       float(rec["w"]), float(rec["h"]))
            box = box.clamped(float(self.frame_size[0]), float(self.frame_size[1]))
            seeds.append(Seed(object_name=str(rec["object_name"]), box=box))
        if not seeds:
            raise NoSeedsError("review produced zero seeds; refusing to save")
        seed_set = SeedSet(frame_index=self.frame_index, seeds=seeds,
                           provenance=PROVENANCE_HUMAN)
        write_seeds(self.seeds_out, seed_set)
        self.saved_count = len(seeds)
        return len(seeds)


class _Handler(BaseHTTPRequestHandler):
    session: ReviewSession  # set by make_server
    ui_dir: Path | None = None
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        # the review UI may be served from a dev server on another port
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, payload: dict) -> None:
        self._send(status, json.dumps(payload, sort_keys=True).encode(),
                   "application/json")

    def do_OPTIONS(self):
        self.send_response(HTTPStatus.NO_CONTENT)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        path = self.path.split("?")[0]
        if path == "/api/session":
            self._send_json(HTTPStatus.OK, self.session.session_payload())
        elif path.startswith("/api/frame/"):
            tail = path.rsplit("/", 1)[-1]
            try:
                index = int(tail)
            except ValueError:
                self._send_json(HTTPStatus.BAD_REQUEST,
                                {"error": f"bad frame index {tail!r}"})
                return
            if index != self.session.frame_index:
                self._send_json(HTTPStatus.NOT_FOUND,
                                {"error": f"frame {index} not in this session"})
                return
            self._send(HTTPStatus.OK, self.session.frame_png(), "image/png")
        elif path == "/api/candidates":
            self._send(HTTPStatus.OK, self.session.candidates_jsonl().encode(),
                       JSONL_TYPE)
        elif self.ui_dir is not None:
            self._serve_static(path)
        else:
            self._send_json(HTTPStatus.NOT_FOUND, {"error": f"no route {path}"})

    def _serve_static(self, path: str) -> None:
        rel = path.lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            self._send_json(HTTPStatus.NOT_FOUND, {"error": f"no route {path}"})
            return
        types = {".html": "text/html", ".js": "text/javascript",
                 ".css": "text/css", ".map": "application/json",
                 ".png": "image/png", ".svg": "image/svg+xml"}
        self._send(HTTPStatus.OK, target.read_bytes(),
                   types.get(target.suffix, "application/octet-stream"))

    def do_POST(self):
        if self.path.split("?")[0] != "/api/seeds":
            self._send_json(HTTPStatus.NOT_FOUND, {"error": f"no route {self.path}"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)
        try:
            written = self.session.save_seeds(body)
        except (FormatError, NoSeedsError) as exc:
            self._send_json(HTTPStatus.BAD_REQUEST, {"error": str(exc)})
            return
        except HerdpipeError as exc:
            self._send_json(HTTPStatus.INTERNAL_SERVER_ERROR, {"error": str(exc)})
            return
        self._send_json(HTTPStatus.OK, {"written": written,
                                        "path": str(self.session.seeds_out)})


def make_server(session: ReviewSession, port: int = 0,
                ui_dir=None) -> ThreadingHTTPServer:
    """Bind a review server on localhost; port 0 picks a free port."""
    handler = type("BoundHandler", (_Handler,), {
        "session": session,
        "ui_dir": Path(ui_dir) if ui_dir else None,
    })
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve_forever_in_thread(server: ThreadingHTTPServer) -> threading.Thread:
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread
