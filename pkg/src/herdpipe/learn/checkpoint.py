"""Model checkpoint file: "MDL1" magic, JSON header, raw 64-bit parameters.

Layout: 4-byte magic, little-endian uint32 header length, UTF-8 JSON header
(kind, class names, parameter order and shapes, config echo, free-form extra),
then each parameter's float64 little-endian bytes in header order, row-major.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .train import TrainConfig

MAGIC = b"MDL1"


def save_checkpoint(path, kind: str, params: dict[str, np.ndarray],
                    class_names, config: TrainConfig,
                    extra: dict | None = None) -> None:
    order = sorted(params)
    header = {
        "kind": kind,
        "class_names": [str(n) for n in class_names],
        "param_order": order,
        "shapes": {k: list(params[k].shape) for k in order},
        "config": dataclasses.asdict(config),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for k in order:
            fh.write(np.ascontiguousarray(params[k], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (kind, params, class_names, TrainConfig, extra)."""
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a model checkpoint (magic {data[:4]!r})")
    (hlen,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + hlen:
        raise FormatError(f"{path}: header truncated")
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    for key in ("kind", "class_names", "param_order", "shapes", "config"):
        if key not in header:
            raise FormatError(f"{path}: header missing {key!r}")

    offset = 8 + hlen
    params: dict[str, np.ndarray] = {}
    for k in header["param_order"]:
        shape = tuple(header["shapes"][k])
        n = int(np.prod(shape)) if shape else 1
        end = offset + 8 * n
        if end > len(data):
            raise FormatError(f"{path}: parameter {k!r} truncated")
        params[k] = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    cfg = header["config"]
    if isinstance(cfg.get("split"), list):
        cfg["split"] = tuple(cfg["split"])
    config = TrainConfig(**cfg)
    return (header["kind"], params, tuple(header["class_names"]), config,
            header.get("extra", {}))
