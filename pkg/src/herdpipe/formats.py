"""Line-delimited structured text (JSONL) helpers shared by every stage.

Each on-disk record file is UTF-8 text, one JSON object per line.  Floats
round-trip losslessly through ``json`` (shortest-repr encoding), so a stage's
output consumed from a file equals the output consumed in-process.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from .errors import FormatError


def write_jsonl(path, records: Iterable[dict]) -> int:
    """Write records as one JSON object per line; returns the record count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":"), sort_keys=True))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path) -> Iterator[dict]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            if not isinstance(rec, dict):
                raise FormatError(f"{path}:{lineno}: expected a JSON object")
            yield rec


def require_fields(rec: dict, fields: Iterable[str], context: str) -> None:
    missing = [f for f in fields if f not in rec]
    if missing:
        raise FormatError(f"{context}: record missing fields {missing}: {rec}")
