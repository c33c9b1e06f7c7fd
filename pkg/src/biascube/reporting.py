"""JSON-lines and CSV emission for verification runs.

Records are emitted with sorted keys and fixed separators so identical runs
produce byte-identical lines; the only timestamp lives in the single header
record.
"""

from __future__ import annotations

import csv
import json
import time
from typing import IO, Iterable


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    return value


def header_record(command: str, params: dict) -> dict:
    return {
        "record": "header",
        "command": command,
        "params": _plain(params),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }


def dump_jsonl(records: Iterable[dict], stream: IO[str]) -> None:
    for rec in records:
        stream.write(json.dumps(_plain(rec), sort_keys=True, separators=(",", ":")) + "\n")


def write_csv(rows: Iterable[dict], columns: list[str], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _plain(v) for k, v in row.items() if k in columns})
