"""Line-delimited JSON files with a one-line header record."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def make_header(schema: str, config: dict, **extra) -> dict:
    return {
        "schema": schema,
        "version": f"srdiff-{__version__}",
        "config": config,
        "config_hash": config_hash(config),
        **extra,
    }


def write_jsonl(path, header: dict, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True, default=str) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_jsonl(path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path} is empty")
    return json.loads(lines[0]), [json.loads(line) for line in lines[1:] if line.strip()]
