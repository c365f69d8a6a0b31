"""Atomic writers for records, aggregates and the run manifest.

Each file goes to a temporary sibling first and is moved into place with
os.replace, so readers never observe a partial file. The manifest is written
last; a run without a manifest marked complete did not finish.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel

from .schemas import RunManifest, SampleRecord

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
AGGREGATE_HEADER = ["model", "K", "sigma", "beta", "n", "f_mean", "f_stderr", "s_mean", "s_stderr", "method"]
HPS_AGGREGATE_HEADER = [*AGGREGATE_HEADER, "p"]


def format_value(value: Any) -> str:
    """Render floats with 17 significant digits so reruns compare byte for byte."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".17g")
    if value is None:
        return ""
    return str(value)


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_jsonl(path: str | Path, records: Iterable[BaseModel]) -> Path:
    body = "".join(r.model_dump_json() + "\n" for r in records)
    return atomic_write_text(path, body)


def read_jsonl(path: str | Path) -> list[SampleRecord]:
    with open(path, encoding="utf-8") as f:
        return [SampleRecord.model_validate_json(line) for line in f if line.strip()]


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_json(path: str | Path, payload: BaseModel | dict[str, Any]) -> Path:
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=2)
    else:
        text = json.dumps(payload, indent=2, sort_keys=True)
    return atomic_write_text(path, text + "\n")


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(
    out_dir: str | Path,
    config: dict[str, Any],
    command: str,
    files: Iterable[str | Path],
    version: str,
    *,
    status: Literal["running", "complete"] = "complete",
) -> Path:
    """Digest every written file and record the run status.

    Commands write a "running" manifest before touching any output so a rerun
    killed midway never leaves an earlier "complete" manifest behind.
    """
    out_dir = Path(out_dir)
    digests = {Path(os.path.relpath(p, out_dir)).as_posix(): file_digest(p) for p in files}
    manifest = RunManifest(config=config, version=version, command=command, digests=dict(sorted(digests.items())),
                           status=status)
    path = write_json(out_dir / MANIFEST_NAME, manifest)
    logger.info("wrote %s (%s, %d files)", path, status, len(digests))
    return path


def read_manifest(out_dir: str | Path) -> RunManifest | None:
    path = Path(out_dir) / MANIFEST_NAME
    if not path.is_file():
        return None
    return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
