"""Delimited output files: a ``#``-prefixed metadata block, a header row, and
rows of numbers written with 17 significant digits so they round-trip."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

__all__ = ["fmt", "render_csv", "parse_csv", "render_json", "write_outputs", "check_writable"]


def fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    try:
        return format(float(v), ".17g")
    except (TypeError, ValueError):
        return str(v)


def render_csv(meta: Mapping[str, Any], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {value if isinstance(value, str) else json.dumps(value)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def parse_csv(text: str):
    """Inverse of :func:`render_csv`: (meta, columns, rows) with numeric cells as floats."""
    meta: dict[str, Any] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(": ")
            try:
                meta[key] = json.loads(value)
            except json.JSONDecodeError:
                meta[key] = value
        elif line:
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    rows = []
    for raw in reader:
        row = []
        for cell in raw:
            try:
                row.append(float(cell))
            except ValueError:
                row.append(cell)
        rows.append(row)
    return meta, columns, rows


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (bool, int, float, str)) or v is None:
        return v
    try:
        return float(v)
    except (TypeError, ValueError):
        return str(v)


def render_json(meta: Mapping[str, Any], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    doc = {
        "meta": {k: _jsonable(v) if not isinstance(v, (dict, list)) else v for k, v in meta.items()},
        "columns": list(columns),
        "rows": [[_jsonable(v) for v in row] for row in rows],
    }
    return json.dumps(doc, indent=1) + "\n"


def check_writable(paths: Iterable[Path], force: bool):
    for p in paths:
        if p.exists() and not force:
            raise FileExistsError(f"{p} exists; pass --force to overwrite")


def write_outputs(path: Path, text: str, json_text: str | None, force: bool) -> list[Path]:
    targets = [path] + ([path.with_suffix(path.suffix + ".json")] if json_text is not None else [])
    check_writable(targets, force)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    if json_text is not None:
        targets[1].write_text(json_text)
    return targets
