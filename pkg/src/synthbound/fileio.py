"""Bit-exact file formats: dataset CSVs, loss streams, region-mass vectors,
and the structured run report.

These formats are the boundary external models and generators cross.  All
files are locale-independent (dot decimal separator, LF line endings) and all
floats are written in their shortest round-trip form, so writing what was read
reproduces the bytes.  Reports are canonical JSON (sorted keys, two-space
indent); re-parsing and re-serializing a report is byte-identical.
"""

from __future__ import annotations

import csv
import gzip
import io as _io
import json
import math
import os

import numpy as np

from .core import Dataset, InvalidInputError

SCHEMA_VERSION = 1


class ParseError(ValueError):
    """Malformed input file; carries the path and 1-based line number."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class JoinError(ValueError):
    """A dataset id has no matching loss row."""

    def __init__(self, sample_id: str):
        super().__init__(f"no loss recorded for id {sample_id!r}")
        self.sample_id = sample_id


def fmt(value: float) -> str:
    """Shortest decimal string that parses back to the same double."""
    return repr(float(value))


def _open_read(path: str):
    if path.endswith(".gz"):
        return _io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


def _open_write(path: str):
    if path.endswith(".gz"):
        return _io.TextIOWrapper(gzip.open(path, "wb"), encoding="utf-8", newline="")
    return open(path, "w", encoding="utf-8", newline="")


def _parse_float(path: str, line: int, token: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(path, line, f"non-numeric cell {token!r}") from None
    if not math.isfinite(value):
        raise ParseError(path, line, f"non-finite cell {token!r}")
    return value


def read_dataset(path: str) -> Dataset:
    """Read a dataset CSV with header id,f0,...,f{d-1},label."""
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header") from None
        if len(header) < 3 or header[0] != "id" or header[-1] != "label":
            raise ParseError(path, 1, f"bad header {header!r}; expected "
                                      f"id,f0,...,label")
        d = len(header) - 2
        expected = ["id"] + [f"f{i}" for i in range(d)] + ["label"]
        if header != expected:
            raise ParseError(path, 1, f"bad header {header!r}; expected {expected!r}")
        ids: list[str] = []
        seen: set[str] = set()
        feats: list[list[float]] = []
        labels: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise ParseError(path, lineno,
                                 f"expected {d + 2} cells, found {len(row)}")
            sid = row[0]
            if not sid:
                raise ParseError(path, lineno, "empty id")
            if sid in seen:
                raise ParseError(path, lineno, f"duplicate id {sid!r}")
            seen.add(sid)
            ids.append(sid)
            feats.append([_parse_float(path, lineno, tok) for tok in row[1:-1]])
            labels.append(_parse_float(path, lineno, row[-1]))
    if not ids:
        return Dataset(np.empty((0, d)), np.empty(0), [])
    return Dataset(np.array(feats), np.array(labels), ids)


def write_dataset(data: Dataset, path: str) -> None:
    if data.ids is None:
        raise InvalidInputError(
            "dataset has no ids; assign them (e.g. with_ids()) before writing")
    with _open_write(path) as fh:
        fh.write(",".join(["id"] + [f"f{i}" for i in range(data.d)] + ["label"]) + "\n")
        for i in range(len(data)):
            cells = [data.ids[i]] + [fmt(v) for v in data.features[i]] + \
                [fmt(data.labels[i])]
            fh.write(",".join(cells) + "\n")


def read_losses(path: str) -> dict[str, float]:
    """Read a loss stream CSV with header id,loss; returns an ordered map."""
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header") from None
        if header != ["id", "loss"]:
            raise ParseError(path, 1, f"bad header {header!r}; expected id,loss")
        out: dict[str, float] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(path, lineno, f"expected 2 cells, found {len(row)}")
            sid, tok = row
            if not sid:
                raise ParseError(path, lineno, "empty id")
            if sid in out:
                raise ParseError(path, lineno, f"duplicate id {sid!r}")
            value = _parse_float(path, lineno, tok)
            if value < 0:
                raise ParseError(path, lineno, f"negative loss {tok!r}")
            out[sid] = value
    return out


def write_losses(losses: dict[str, float], path: str) -> None:
    with _open_write(path) as fh:
        fh.write("id,loss\n")
        for sid, value in losses.items():
            fh.write(f"{sid},{fmt(value)}\n")


def join_losses(data: Dataset, losses: dict[str, float]) -> np.ndarray:
    """Losses aligned to dataset order; every dataset id must be present."""
    if data.ids is None:
        raise InvalidInputError("dataset has no ids to join on")
    out = np.empty(len(data))
    for i, sid in enumerate(data.ids):
        if sid not in losses:
            raise JoinError(sid)
        out[i] = losses[sid]
    return out


def write_region_mass(mass, path: str) -> None:
    with _open_write(path) as fh:
        fh.write("region,p_hat\n")
        for i, p in enumerate(mass.p_hat):
            fh.write(f"{i},{fmt(p)}\n")


def write_table(path: str, header: list[str], rows) -> None:
    """Generic CSV table with canonical float formatting; None becomes the
    empty cell."""
    with _open_write(path) as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if v is None:
                    cells.append("")
                elif isinstance(v, bool):
                    cells.append("true" if v else "false")
                elif isinstance(v, (int, np.integer)):
                    cells.append(str(int(v)))
                elif isinstance(v, (float, np.floating)):
                    cells.append(fmt(v))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")


def _sanitize(obj, trail="root"):
    """Make a report JSON-safe: finite numbers stay; non-finite numbers become
    null with a reason recorded next to them."""
    if isinstance(obj, dict):
        out = {}
        for key, value in sorted(obj.items()):
            if isinstance(value, (float, np.floating)) and not math.isfinite(value):
                out[key] = None
                out[f"{key}_reason"] = "non-finite value"
            else:
                out[key] = _sanitize(value, f"{trail}.{key}")
        return out
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v, f"{trail}[]") for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_sanitize(v, trail) for v in obj.tolist()]
    if isinstance(obj, set):
        return sorted(obj)
    return obj


def report_to_json(report: dict) -> str:
    """Canonical serialization: sorted keys, two-space indent, LF endings."""
    body = dict(report)
    body.setdefault("schema_version", SCHEMA_VERSION)
    return json.dumps(_sanitize(body), sort_keys=True, indent=2,
                      allow_nan=False) + "\n"


def write_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report_to_json(report))


def read_report(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
