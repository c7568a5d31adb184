"""File formats: model documents, matrix CSVs, indicator exports, raw series."""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import List, Optional

import numpy as np

from .core import Generator, InitialDistribution, StatePartition
from .errors import EmptySeries, ModelError

__all__ = [
    "DataFormatError",
    "ModelDocument",
    "read_model",
    "write_model",
    "read_matrix_csv",
    "write_matrix_csv",
    "model_fingerprint",
    "series_to_csv",
    "series_to_json",
    "read_series_csv",
    "RawSeries",
    "dump_json",
]


class DataFormatError(ModelError):
    """Malformed input file; the message carries the line number."""


def dump_json(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed indentation, trailing newline)."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


@dataclass(frozen=True, eq=False)
class ModelDocument:
    generator: Generator
    alpha: InitialDistribution
    partition: StatePartition
    labels: tuple = ()
    name: str = ""

    def __post_init__(self):
        s = self.generator.size
        if self.alpha.size != s:
            raise ModelError(f"alpha has {self.alpha.size} entries, Q has {s} states")
        self.partition.check_size(s)
        labels = tuple(str(x) for x in self.labels) or tuple(str(i) for i in range(s))
        if len(labels) != s:
            raise ModelError(f"{len(labels)} labels for {s} states")
        object.__setattr__(self, "labels", labels)

    def to_dict(self) -> dict:
        d = {
            "states": self.generator.size,
            "labels": list(self.labels),
            "Q": self.generator.rates.tolist(),
            "alpha": self.alpha.probs.tolist(),
            "working": list(self.partition.working),
        }
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d: dict, name: str = "") -> "ModelDocument":
        for key in ("Q", "alpha", "working"):
            if key not in d:
                raise DataFormatError(f"model document lacks required key {key!r}")
        g = Generator(np.asarray(d["Q"], dtype=float))
        if "states" in d and int(d["states"]) != g.size:
            raise DataFormatError(f"'states' is {d['states']} but Q has {g.size} rows")
        return cls(
            generator=g,
            alpha=InitialDistribution(np.asarray(d["alpha"], dtype=float)),
            partition=StatePartition.from_working(d["working"], g.size),
            labels=tuple(d.get("labels", ())),
            name=str(d.get("name", name)),
        )

    @property
    def fingerprint(self) -> str:
        return model_fingerprint(self.generator, self.alpha, self.partition)


def read_model(path) -> ModelDocument:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise DataFormatError(f"{path}: model document must be a JSON object")
    return ModelDocument.from_dict(d, name=path.stem)


def write_model(path, doc: ModelDocument) -> None:
    Path(path).write_text(dump_json(doc.to_dict()))


def read_matrix_csv(path) -> np.ndarray:
    """Plain numeric grid, one matrix row per line, no header."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise DataFormatError(f"{path}: rows are empty or ragged")
    return np.array(rows)


def write_matrix_csv(path, matrix) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in m:
            w.writerow([repr(float(x)) for x in row])


def model_fingerprint(g: Generator, a: InitialDistribution, part: StatePartition) -> str:
    """SHA-256 over the exact binary values of Q, alpha and the working set."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(g.rates, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(a.probs, dtype="<f8").tobytes())
    h.update(np.asarray(part.working, dtype="<i8").tobytes())
    return h.hexdigest()


def _fmt(x: float) -> str:
    return repr(float(x))


def series_to_csv(series) -> str:
    """CSV text with header ``t,rof,ror,roi,tmr[,availability]``."""
    cols = series.columns()
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(cols))
    for row in zip(*cols.values()):
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def series_to_json(series, fingerprint: str, extra: Optional[dict] = None) -> str:
    doc = {name: np.asarray(v).tolist() for name, v in series.columns().items()}
    doc["model_fingerprint"] = fingerprint
    if extra:
        doc.update(extra)
    return dump_json(doc)


@dataclass(frozen=True, eq=False)
class RawSeries:
    values: np.ndarray
    timestamps: Optional[List[datetime]] = None
    source: str = ""
    missing: int = 0


def _parse_time(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def read_series_csv(path, time_column: Optional[str] = "timestamp", value_column: str = "value") -> RawSeries:
    """Read a headed CSV with an ISO-8601 time column and a numeric value column.

    Empty or ``nan`` value cells become NaN (filtered later, breaking the
    adjacent transitions). ``time_column=None`` skips timestamps.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptySeries(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if value_column not in header:
            raise DataFormatError(f"{path}: line 1: no column named {value_column!r} in {header}")
        vi = header.index(value_column)
        ti = None
        if time_column is not None:
            if time_column not in header:
                raise DataFormatError(f"{path}: line 1: no column named {time_column!r} in {header}")
            ti = header.index(time_column)
        values, times, linenos = [], [], []
        missing = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            linenos.append(lineno)
            if len(row) != len(header):
                raise DataFormatError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            cell = row[vi].strip()
            if cell == "" or cell.lower() == "nan":
                values.append(math.nan)
                missing += 1
            else:
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataFormatError(f"{path}: line {lineno}: value {cell!r} is not a number") from None
            if ti is not None:
                try:
                    times.append(_parse_time(row[ti]))
                except ValueError:
                    raise DataFormatError(f"{path}: line {lineno}: bad timestamp {row[ti]!r}") from None
    if not values:
        raise EmptySeries(f"{path}: no data rows")
    if ti is not None:
        for k in range(1, len(times)):
            if times[k] <= times[k - 1]:
                raise DataFormatError(f"{path}: line {linenos[k]}: timestamps are not increasing")
    return RawSeries(np.array(values), times if ti is not None else None, str(path), missing)
