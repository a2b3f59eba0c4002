"""CSV ingestion and crash-safe output writing."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DataError, EmptyData, MissingColumn, NonNumericValue

MISSING = {"", "na", "nan", "null", "none", "."}


@dataclass(frozen=True)
class ModelSpec:
    """Column roles for a model read from CSV.

    There is no intercept column: cell means absorb any constant.
    """

    response: str
    linear: tuple[str, ...]
    nonparam_continuous: tuple[str, ...] = ()
    nonparam_categorical: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("linear", "nonparam_continuous", "nonparam_categorical"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        cols = self.linear + self.nonparam_continuous + self.nonparam_categorical
        if len(set(cols)) != len(cols):
            raise DataError("a column may play only one role")
        if self.response in cols:
            raise DataError(f"response {self.response!r} is also listed as a covariate")
        if not self.linear:
            raise DataError("at least one linear covariate required")

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.response,) + self.linear + self.nonparam_continuous + self.nonparam_categorical


def load_csv(path, spec: ModelSpec) -> Dataset:
    """Read ``path`` into a :class:`Dataset` according to ``spec``.

    Categorical columns are read as strings and coded by sorted level.
    Rows with a missing value in any referenced column are rejected, and the
    error lists their line numbers (the header is line 1).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyData(f"{path}: file is empty") from None
        missing = [c for c in spec.columns if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {missing}; header has {header}")
        idx = {c: header.index(c) for c in spec.columns}
        rows = [(reader.line_num, r) for r in reader if any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyData(f"{path}: no data rows")

    bad = []
    for line, r in rows:
        for c in spec.columns:
            if idx[c] >= len(r) or r[idx[c]].strip().lower() in MISSING:
                bad.append(f"line {line} column {c!r}")
    if bad:
        shown = "; ".join(bad[:20]) + ("; ..." if len(bad) > 20 else "")
        raise DataError(f"{path}: missing values ({len(bad)}): {shown}")

    numeric = (spec.response,) + spec.linear + spec.nonparam_continuous
    values = {c: np.empty(len(rows)) for c in numeric}
    for i, (line, r) in enumerate(rows):
        for c in numeric:
            raw = r[idx[c]].strip()
            try:
                v = float(raw)
            except ValueError:
                raise NonNumericValue(line, c, raw) from None
            if not math.isfinite(v):
                raise NonNumericValue(line, c, raw)
            values[c][i] = v

    codes, levels = [], []
    for c in spec.nonparam_categorical:
        raw = [r[idx[c]].strip() for _, r in rows]
        lv = sorted(set(raw))
        lookup = {v: k for k, v in enumerate(lv)}
        codes.append([lookup[v] for v in raw])
        levels.append(tuple(lv))

    n = len(rows)
    x = np.column_stack([values[c] for c in spec.linear])
    for j, c in enumerate(spec.linear):
        if np.ptp(x[:, j]) == 0:
            raise DataError(
                f"linear covariate {c!r} is constant; drop it (cell means already act as an intercept)"
            )
    zc = np.column_stack([values[c] for c in spec.nonparam_continuous]) if spec.nonparam_continuous \
        else np.zeros((n, 0))
    zd = np.array(codes, dtype=np.int64).T if codes else None
    return Dataset(values[spec.response], x, spec.linear, zc, spec.nonparam_continuous, zd,
                   spec.nonparam_categorical, tuple(levels))


def _atomic(path: Path, write):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def fmt(v) -> str:
    """17 significant digits for floats; integers and strings unchanged."""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows):
    """Write a header plus rows, then rename into place."""
    def _w(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])

    _atomic(Path(path), _w)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=False) + "\n"


def write_json(path, obj):
    text = dumps(obj)
    _atomic(Path(path), lambda fh: fh.write(text))
