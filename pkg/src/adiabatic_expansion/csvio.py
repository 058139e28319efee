"""CSV input/output: field profiles and report tables.

Floats are written with 17 significant digits so identical runs produce
byte-identical files; files are written to a temporary name and renamed.
"""
from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .operators import TimeGrid
from .spin import FieldCurve

FIELD_HEADER = ["t", "r", "theta", "phi"]


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_table(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_table(path, header, rows) -> None:
    atomic_write_text(path, format_table(header, rows))


def write_columns(path, columns: dict) -> None:
    """Write equal-length columns given as an ordered mapping name -> values."""
    header = list(columns)
    rows = zip(*(np.asarray(v).tolist() for v in columns.values()))
    write_table(path, header, rows)


def write_field_csv(path, field: FieldCurve, grid: TimeGrid) -> None:
    """Export a field curve sampled on ``grid`` as ``t,r,theta,phi``."""
    s = field.sample(grid.times)
    write_columns(path, {"t": grid.times, "r": s["r"], "theta": s["theta"], "phi": s["phi"]})


def read_field_csv(path, b: float) -> FieldCurve:
    """Load a ``t,r,theta,phi`` profile (radians, strictly increasing t from 0)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != FIELD_HEADER:
            raise ValidationError(f"{path}: header must be {','.join(FIELD_HEADER)}, got {header!r}")
        try:
            data = np.array([[float(x) for x in row] for row in reader if row], dtype=float)
        except ValueError as exc:
            raise ValidationError(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[1] != 4:
        raise ValidationError(f"{path}: expected 4 columns per row")
    grid = TimeGrid(data[:, 0])
    field = FieldCurve.from_samples(b, grid, data[:, 1], data[:, 2], data[:, 3])
    field.validate(grid)
    return field
