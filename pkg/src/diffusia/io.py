"""CSV ingestion and deterministic report writers."""
from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .estimation import SalesSeries

MIN_ROWS = 24
_MONTH = re.compile(r"^(\d{4})-(\d{2})$")


def _parse_month(text: str, row: int) -> int:
    m = _MONTH.match(text.strip())
    if not m or not 1 <= int(m.group(2)) <= 12:
        raise ValidationError(f"row {row}, column month: {text!r} is not a YYYY-MM month")
    return int(m.group(1)) * 12 + int(m.group(2)) - 1


def _parse_number(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"row {row}, column {column}: {text!r} is not numeric") from None
    if not math.isfinite(value):
        raise ValidationError(f"row {row}, column {column}: {text!r} is not finite")
    return value


def ingest(path) -> SalesSeries:
    """Read ``t,<brand1>,<brand2>`` or ``month,<brand1>,<brand2>`` monthly sales.

    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path} is empty") from None
        if len(header) != 3 or header[0].lower() not in ("t", "month"):
            raise ValidationError(f"header must be 't,<brand1>,<brand2>' or 'month,<brand1>,<brand2>', got {header}")
        by_month = header[0].lower() == "month"
        times, s1, s2 = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ValidationError(f"row {row_no}: expected 3 columns, got {len(row)}")
            if by_month:
                times.append(_parse_month(row[0], row_no))
            else:
                t = _parse_number(row[0], row_no, header[0])
                if t != int(t):
                    raise ValidationError(f"row {row_no}, column t: {row[0]!r} is not a whole month")
                times.append(int(t))
            for col, store in ((1, s1), (2, s2)):
                v = _parse_number(row[col], row_no, header[col])
                if v < 0:
                    raise ValidationError(f"row {row_no}, column {header[col]}: negative sales {v:g}")
                store.append(v)
    if len(times) < MIN_ROWS:
        raise ValidationError(f"{path} has {len(times)} data rows; at least {MIN_ROWS} are required")
    for i in range(1, len(times)):
        if times[i] != times[i - 1] + 1:
            raise ValidationError(f"row {i + 2}: months are not consecutive (missing or repeated month)")
    if by_month:
        t = np.arange(1, len(times) + 1, dtype=float)
    else:
        t = np.asarray(times, dtype=float)
        if t[0] < 1:
            raise ValidationError("row 2, column t: months are counted from 1")
    return SalesSeries(t, np.asarray(s1), np.asarray(s2), (header[1], header[2]))


def fmt(value) -> str:
    """Twelve significant digits in scientific notation."""
    return f"{float(value):.11e}"


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float printed by :func:`fmt`, keys sorted."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, bool):
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{to_json(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{to_json(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, obj) -> None:
    Path(path).write_text(to_json(obj) + "\n", encoding="utf-8")


def write_csv(path, columns: dict) -> None:
    """Write equal-length columns; floats via :func:`fmt`, integers verbatim."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for i in range(len(arrays[0])):
            row = []
            for a in arrays:
                v = a[i]
                if np.issubdtype(a.dtype, np.integer):
                    row.append(str(int(v)))
                elif np.issubdtype(a.dtype, np.floating) and not np.isfinite(v):
                    row.append("")
                else:
                    row.append(fmt(v))
            writer.writerow(row)
