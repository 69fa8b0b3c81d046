"""CSV tables with shortest round-trip float formatting."""

from __future__ import annotations

import csv
import io

import numpy as np

from .errors import DataError


def format_csv(columns: dict) -> str:
    """Header row plus rows of shortest round-trip decimals."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*cols):
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else repr(int(x)) for x in row])
    return buf.getvalue()


def read_csv(text: str) -> dict:
    """Columns by name; lines starting with ``#`` are skipped."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise DataError("empty CSV")
    names = rows[0]
    body = []
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != len(names):
            raise DataError(f"CSV row {i} has {len(r)} fields, expected {len(names)}")
        try:
            body.append([float(x) for x in r])
        except ValueError as err:
            raise DataError(f"CSV row {i}: {err}") from None
    data = np.array(body, dtype=float).reshape(-1, len(names))
    return {k: data[:, i] for i, k in enumerate(names)}
