"""Versioned CSV writing shared by the dump functions."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

SCHEMA_PREFIX = "# schema="


def fmt(v) -> str:
    """Stable text form: integers plain, floats by repr, infinities as literals."""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isinf(v):
            return "+inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_csv(path, schema: str, version: int, columns: Sequence[str],
              rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"{SCHEMA_PREFIX}{schema} version={version}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[str, list[str], list[list[str]]]:
    """Return (schema line, header, rows) for a file written by ``write_csv``."""
    with Path(path).open(newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(SCHEMA_PREFIX):
            raise ValueError(f"{path}: missing schema header row")
        rd = csv.reader(fh)
        header = next(rd)
        return first[len(SCHEMA_PREFIX):], header, [row for row in rd]
