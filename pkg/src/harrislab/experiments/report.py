"""Writing results: one versioned CSV per table plus a JSON report.

The JSON report embeds the experiment settings, master seed and package version.  Its
``timestamp`` field is the only content that changes between identical runs;
CSV files carry no timestamp at all.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from pathlib import Path

import numpy as np

from .. import __version__
from .._io import read_csv, write_csv
from .types import ExperimentResult

TABLE_VERSION = 1
SUMMARY_SCHEMA = ("harrislab.experiments.summary", 1)
REPORT_SUFFIX = ".report.json"


def jsonable(v):
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "+inf" if f > 0 else "-inf"
        return f
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    return v


def stem(result: ExperimentResult) -> str:
    return result.spec.preset or result.kind


def write_result(result: ExperimentResult, out_dir, fmt: str = "csv",
                 timestamp: str | None = None) -> dict[str, Path]:
    if fmt not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = stem(result)
    paths: dict[str, Path] = {}
    tables = {}
    for t in result.tables:
        if fmt == "csv":
            p = out / f"{name}.{t.name}.csv"
            write_csv(p, f"harrislab.{result.kind}.{t.name}", TABLE_VERSION, t.columns, t.rows)
            paths[t.name] = p
        else:
            tables[t.name] = {"columns": list(t.columns), "rows": jsonable(t.rows)}
    report = {
        "kind": result.kind,
        "verdict": result.verdict,
        "exit_code": result.exit_code,
        "metrics": jsonable(result.metrics),
        "notes": list(result.notes),
        "spec": jsonable(result.spec.to_dict()),
        "seed": result.spec.seed,
        "version": __version__,
        "tables": sorted(paths) if fmt == "csv" else tables,
        "timestamp": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    p = out / f"{name}{REPORT_SUFFIX}"
    p.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    paths["report"] = p
    return paths


def summarize(out_dir) -> tuple[list[dict], Path]:
    """Collect every report in ``out_dir`` into ``summary.csv``."""
    out = Path(out_dir)
    reports = []
    for p in sorted(out.glob(f"*{REPORT_SUFFIX}")):
        r = json.loads(p.read_text())
        reports.append({"name": p.name[:-len(REPORT_SUFFIX)], "kind": r["kind"],
                        "verdict": r["verdict"], "seed": r["seed"], "version": r["version"]})
    path = write_csv(out / "summary.csv", *SUMMARY_SCHEMA,
                     ("name", "kind", "verdict", "seed", "version"),
                     [(r["name"], r["kind"], r["verdict"], r["seed"], r["version"])
                      for r in reports])
    return reports, path


__all__ = ["write_result", "summarize", "jsonable", "read_csv", "stem"]
