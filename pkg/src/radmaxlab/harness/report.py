"""Reports: ordered rows plus aggregates; metadata is kept apart so bodies are reproducible.

JSON body
    ``{"experiment", "tag", "config", "columns", "rows", "aggregates", "passed"}``
    with sorted keys.  Every row carries ``method`` (how its value was
    obtained) and, where a check applies, ``tolerance`` and ``passed``.

CSV body
    A header of ``columns`` and one line per row; aggregates are not part of
    the CSV and live in the JSON form only.

Metadata (timestamp, versions, thread cap) is written to ``<name>.meta.json``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


@dataclass
class Report:
    experiment: str
    tag: str
    config: dict
    columns: list
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    def add(self, **row) -> None:
        missing = [c for c in row if c not in self.columns]
        if missing:
            raise KeyError(f"unknown columns {missing}")
        self.rows.append({c: row.get(c, "") for c in self.columns})

    @property
    def passed(self) -> bool:
        checks = [r["passed"] for r in self.rows if "passed" in r and r["passed"] != ""]
        return not self.errors and all(bool(c) for c in checks)

    def body(self) -> dict:
        return _clean({
            "experiment": self.experiment,
            "tag": self.tag,
            "config": self.config,
            "columns": self.columns,
            "rows": self.rows,
            "aggregates": self.aggregates,
            "errors": self.errors,
            "passed": self.passed,
        })

    def to_json(self) -> str:
        return json.dumps(self.body(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_csv_cell(_clean(r[c])) for c in self.columns])
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        return self.to_csv() if fmt == "csv" else self.to_json()

    def metadata(self) -> dict:
        from .. import __version__
        from .config import thread_cap
        return {
            "experiment": self.experiment,
            "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "radmaxlab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "threads": thread_cap(),
        }

    def write(self, out_dir, fmt: str = "json") -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.experiment}.{fmt}"
        path.write_text(self.render(fmt))
        (out / f"{self.experiment}.meta.json").write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")
        return path


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v
