"""
ExperimentReport: ordered sweep rows plus run metadata, written as CSV.

Rows that failed are kept as {"status": "error", "error": message} so a sweep
always produces a complete table.
"""

import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import pandas as pd

from src.config.settings import config_hash


@dataclass
class ExperimentReport:
    experiment: str
    sweep_key: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    rows: List[Dict[str, Any]] = field(default_factory=list)
    passed: Optional[bool] = None
    summary: Dict[str, Any] = field(default_factory=dict)

    def add_row(self, params: Dict[str, Any], metrics: Dict[str, float]) -> Dict[str, Any]:
        bad = [k for k, v in metrics.items() if not math.isfinite(float(v))]
        if bad:
            return self.add_error(params, f"non-finite metrics: {', '.join(bad)}")
        row = {"experiment": self.experiment, **params, **{k: float(v) for k, v in metrics.items()},
               "status": "ok", "error": ""}
        self.rows.append(row)
        return row

    def add_error(self, params: Dict[str, Any], error: str) -> Dict[str, Any]:
        row = {"experiment": self.experiment, **params, "status": "error", "error": str(error)}
        self.rows.append(row)
        return row

    def sort(self) -> "ExperimentReport":
        if self.sweep_key:
            self.rows.sort(key=lambda row: row.get(self.sweep_key, 0.0))
        return self

    @property
    def ok_rows(self) -> List[Dict[str, Any]]:
        return [row for row in self.rows if row.get("status") == "ok"]

    def column(self, name: str) -> List[float]:
        return [row[name] for row in self.ok_rows]

    def stamp(self, **metadata) -> "ExperimentReport":
        """Record metadata and its hash (the hash covers every metadata entry set so far)."""
        self.metadata.update(metadata)
        self.metadata["config_hash"] = config_hash({k: v for k, v in self.metadata.items() if k != "config_hash"})
        return self

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows)
        for key, value in self.metadata.items():
            if key not in frame.columns:
                frame[key] = [value] * len(frame)
        return frame

    def to_csv(self, path: str) -> None:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    def verdict(self) -> str:
        if self.passed is None:
            return "n/a"
        return "pass" if self.passed else "fail"


def read_report(path: str) -> pd.DataFrame:
    if not os.path.isfile(path):
        raise OSError(f"Report not found: {path}")
    return pd.read_csv(path)
