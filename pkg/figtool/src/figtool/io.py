"""Readers for the delimited artifacts of the experiment runner.

Files carry a `# config_hash=...` comment line, then a fixed header.
Readers hand back plain column arrays; nothing here recomputes any
science quantity.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

CURVE_COLUMNS = ("t", "emp_mean", "emp_std", "theory", "envelope", "n", "samples")
RESIDUAL_COLUMNS = ("n", "k", "ell", "residual_median", "envelope", "ratio_median", "ratio_p95")


class MissingColumnError(ValueError):
    def __init__(self, column: str, path):
        super().__init__(f"column {column!r} missing from {path}")
        self.column = column


@dataclass
class Table:
    path: Path
    config_hash: str
    columns: dict

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise MissingColumnError(name, self.path)
        return self.columns[name]

    @property
    def label(self) -> str:
        return Path(self.path).stem


def _read(path, required) -> Table:
    path = Path(path)
    config_hash = ""
    with open(path) as fh:
        first = fh.readline().strip()
        if first.startswith("#"):
            if "config_hash=" in first:
                config_hash = first.split("config_hash=", 1)[1].strip()
            header_line = fh.readline().strip()
        else:
            header_line = first
        names = header_line.split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(names)))
    columns = {name: data[:, i] for i, name in enumerate(names)}
    table = Table(path=path, config_hash=config_hash, columns=columns)
    for name in required:
        table[name]
    return table


def read_curve(path) -> Table:
    return _read(path, CURVE_COLUMNS)


def read_residuals(path) -> Table:
    return _read(path, RESIDUAL_COLUMNS)
