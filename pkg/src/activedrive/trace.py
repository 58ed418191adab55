"""Per-tick simulation record with a fixed-column CSV form."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _fmt(v: float) -> str:
    if np.isnan(v):
        return ""
    return repr(float(v))


@dataclass
class SimTrace:
    """Column-oriented table of floats (NaN marks a null/absent value)."""

    columns: list[str]
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    @property
    def dt(self) -> float:
        return float(self.meta.get("dt", 0.2))

    @classmethod
    def from_rows(cls, rows: list[dict], meta: dict | None = None) -> "SimTrace":
        columns = list(rows[0])
        data = np.array([[row.get(c, np.nan) for c in columns] for row in rows], dtype=float)
        return cls(columns, data, dict(meta or {}))

    @classmethod
    def from_columns(cls, meta: dict | None = None, **cols) -> "SimTrace":
        names = list(cols)
        data = np.column_stack([np.asarray(cols[c], dtype=float) for c in names])
        return cls(names, data, dict(meta or {}))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.data:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(self.to_csv())
        path.with_suffix(".meta.json").write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "SimTrace":
        path = Path(path)
        with path.open() as fh:
            rows = list(csv.reader(fh))
        columns = rows[0]
        data = np.array([[float(v) if v else np.nan for v in r] for r in rows[1:]], dtype=float)
        meta_path = path.with_suffix(".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(columns, data.reshape(-1, len(columns)), meta)
