"""Uniformly sampled labelled time series and their CSV / SVG export."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class RunRecord:
    columns: list[str]
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = list(self.columns)
        self.data = np.asarray(self.data, dtype=float).reshape(-1, len(self.columns))
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column names")

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self["t"]

    def window(self, t_from: float, t_to: float = np.inf) -> "RunRecord":
        mask = (self.t >= t_from - 1e-12) & (self.t <= t_to + 1e-12)
        return RunRecord(self.columns, self.data[mask], dict(self.meta))

    def with_columns(self, **cols) -> "RunRecord":
        names = self.columns + list(cols)
        extra = [np.asarray(v, dtype=float).reshape(-1, 1) for v in cols.values()]
        return RunRecord(names, np.hstack([self.data] + extra), dict(self.meta))


def trend_slope(t: np.ndarray, y: np.ndarray) -> float:
    """Least-squares linear trend of ``y`` against ``t``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    tc = t - t.mean()
    return float(np.dot(tc, y - y.mean()) / np.dot(tc, tc))


def rms(y) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.sqrt(np.mean(y * y)))


def to_csv_text(record: RunRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(record.columns)
    for row in record.data:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def export_csv(record: RunRecord, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(to_csv_text(record))
    return path


def read_csv(path) -> RunRecord:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    cols = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return RunRecord(cols, data.reshape(-1, len(cols)))


def export_svg_plot(record: RunRecord, columns, path, *, dashed=(), title=None,
                    xlabel="t [s]", ylabel=None, logx=False) -> Path:
    """Overlay ``columns`` against ``t`` (or ``omega`` when present) in one SVG.

    Columns listed in ``dashed`` are drawn with dashed strokes.
    """
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "obsint"
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    xname = "omega" if "omega" in record.columns else "t"
    x = record[xname]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for name in columns:
        style = "--" if name in dashed else "-"
        ax.plot(x, record[name], style, linewidth=1.0, label=name)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    if ylabel:
        ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    # fixed metadata keeps the SVG bytes reproducible
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path
