"""Panel container, CSV ingestion and half-vectorisation helpers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import IngestionError, ValidationError

Layout = Literal["series-in-rows", "series-in-columns"]

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class Panel:
    """An N x T panel of observations.

    Rows are series, columns are time points. The array is copied and marked
    read-only on construction so a panel can be shared freely.
    """

    values: np.ndarray
    series_labels: tuple = field(default=None)
    time_labels: tuple = field(default=None)
    demeaned: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise ValidationError(f"panel values must be 2-d, got shape {values.shape}")
        n, t = values.shape
        if n < 1 or t < 2:
            raise ValidationError(f"panel needs N >= 1 and T >= 2, got N={n}, T={t}")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            i, j = bad[0]
            raise IngestionError("non-finite value in panel", row=int(i) + 1, column=int(j) + 1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

        series = tuple(range(1, n + 1)) if self.series_labels is None else tuple(self.series_labels)
        times = tuple(range(1, t + 1)) if self.time_labels is None else tuple(self.time_labels)
        if len(series) != n:
            raise ValidationError(f"{len(series)} series labels for {n} series")
        if len(times) != t:
            raise ValidationError(f"{len(times)} time labels for {t} time points")
        object.__setattr__(self, "series_labels", series)
        object.__setattr__(self, "time_labels", times)

        if self.demeaned:
            worst = np.abs(values.sum(axis=1)).max()
            if worst > 1e-8 * t:
                raise ValidationError(f"panel flagged demeaned but a row sums to {worst:.3g}")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def demean(self) -> "Panel":
        """Return a copy with each series centred at zero."""
        if self.demeaned:
            return self
        centred = self.values - self.values.mean(axis=1, keepdims=True)
        return Panel(centred, self.series_labels, self.time_labels, demeaned=True)

    def subpanel(self, rows, cols) -> "Panel":
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        return Panel(
            self.values[np.ix_(rows, cols)],
            tuple(self.series_labels[i] for i in rows),
            tuple(self.time_labels[j] for j in cols),
        )

    def metadata(self) -> dict:
        return {
            "N": self.N,
            "T": self.T,
            "series_labels": [str(s) for s in self.series_labels],
            "time_labels": [str(s) for s in self.time_labels],
            "demeaned": self.demeaned,
        }

    def to_json(self) -> str:
        return json.dumps(self.metadata(), indent=2)


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestionError(f"non-numeric cell {text!r}", row=row, column=col) from None
    if not math.isfinite(value):
        raise IngestionError(f"non-finite cell {text!r}", row=row, column=col)
    return value


def load_panel(path, layout: Layout = "series-in-rows", demean: bool = True) -> Panel:
    """Read a panel from CSV.

    The file has one header row and one leading label column. With
    ``layout="series-in-rows"`` the header holds time labels and each line is
    a series; ``"series-in-columns"`` is the transpose (one line per date).

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    IngestionError
        On ragged rows, non-numeric or non-finite cells. Row/column numbers in
        the message refer to the file, 1-based, header included.
    """
    if layout not in ("series-in-rows", "series-in-columns"):
        raise ValidationError(f"unknown layout {layout!r}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"panel file not found: {path}")

    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise IngestionError("panel file needs a header and at least one data row")
    header, body = rows[0], rows[1:]
    width = len(header)
    if width < 2:
        raise IngestionError("header needs a label column and at least one data column", row=1)

    labels = []
    data = []
    for r, line in enumerate(body, start=2):
        if len(line) != width:
            raise IngestionError(f"ragged row: expected {width} cells, found {len(line)}", row=r)
        labels.append(line[0])
        data.append([_parse_cell(cell, r, c) for c, cell in enumerate(line[1:], start=2)])
    values = np.array(data, dtype=float)
    columns = tuple(header[1:])

    if layout == "series-in-rows":
        panel = Panel(values, tuple(labels), columns)
    else:
        panel = Panel(values.T, columns, tuple(labels))
    return panel.demean() if demean else panel


def save_panel(panel: Panel, path, layout: Layout = "series-in-rows") -> None:
    """Write ``panel`` in the CSV format read by :func:`load_panel`."""
    if layout == "series-in-rows":
        corner, head, side, body = "series", panel.time_labels, panel.series_labels, panel.values
    elif layout == "series-in-columns":
        corner, head, side, body = "time", panel.series_labels, panel.time_labels, panel.values.T
    else:
        raise ValidationError(f"unknown layout {layout!r}")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([corner, *head])
        for label, row in zip(side, body):
            writer.writerow([label, *(repr(float(v)) for v in row)])


# --- half-vectorisation --------------------------------------------------


def vech_size(r: int) -> int:
    return r * (r + 1) // 2


@lru_cache(maxsize=64)
def vech_indices(r: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the lower triangle in column-major order.

    The order is (0,0), (1,0), ..., (r-1,0), (1,1), ..., (r-1,r-1).
    """
    cols, rows = np.triu_indices(r)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def dim_from_vech_size(d: int) -> int:
    r = int(round((math.isqrt(8 * d + 1) - 1) / 2))
    if vech_size(r) != d:
        raise ValidationError(f"{d} is not a triangular number r(r+1)/2")
    return r


def vech(S) -> np.ndarray:
    """Stack the lower triangle of a symmetric matrix, column by column."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"vech needs a square matrix, got shape {S.shape}")
    asym = np.abs(S - S.T).max() if S.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValidationError(f"matrix is not symmetric (max deviation {asym:.3g})")
    rows, cols = vech_indices(S.shape[0])
    return S[rows, cols]


def unvech(v, r: int | None = None) -> np.ndarray:
    """Inverse of :func:`vech`; ``r`` is inferred from ``len(v)`` if omitted."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValidationError("unvech needs a 1-d vector")
    if r is None:
        r = dim_from_vech_size(v.size)
    elif v.size != vech_size(r):
        raise ValidationError(f"length {v.size} does not match r={r} (needs {vech_size(r)})")
    rows, cols = vech_indices(r)
    S = np.zeros((r, r))
    S[rows, cols] = v
    S[cols, rows] = v
    return S


def vech_outer(G) -> np.ndarray:
    """Row t of the result is vech(g_t g_t^T) for row g_t of ``G`` (T x r)."""
    G = np.asarray(G, dtype=float)
    rows, cols = vech_indices(G.shape[1])
    return G[:, rows] * G[:, cols]

