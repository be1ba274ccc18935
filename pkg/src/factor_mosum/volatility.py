"""Daily high-low range volatility proxy for price panels."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestionError, ValidationError
from .panel import Panel

RANGE_SCALE = 0.361


@dataclass(frozen=True)
class OhlcSeries:
    """Daily highs and lows, one row per series and one column per date."""

    high: np.ndarray
    low: np.ndarray
    series_labels: tuple
    dates: tuple

    def __post_init__(self):
        high = np.asarray(self.high, dtype=float)
        low = np.asarray(self.low, dtype=float)
        if high.shape != low.shape or high.ndim != 2:
            raise ValidationError(f"high {high.shape} and low {low.shape} must be equal 2-d shapes")
        if high.shape != (len(self.series_labels), len(self.dates)):
            raise ValidationError("label counts do not match the price arrays")
        for name, arr in (("high", high), ("low", low)):
            if not np.all(np.isfinite(arr)):
                i, j = np.argwhere(~np.isfinite(arr))[0]
                raise ValidationError(f"non-finite {name} price for {self.series_labels[i]} on {self.dates[j]}")
        bad = np.argwhere((low <= 0) | (high < low))
        if bad.size:
            i, j = bad[0]
            raise ValidationError(
                f"need high >= low > 0; {self.series_labels[i]} on {self.dates[j]} "
                f"has high={high[i, j]}, low={low[i, j]}"
            )
        object.__setattr__(self, "high", high)
        object.__setattr__(self, "low", low)


def log_range_volatility(ohlc: OhlcSeries, demean: bool = True) -> Panel:
    """Panel of log(0.361 * (high - low)**2), demeaned per series by default.

    A day with high == low has zero range and no logarithm; it is rejected.
    """
    rng = ohlc.high - ohlc.low
    zero = np.argwhere(rng == 0)
    if zero.size:
        i, j = zero[0]
        raise ValidationError(
            f"zero high-low range for {ohlc.series_labels[i]} on {ohlc.dates[j]}; log undefined"
        )
    X = np.log(RANGE_SCALE * rng**2)
    panel = Panel(X, ohlc.series_labels, ohlc.dates)
    return panel.demean() if demean else panel


def load_ohlc(path) -> OhlcSeries:
    """Read a long-format CSV with columns ``date, series, high, low``.

    Series keep their order of first appearance and dates are sorted. Every
    (series, date) pair must appear exactly once: the panel has to be
    balanced, so trim to a common window before calling this.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"price file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"date", "series", "high", "low"} - set(reader.fieldnames or ())
        if missing:
            raise IngestionError(f"price file lacks columns {sorted(missing)}", row=1)
        cells = {}
        series, dates = {}, {}
        for n, row in enumerate(reader, start=2):
            key = (row["series"], row["date"])
            if key in cells:
                raise IngestionError(f"duplicate entry for {key}", row=n)
            try:
                cells[key] = (float(row["high"]), float(row["low"]))
            except (TypeError, ValueError):
                raise IngestionError("non-numeric price", row=n) from None
            series.setdefault(row["series"], None)
            dates.setdefault(row["date"], None)
    s_labels, d_labels = tuple(series), tuple(sorted(dates))
    high = np.empty((len(s_labels), len(d_labels)))
    low = np.empty_like(high)
    for i, s in enumerate(s_labels):
        for j, d in enumerate(d_labels):
            if (s, d) not in cells:
                raise IngestionError(f"unbalanced panel: no prices for {s} on {d}")
            high[i, j], low[i, j] = cells[(s, d)]
    return OhlcSeries(high, low, s_labels, d_labels)
