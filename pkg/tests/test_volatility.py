import math

import numpy as np
import pytest

from factor_mosum.errors import IngestionError, ValidationError
from factor_mosum.volatility import OhlcSeries, load_ohlc, log_range_volatility


def series(high, low):
    high, low = np.atleast_2d(high), np.atleast_2d(low)
    return OhlcSeries(high, low, tuple(f"s{i}" for i in range(high.shape[0])), tuple(f"d{j}" for j in range(high.shape[1])))


def test_unit_variance_range_gives_zero():
    width = 1 / math.sqrt(0.361)
    assert width == pytest.approx(1.664357, abs=1e-6)
    p = log_range_volatility(series([10 + width, 20 + width], [10.0, 20.0]), demean=False)
    np.testing.assert_allclose(p.values, 0.0, atol=1e-14)


def test_formula_and_demeaning():
    high = np.array([[3.0, 5.0, 4.0]])
    low = np.array([[1.0, 2.0, 3.5]])
    raw = np.log(0.361 * (high - low) ** 2)
    np.testing.assert_allclose(log_range_volatility(series(high, low), demean=False).values, raw)
    p = log_range_volatility(series(high, low))
    np.testing.assert_allclose(p.values, raw - raw.mean(), atol=1e-14)
    assert p.demeaned


def test_zero_range_names_series_and_date():
    with pytest.raises(ValidationError, match="s0 on d1"):
        log_range_volatility(series([2.0, 3.0], [1.0, 3.0]))


def test_high_below_low_rejected():
    with pytest.raises(ValidationError, match="high >= low"):
        series([1.0, 2.0], [1.5, 1.0])


def test_non_positive_low_rejected():
    with pytest.raises(ValidationError):
        series([1.0], [0.0])


def test_load_long_csv(tmp_path):
    path = tmp_path / "px.csv"
    path.write_text(
        "date,series,high,low\n2020-01-02,B,5,4\n2020-01-01,A,2,1\n2020-01-01,B,6,4\n2020-01-02,A,3,1\n",
        encoding="utf-8",
    )
    o = load_ohlc(path)
    # series in order of first appearance, dates sorted
    assert o.series_labels == ("B", "A") and o.dates == ("2020-01-01", "2020-01-02")
    np.testing.assert_array_equal(o.high, [[6, 5], [2, 3]])
    np.testing.assert_array_equal(o.low, [[4, 4], [1, 1]])


def test_load_unbalanced(tmp_path):
    path = tmp_path / "px.csv"
    path.write_text("date,series,high,low\n2020-01-01,A,2,1\n2020-01-01,B,6,4\n2020-01-02,A,3,1\n", encoding="utf-8")
    with pytest.raises(IngestionError, match="balanced"):
        load_ohlc(path)


def test_load_missing_column(tmp_path):
    path = tmp_path / "px.csv"
    path.write_text("date,series,high\n", encoding="utf-8")
    with pytest.raises(IngestionError):
        load_ohlc(path)
    with pytest.raises(FileNotFoundError):
        load_ohlc(tmp_path / "none.csv")
