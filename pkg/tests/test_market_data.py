from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pytest

from conftest import make_prices
from roboadvise.errors import (
    InsufficientHistory,
    MissingCell,
    NonPositivePrice,
    SeriesTooShort,
    UnparseableDate,
    WrongAggregation,
)
from roboadvise.market_data import (
    HoldingsSnapshot,
    ProfitSeries,
    align_observations,
    load_holdings,
    load_prices,
    lookback_covariance,
    monthly_aggregate,
    rolling_yearly_profit,
    write_holdings,
    write_prices,
)


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_load_prices_dense_matrix(tmp_path):
    p = _write(
        tmp_path / "p.csv",
        [
            "date,ticker,close",
            "2020-01-02,BBB,20",
            "2020-01-02,AAA,10",
            "2020-01-03,AAA,11",
            "2020-01-03,BBB,21",
            "2020-01-06,AAA,12",
            "2020-01-06,BBB,22",
        ],
    )
    prices = load_prices(p)
    assert prices.close.shape == (3, 2)
    assert prices.tickers == ("AAA", "BBB")
    assert prices.dates[0] == date(2020, 1, 2)
    np.testing.assert_array_equal(prices.close[:, 0], [10, 11, 12])


def test_load_prices_gap_is_missing_cell(tmp_path):
    p = _write(tmp_path / "p.csv", ["date,ticker,close", "2020-01-02,A,1", "2020-01-02,B,1", "2020-01-03,A,1"])
    with pytest.raises(MissingCell):
        load_prices(p)


def test_load_prices_rejects_zero_close(tmp_path):
    p = _write(tmp_path / "p.csv", ["date,ticker,close", "2020-01-02,A,0"])
    with pytest.raises(NonPositivePrice):
        load_prices(p)


def test_load_prices_rejects_bad_date(tmp_path):
    p = _write(tmp_path / "p.csv", ["date,ticker,close", "02/01/2020,A,1"])
    with pytest.raises(UnparseableDate):
        load_prices(p)


def test_prices_round_trip(tmp_path, rng):
    prices = make_prices(rng.uniform(1, 2, size=(5, 3)))
    write_prices(tmp_path / "p.csv", prices)
    back = load_prices(tmp_path / "p.csv")
    assert back.tickers == prices.tickers and back.dates == prices.dates
    np.testing.assert_array_equal(back.close, prices.close)


def test_rolling_profit_constant_and_ratios():
    flat = rolling_yearly_profit(make_prices(np.full(252, 100.0)))
    assert flat.profits.shape == (1, 1) and flat.profits[0, 0] == 0.0
    up = np.linspace(100, 110, 252)
    assert rolling_yearly_profit(make_prices(up)).profits[0, 0] == pytest.approx(0.10, abs=1e-15)
    dbl = np.linspace(50, 100, 252)
    assert rolling_yearly_profit(make_prices(dbl)).profits[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_rolling_profit_too_short():
    with pytest.raises(SeriesTooShort):
        rolling_yearly_profit(make_prices(np.ones(10)), window=11)


def test_rolling_profit_reconstructs_close(rng):
    close = np.exp(np.cumsum(rng.normal(0, 0.01, size=(400, 3)), axis=0))
    prices = make_prices(close)
    prof = rolling_yearly_profit(prices, 252)
    rebuilt = close[: len(close) - 251] * (1 + prof.profits)
    np.testing.assert_allclose(rebuilt, close[251:], rtol=1e-12)


def _daily(values, start=date(2021, 1, 1)):
    values = np.asarray(values, dtype=float).reshape(len(values), -1)
    dates = tuple(start + timedelta(days=i) for i in range(len(values)))
    return ProfitSeries(dates, tuple(f"T{j}" for j in range(values.shape[1])), values, "daily")


def test_monthly_aggregate_means():
    const = monthly_aggregate(_daily(np.full(31, 0.07)))
    assert const.profits[0, 0] == pytest.approx(0.07, abs=1e-15)
    two = monthly_aggregate(_daily([0.0, 0.2], start=date(2021, 3, 30)))
    assert two.profits[0, 0] == pytest.approx(0.1)
    assert two.dates == (date(2021, 3, 31),)
    with pytest.raises(WrongAggregation):
        monthly_aggregate(const)


def test_monthly_aggregate_labels_by_last_trading_date():
    s = _daily(np.arange(40.0), start=date(2021, 1, 15))
    m = monthly_aggregate(s)
    assert m.dates == (date(2021, 1, 31), date(2021, 2, 23))
    assert m.profits[0, 0] == np.mean(np.arange(17.0))


def test_lookback_covariance_constant_and_rank_one():
    Q, mean = lookback_covariance(_daily(np.full((5, 2), 0.03)), date(2021, 1, 5), 4)
    np.testing.assert_array_equal(Q, np.zeros((2, 2)))
    np.testing.assert_allclose(mean, [0.03, 0.03])
    col = np.array([0.1, 0.3, -0.2, 0.05])
    Q, _ = lookback_covariance(_daily(np.column_stack([col, col])), date(2021, 1, 4), 3)
    assert Q[0, 1] == pytest.approx(Q[0, 0], rel=1e-12)
    assert np.linalg.matrix_rank(Q, tol=1e-12) == 1


def test_lookback_covariance_hand_oracle():
    rows = np.array([[0.1, 0.0], [0.2, 0.1], [0.0, -0.1]])
    Q, mean = lookback_covariance(_daily(rows), date(2021, 1, 3), 2)
    m = rows.mean(axis=0)
    d = rows - m
    hand = np.array([[sum(d[k, i] * d[k, j] for k in range(3)) / 2 for j in range(2)] for i in range(2)])
    np.testing.assert_allclose(Q, hand, atol=1e-15)
    np.testing.assert_allclose(Q, [[0.01, 0.01], [0.01, 0.01]], atol=1e-15)
    np.testing.assert_allclose(mean, m)


def test_lookback_uses_no_future_rows(rng):
    vals = rng.normal(size=(30, 2))
    base = _daily(vals)
    t = base.dates[20]
    Q1, m1 = lookback_covariance(base, t, 10)
    vals2 = vals.copy()
    vals2[21:] = 99.0
    Q2, m2 = lookback_covariance(_daily(vals2), t, 10)
    np.testing.assert_array_equal(Q1, Q2)
    np.testing.assert_array_equal(m1, m2)
    with pytest.raises(InsufficientHistory):
        lookback_covariance(base, base.dates[5], 10)


def test_align_observations_cases(rng, caplog):
    prof = _daily(rng.normal(size=(40, 2)))
    snap = HoldingsSnapshot(prof.dates[-1], ("T0", "T1"), np.array([0.4, 0.6]))
    stream = align_observations([snap], prof, 10)
    assert len(stream) == 1
    vals = np.linalg.eigvalsh(stream.entries[0].Q)
    assert vals.min() >= 0
    early = HoldingsSnapshot(prof.dates[3], ("T0", "T1"), np.array([0.5, 0.5]))
    with pytest.raises(InsufficientHistory):
        align_observations([early], prof, 10)
    foreign = HoldingsSnapshot(prof.dates[-1], ("T0", "T1", "ZZZ"), np.array([0.3, 0.2, 0.5]))
    stream = align_observations([foreign], prof, 10)
    assert stream.tickers == ("T0", "T1")
    np.testing.assert_allclose(stream.entries[0].y, [0.6, 0.4])
    assert any("ZZZ" in w for w in stream.warnings)


def test_holdings_round_trip(tmp_path):
    snaps = [
        HoldingsSnapshot(date(2021, 1, 4), ("A", "B"), np.array([0.25, 0.75])),
        HoldingsSnapshot(date(2021, 2, 1), ("A", "B"), np.array([1.0, 0.0])),
    ]
    write_holdings(tmp_path / "h.csv", snaps)
    back = load_holdings(tmp_path / "h.csv")
    assert [s.date for s in back] == [s.date for s in snaps]
    np.testing.assert_array_equal(back[1].weights, [1.0, 0.0])


def test_holdings_must_sum_to_one():
    from roboadvise.errors import DataError

    with pytest.raises(DataError):
        HoldingsSnapshot(date(2021, 1, 4), ("A", "B"), np.array([0.5, 0.4]))
