from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from roboadvise.backtest import (
    BacktestConfig,
    SyntheticSpec,
    Window,
    gen_synthetic_pool,
    path_stats,
    rolling_windows,
    run_backtest,
    write_report,
)
from roboadvise.baselines import buy_and_hold, estimate_before
from roboadvise.drl import TrainConfig
from roboadvise.errors import InvalidSpec
from roboadvise.mvenv import MarketEpisode

TINY = TrainConfig(episodes=2, horizon=20, batch_size=8, hidden=(8, 8), omega_update_period=1)


def _config(**kw):
    base = dict(
        n=3,
        portfolios=4,
        windows=(Window((0, 60), (60, 90), (90, 150)),),
        lookback=40,
        drl_grid=(TINY,),
        val_portfolios=3,
    )
    base.update(kw)
    return BacktestConfig(**base)


def test_generator_constant_and_seeded():
    flat = gen_synthetic_pool(SyntheticSpec.iid(3, drift=0.0, volatility=0.0), 50, seed=1)
    assert np.all(flat.close == 100.0)
    a = gen_synthetic_pool(SyntheticSpec.iid(3), 50, seed=1)
    b = gen_synthetic_pool(SyntheticSpec.iid(3), 50, seed=1)
    assert np.array_equal(a.close, b.close) and a.dates == b.dates
    assert all(d.weekday() < 5 for d in a.dates)


def test_generator_law_of_large_numbers():
    mu, sig = 4e-4, 0.015
    pool = gen_synthetic_pool(SyntheticSpec.iid(1, drift=mu, volatility=sig), 10_000, seed=8)
    logrel = np.diff(np.log(pool.close[:, 0]))
    se = sig / np.sqrt(logrel.size)
    assert abs(logrel.mean() - (mu - sig**2 / 2)) <= 3 * se


def test_generator_correlation_and_errors():
    corr = np.array([[1.0, 0.8], [0.8, 1.0]])
    pool = gen_synthetic_pool(SyntheticSpec([0, 0], [0.01, 0.01], corr), 5000, seed=0)
    lr = np.diff(np.log(pool.close), axis=0)
    assert np.corrcoef(lr.T)[0, 1] == pytest.approx(0.8, abs=0.03)
    with pytest.raises(InvalidSpec):
        gen_synthetic_pool(SyntheticSpec([0, 0], [0.01, 0.01], np.array([[1.0, 1.5], [1.5, 1.0]])), 10, 0)
    with pytest.raises(InvalidSpec):
        gen_synthetic_pool(SyntheticSpec.iid(2), 0, 0)


def test_rolling_windows_layout():
    ws = rolling_windows(1200)
    assert len(ws) == 2
    assert ws[-1].test[1] == 1200
    assert ws[0].test[1] - 1 == ws[1].test[0]
    for w in ws:
        assert w.train[1] == w.validation[0] and w.validation[1] == w.test[0]
    with pytest.raises(ValueError):
        rolling_windows(500)
    with pytest.raises(ValueError):
        Window((0, 10), (5, 20), (20, 30))


def test_flat_market_single_portfolio():
    pool = gen_synthetic_pool(SyntheticSpec.iid(3, drift=0.0, volatility=0.0), 150, seed=0)
    report = run_backtest(pool, _config(portfolios=1), [0.05])
    for name, summ in report.windows[0].strategies.items():
        np.testing.assert_allclose(summ.mean_path, 1.0, atol=1e-12)
        assert summ.stats["annual_return"] == pytest.approx(0.0, abs=1e-9)
        assert summ.stats["max_drawdown"] == pytest.approx(0.0, abs=1e-12)
        assert summ.stats["sharpe"] is None
        assert summ.flags.get("zero_variance") == 1


def test_backtest_deterministic_bytes(tmp_path):
    pool = gen_synthetic_pool(SyntheticSpec.iid(5), 150, seed=2)
    cfg = _config()
    p1 = write_report(run_backtest(pool, cfg, [0.08]), tmp_path / "a.json")
    p2 = write_report(run_backtest(pool, cfg, [0.08]), tmp_path / "b.json")
    assert p1[0].read_bytes() == p2[0].read_bytes()
    for a, b in zip(p1[1:], p2[1:]):
        assert a.read_bytes() == b.read_bytes()
    assert p1[1].read_text().splitlines()[0] == "date,mean,lo95,hi95"
    assert len(p1) == 1 + 3


def test_bands_contain_mean_and_draws_are_paired():
    pool = gen_synthetic_pool(SyntheticSpec.iid(5, volatility=0.03), 150, seed=3)
    report = run_backtest(pool, _config(portfolios=6), [0.08])
    for summ in report.windows[0].strategies.values():
        assert np.all(summ.lo95 <= summ.mean_path) and np.all(summ.mean_path <= summ.hi95)
        assert summ.portfolios == 6
    # recompute draw 0's buy-and-hold on the shared episode
    rng = np.random.default_rng([0, 0, 0])
    cols = np.sort(rng.choice(5, size=3, replace=False))
    rel = pool.relatives()
    ep = MarketEpisode(rel[90:149][:, cols], tuple(pool.tickers[c] for c in cols))
    bh = buy_and_hold(estimate_before(rel[:, cols], 90, 40), 0.08, ep)
    stats = path_stats(bh, 5e-4)
    assert stats.turnover == 0.0 and stats.transaction_cost == 0.0
    assert report.windows[0].strategies["buy-and-hold"].portfolios == 6


def test_failed_draws_are_recorded():
    pool = gen_synthetic_pool(SyntheticSpec.iid(5), 150, seed=4)
    cfg = _config(lookback=95, strategies=("buy-and-hold",))  # not enough rows before the test start
    with pytest.raises(Exception):
        run_backtest(pool, cfg, [0.05])
    cfg = _config(strategies=("buy-and-hold", "quarterly-mv"))
    report = run_backtest(pool, cfg, [0.05])
    assert report.windows[0].failures == []


def test_preset_policies_skip_training():
    from roboadvise.drl import train

    pool = gen_synthetic_pool(SyntheticSpec.iid(5), 150, seed=5)
    pol = train(replace(TINY, n=3), pool.slice(0, 60), 0.05)
    report = run_backtest(pool, _config(), [0.05], policies=[pol])
    assert report.windows[0].leaderboard == []
    assert report.windows[0].strategies["ipo-drl"].portfolios == 4
