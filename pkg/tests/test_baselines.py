from __future__ import annotations

import numpy as np
import pytest

from roboadvise.baselines import (
    EstimationWindow,
    buy_and_hold,
    daily_target,
    estimate_before,
    quarter_starts,
    quarterly_mv,
    quarterly_target,
    target_allocation,
)
from roboadvise.errors import InsufficientHistory
from roboadvise.forward import min_variance
from roboadvise.metrics import transaction_cost, turnover
from roboadvise.mvenv import MarketEpisode


def _window(mean, cov):
    return EstimationWindow(np.asarray(mean, float), np.asarray(cov, float), 504)


def test_targets():
    assert daily_target(0.0) == 0.0 and quarterly_target(0.0) == 0.0
    assert (1 + daily_target(0.1)) ** 252 == pytest.approx(1.1, rel=1e-13)
    assert (1 + quarterly_target(0.1)) ** 4 == pytest.approx(1.1, rel=1e-14)


def test_buy_and_hold_single_asset(rng):
    rel = rng.uniform(0.98, 1.02, size=(30, 1))
    path = buy_and_hold(_window([0.001], [[1e-4]]), 0.05, MarketEpisode(rel, ("A",)))
    np.testing.assert_allclose(path.W, np.concatenate([[1.0], np.cumprod(rel)]), rtol=1e-13)
    assert turnover(path) == 0.0 and transaction_cost(path, 5e-4) == 0.0


def test_buy_and_hold_corner_on_dominant_asset():
    w = _window([0.002, 0.0], np.eye(2) * 1e-4)
    z = 0.9 * (1.002**252 - 1)  # binding target: the return row fixes the split
    x, fallback = target_allocation(w.cov, w.mean, daily_target(z))
    assert not fallback and x[0] == pytest.approx(daily_target(z) / 0.002, abs=1e-9)
    z = 1.002**252 - 1  # the target equals the best mean: only the corner attains it
    x, _ = target_allocation(w.cov, w.mean, daily_target(z))
    np.testing.assert_allclose(x, [1.0, 0.0], atol=1e-9)
    path = buy_and_hold(w, z, MarketEpisode(np.ones((10, 2)), ("A", "B")))
    np.testing.assert_allclose(path.allocations[0], [1.0, 0.0], atol=1e-9)


def test_infeasible_target_falls_back_to_vertex():
    w = _window([0.0001, 0.0002], np.eye(2) * 1e-4)
    path = buy_and_hold(w, 5.0, MarketEpisode(np.ones((5, 2)), ("A", "B")))
    np.testing.assert_array_equal(path.allocations[0], [0.0, 1.0])
    assert "target_infeasible" in path.flags


def test_quarterly_identical_windows_flat_market():
    w = _window([0.001, 0.0005, 0.0008], np.diag([1e-4, 2e-4, 3e-4]))
    path = quarterly_mv([w] * 4, 0.05, MarketEpisode(np.ones((252, 3)), ("A", "B", "C")))
    starts = quarter_starts(252)
    allocs = {tuple(np.round(path.allocations[k], 12)) for k in starts}
    assert len(allocs) == 1
    assert turnover(path) == pytest.approx(0.0, abs=1e-10)
    assert path.rebalance.sum() == 4


def test_quarterly_zero_target_is_min_variance():
    cov = np.array([[2e-4, 5e-5], [5e-5, 1e-4]])
    w = _window([0.001, 0.002], cov)
    path = quarterly_mv([w] * 4, 0.0, MarketEpisode(np.ones((252, 2)), ("A", "B")))
    np.testing.assert_allclose(path.allocations[0], min_variance(cov * 63), atol=1e-9)


def test_quarterly_flip_matches_hand_path():
    # dominance flips between the first two quarters and the last two
    up = _window([0.003, 0.0], np.eye(2) * 1e-4)
    down = _window([0.0, 0.003], np.eye(2) * 1e-4)
    rel = np.tile([1.001, 0.999], (8, 1))
    ep = MarketEpisode(rel, ("A", "B"))
    path = quarterly_mv([up, up, down, down], 1.003**252 - 1, ep)
    starts = quarter_starts(8)
    assert starts == [0, 2, 4, 6]
    np.testing.assert_allclose(path.allocations[0], [1, 0], atol=1e-9)
    np.testing.assert_allclose(path.allocations[4], [0, path.W[4]], atol=1e-9)
    W = [1.0]
    for i in range(8):
        W.append(W[-1] * (1.001 if i < 4 else 0.999))
    np.testing.assert_allclose(path.W, W, rtol=1e-12)


def test_estimates_use_only_past_rows(rng):
    rel = rng.uniform(0.98, 1.02, size=(30, 2))
    w = estimate_before(rel, 20, 10)
    np.testing.assert_allclose(w.mean, (rel[10:20] - 1).mean(axis=0))
    np.testing.assert_allclose(w.cov, np.cov(rel[10:20] - 1, rowvar=False))
    with pytest.raises(InsufficientHistory):
        estimate_before(rel, 5, 10)


def test_positions_admissible_at_decisions(rng):
    ws = [EstimationWindow.from_relatives(rng.uniform(0.97, 1.03, size=(100, 4))) for _ in range(4)]
    ep = MarketEpisode(rng.uniform(0.97, 1.03, size=(60, 4)), tuple("ABCD"))
    path = quarterly_mv(ws, 0.08, ep)
    for k in quarter_starts(60):
        assert path.allocations[k].min() >= -1e-12
        assert path.allocations[k].sum() == pytest.approx(path.W[k], rel=1e-10)
