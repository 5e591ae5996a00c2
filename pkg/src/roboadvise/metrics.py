"""Performance statistics of wealth paths."""

from __future__ import annotations

import numpy as np

from .errors import PathTooShort, ZeroVariance
from .market_data import TRADING_DAYS
from .mvenv import WealthPath


def _trade_notional(path: WealthPath) -> np.ndarray:
    """Per-decision ``sum_j |v_{i+1} - v_{i+}|`` for every decision after the first."""
    drift = path.drifted()[:-1]
    nxt = path.allocations[1:]
    notional = np.abs(nxt - drift).sum(axis=1)
    return np.where(path.rebalance[1:], notional, 0.0)


def turnover(path: WealthPath) -> float:
    """Average traded fraction of wealth per rebalance, in percent.

    Sums ``|v_{k} - v_{k-}| / W_k`` over every rebalance after the first and
    divides by (number of rebalances - 1).  Between rebalances positions only
    drift, so those days contribute nothing; a path that never trades after
    its initial purchase has turnover 0.
    """
    if path.N < 2 or not path.rebalance[0]:
        raise PathTooShort(f"turnover needs >= 2 decision times starting at 0, got {path.N}")
    K = int(path.rebalance.sum())
    if K < 2:
        return 0.0
    frac = _trade_notional(path) / path.W[1:-1]
    return float(frac.sum() / (K - 1) * 100.0)


def transaction_cost(path: WealthPath, c: float) -> float:
    """Cumulative cost of all rebalancing trades after the initial purchase, in percent of W_0."""
    if path.N < 1:
        raise PathTooShort("empty path")
    if path.N < 2:
        return 0.0
    return float(c / path.W[0] * _trade_notional(path).sum() * 100.0)


def max_drawdown(W: np.ndarray) -> float:
    W = np.asarray(W, dtype=float)
    if W.size == 0 or np.any(W <= 0):
        raise ValueError("wealth must be nonempty and positive")
    peak = np.maximum.accumulate(W)
    # 1 - W/peak rather than (peak - W)/peak: exact on ratios such as 0.9/1.2
    return float(max(0.0, (1.0 - W / peak).max()))


def sharpe(returns: np.ndarray) -> float:
    """Annualized Sharpe ratio with zero risk-free rate."""
    r = np.asarray(returns, dtype=float)
    if r.size < 2:
        raise ZeroVariance("need at least two returns")
    sd = r.std(ddof=1)
    if not sd > 1e-15 * max(1.0, float(np.abs(r).max())):
        raise ZeroVariance("sample standard deviation is zero")
    return float(r.mean() / sd * np.sqrt(TRADING_DAYS))


def annualized_return(W: np.ndarray) -> float:
    W = np.asarray(W, dtype=float)
    steps = W.size - 1
    if steps < 1:
        raise PathTooShort("need at least one step")
    return float((W[-1] / W[0]) ** (TRADING_DAYS / steps) - 1.0)


def annualized_volatility(returns: np.ndarray) -> float:
    r = np.asarray(returns, dtype=float)
    if r.size < 2:
        return 0.0
    return float(r.std(ddof=1) * np.sqrt(TRADING_DAYS))
