"""Classical comparison strategies: buy-and-hold and quarterly-rebalanced mean-variance."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, InsufficientHistory
from .forward import ForwardSpec, solve_forward
from .market_data import TRADING_DAYS, repair_psd
from .mvenv import MarketEpisode, WealthPath, hold_path

log = logging.getLogger(__name__)

LOOKBACK = 2 * TRADING_DAYS
QUARTERS = 4


@dataclass(frozen=True)
class EstimationWindow:
    """Daily mean return and covariance estimated from ``lookback`` relatives."""

    mean: np.ndarray
    cov: np.ndarray
    lookback: int

    @classmethod
    def from_relatives(cls, relatives: np.ndarray) -> "EstimationWindow":
        rel = np.atleast_2d(np.asarray(relatives, dtype=float))
        if rel.shape[0] < 2:
            raise InsufficientHistory(f"{rel.shape[0]} relatives are not enough to estimate a covariance")
        r = rel - 1.0
        cov = np.atleast_2d(np.cov(r, rowvar=False, ddof=1))
        return cls(r.mean(axis=0), repair_psd(cov), rel.shape[0])


def estimate_before(relatives: np.ndarray, k: int, lookback: int = LOOKBACK) -> EstimationWindow:
    """Estimates from the ``lookback`` relative rows strictly before row ``k``."""
    if k < lookback:
        raise InsufficientHistory(f"only {k} rows before the decision, need {lookback}")
    return EstimationWindow.from_relatives(relatives[k - lookback : k])


def daily_target(z: float) -> float:
    return (1.0 + z) ** (1.0 / TRADING_DAYS) - 1.0


def quarterly_target(z: float) -> float:
    return (1.0 + z) ** (1.0 / QUARTERS) - 1.0


def target_allocation(Q: np.ndarray, c: np.ndarray, e: float) -> tuple[np.ndarray, bool]:
    """Minimum variance subject to ``c'x >= e`` on the simplex; the max-mean vertex if unattainable."""
    c = np.asarray(c, dtype=float)
    if e > c.max():
        x = np.zeros_like(c)
        x[int(np.argmax(c))] = 1.0
        return x, True
    try:
        x = solve_forward(ForwardSpec(Q, c, mode="target", e=e)).x
    except Infeasible:
        x = np.zeros_like(c)
        x[int(np.argmax(c))] = 1.0
        return x, True
    x = np.clip(x, 0.0, None)
    return x / x.sum(), False


def buy_and_hold(window: EstimationWindow, z: float, episode: MarketEpisode) -> WealthPath:
    """One allocation at the start, then let positions drift."""
    x, fallback = target_allocation(window.cov, window.mean, daily_target(z))
    path = hold_path({0: x}, episode)
    if fallback:
        path.flags.append("target_infeasible")
    return path


def quarter_starts(N: int, quarters: int = QUARTERS) -> list[int]:
    return [int(round(q * N / quarters)) for q in range(quarters)]


def quarterly_mean(window: EstimationWindow, days: int) -> np.ndarray:
    """Compound the daily mean estimate over ``days`` trading days."""
    return (1.0 + window.mean) ** days - 1.0


def quarterly_mv(windows: list[EstimationWindow], z: float, episode: MarketEpisode) -> WealthPath:
    """Re-solve the target-return problem at each quarter start on that quarter's estimates."""
    if len(windows) != QUARTERS:
        raise ValueError(f"need {QUARTERS} estimation windows, got {len(windows)}")
    starts = quarter_starts(episode.N)
    if len(set(starts)) != QUARTERS:
        raise ValueError(f"horizon {episode.N} too short for {QUARTERS} quarters")
    days = TRADING_DAYS // QUARTERS
    e = quarterly_target(z)
    plan, flags = {}, []
    for q, (k, w) in enumerate(zip(starts, windows)):
        x, fallback = target_allocation(w.cov * days, quarterly_mean(w, days), e)
        plan[k] = x
        if fallback:
            flags.append(f"target_infeasible:q{q + 1}")
    path = hold_path(plan, episode)
    path.flags.extend(flags)
    return path
