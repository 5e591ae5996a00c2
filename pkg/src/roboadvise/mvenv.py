"""Multi-period mean-variance environment: self-financing wealth, episode objective, omega tracker."""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConstraintViolation, DataError, NonPositiveRelative, ShapeMismatch

ALLOC_TOL = 1e-8
HORIZON = 252

Policy = Callable[[np.ndarray], np.ndarray]  # state -> simplex weights


@dataclass(frozen=True)
class MarketEpisode:
    relatives: np.ndarray  # (N, n) gross relatives S[i+1]/S[i]
    tickers: tuple[str, ...]

    def __post_init__(self) -> None:
        rel = np.atleast_2d(np.asarray(self.relatives, dtype=float))
        if rel.shape[1] != len(self.tickers):
            raise ShapeMismatch(f"{rel.shape[1]} relative columns for {len(self.tickers)} tickers")
        if not np.all(np.isfinite(rel)) or np.any(rel <= 0):
            raise NonPositiveRelative("relatives must be finite and > 0")
        rel.setflags(write=False)
        object.__setattr__(self, "relatives", rel)

    @property
    def N(self) -> int:
        return self.relatives.shape[0]

    @property
    def n(self) -> int:
        return self.relatives.shape[1]


@dataclass
class WealthPath:
    W: np.ndarray  # (N+1,), W[0] = 1
    allocations: np.ndarray  # (N, n) dollar positions held over step i
    relatives: np.ndarray  # (N, n)
    rebalance: np.ndarray  # (N,) True where a trade decision was taken
    flags: list[str] = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.allocations.shape[0]

    def drifted(self) -> np.ndarray:
        """Positions right before the next decision, ``v_i * relative_i``."""
        return self.allocations * self.relatives

    def daily_returns(self) -> np.ndarray:
        return self.W[1:] / self.W[:-1] - 1.0


def check_allocation(W: float, v: np.ndarray, tol: float = ALLOC_TOL) -> None:
    if np.any(v < -tol):
        raise ConstraintViolation(f"negative position {v.min():.3e}")
    if abs(v.sum() - W) > tol * max(1.0, abs(W)):
        raise ConstraintViolation(f"positions sum to {v.sum():.12f}, wealth {W:.12f}")


def step(W: float, v: np.ndarray, relatives: np.ndarray, *, enforce: bool = True) -> float:
    """Advance wealth one period; uninvested wealth (if any) earns zero interest."""
    v = np.asarray(v, dtype=float)
    relatives = np.asarray(relatives, dtype=float)
    if v.shape != relatives.shape:
        raise ShapeMismatch(f"allocation {v.shape} vs relatives {relatives.shape}")
    if np.any(~np.isfinite(relatives)) or np.any(relatives <= 0):
        raise NonPositiveRelative("relatives must be finite and > 0")
    if enforce:
        check_allocation(W, v)
    return float(v @ relatives + W - v.sum())


def episode_state(W: float, omega: float, i: int, N: int, time_feature: bool = True) -> np.ndarray:
    if time_feature:
        return np.array([W - omega, i / N])
    return np.array([W - omega])


def run_episode(
    policy: Policy, episode: MarketEpisode, omega: float, *, time_feature: bool = True
) -> WealthPath:
    """Roll a policy through an episode, rebalancing every step."""
    N, n = episode.N, episode.n
    W = np.empty(N + 1)
    W[0] = 1.0
    alloc = np.empty((N, n))
    for i in range(N):
        weights = np.asarray(policy(episode_state(W[i], omega, i, N, time_feature)), dtype=float)
        if weights.shape != (n,):
            raise ShapeMismatch(f"policy returned {weights.shape}, expected ({n},)")
        v = weights * W[i]
        W[i + 1] = step(W[i], v, episode.relatives[i])
        alloc[i] = v
    return WealthPath(W, alloc, np.array(episode.relatives), np.ones(N, dtype=bool))


def hold_path(weights_by_step: dict[int, np.ndarray], episode: MarketEpisode) -> WealthPath:
    """Trade to the given weights at the listed steps and let positions drift otherwise."""
    N, n = episode.N, episode.n
    if 0 not in weights_by_step:
        raise ValueError("an allocation is required at step 0")
    W = np.empty(N + 1)
    W[0] = 1.0
    alloc = np.empty((N, n))
    mask = np.zeros(N, dtype=bool)
    v = None
    for i in range(N):
        if i in weights_by_step:
            v = np.asarray(weights_by_step[i], dtype=float) * W[i]
            mask[i] = True
        W[i + 1] = step(W[i], v, episode.relatives[i])
        alloc[i] = v
        v = v * episode.relatives[i]
    return WealthPath(W, alloc, np.array(episode.relatives), mask)


def lagrangian_value(W_N: float, omega: float, z: float) -> float:
    return (W_N - omega) ** 2 - (omega - 1.0 - z) ** 2


def default_alpha(k: int) -> float:
    return 0.05 / math.ceil(k / 50)


@dataclass
class MultiplierTracker:
    omega: float = 1.0
    alpha: float | Callable[[int], float] = default_alpha
    window: int = 10
    update_period: int = 10
    history: deque = field(default_factory=deque)
    episodes: int = 0
    updates: int = 0

    def __post_init__(self) -> None:
        if self.window < 1 or self.update_period < 1:
            raise ValueError("window and update_period must be >= 1")
        self.history = deque(self.history, maxlen=self.window)

    def alpha_at(self, k: int) -> float:
        a = self.alpha(k) if callable(self.alpha) else float(self.alpha)
        if not a > 0:
            raise ValueError(f"alpha_{k} must be positive")
        return a


def update_multiplier(tracker: MultiplierTracker, W_N: float, z: float) -> MultiplierTracker:
    """Record a terminal wealth; every ``update_period`` episodes move omega toward the target."""
    tracker.history.append(float(W_N))
    tracker.episodes += 1
    if tracker.episodes % tracker.update_period == 0:
        tracker.updates += 1
        surplus = sum(tracker.history) / len(tracker.history) - 1.0 - z
        tracker.omega += tracker.alpha_at(tracker.updates) * surplus
    return tracker


def write_episode(path: str | Path, episode: MarketEpisode) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "ticker", "relative"])
        for i in range(episode.N):
            for j, t in enumerate(episode.tickers):
                writer.writerow([i, t, repr(float(episode.relatives[i, j]))])


def read_episode(path: str | Path) -> MarketEpisode:
    cells: dict[tuple[int, str], float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if set(reader.fieldnames or []) < {"step", "ticker", "relative"}:
            raise DataError(f"{path}: expected columns step,ticker,relative")
        for row in reader:
            cells[(int(row["step"]), row["ticker"])] = float(row["relative"])
    steps = sorted({s for s, _ in cells})
    tickers = sorted({t for _, t in cells})
    if steps != list(range(len(steps))):
        raise DataError(f"{path}: steps are not contiguous from 0")
    try:
        rel = np.array([[cells[(s, t)] for t in tickers] for s in steps])
    except KeyError as exc:
        raise DataError(f"{path}: missing relative for {exc.args[0]}") from exc
    return MarketEpisode(rel, tuple(tickers))
