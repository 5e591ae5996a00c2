"""Rolling-window backtest over randomized portfolio draws, plus the synthetic market generator."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import LOOKBACK, buy_and_hold, estimate_before, quarter_starts, quarterly_mv
from .drl import Policy, TrainConfig, hyperparameter_search
from .errors import InvalidSpec, RoboAdviseError, ZeroVariance
from .market_data import PriceSeries
from .metrics import annualized_return, annualized_volatility, max_drawdown, sharpe, transaction_cost, turnover
from .mvenv import MarketEpisode, WealthPath

log = logging.getLogger(__name__)

STRATEGIES = ("ipo-drl", "buy-and-hold", "quarterly-mv")
COST_RATE = 5e-4


# --- synthetic data -------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Per-asset daily log-drift inputs for a correlated geometric random walk.

    ``drift`` and ``volatility`` are per trading day; log relatives are
    normal with mean ``drift - volatility**2 / 2``.
    """

    drift: Sequence[float]
    volatility: Sequence[float]
    correlation: np.ndarray | None = None
    tickers: Sequence[str] | None = None
    start: date = date(2010, 1, 4)
    initial_price: float = 100.0

    @classmethod
    def iid(cls, n: int, drift: float = 3e-4, volatility: float = 0.012, **kw) -> "SyntheticSpec":
        return cls([drift] * n, [volatility] * n, **kw)


def gen_synthetic_pool(spec: SyntheticSpec, days: int, seed: int) -> PriceSeries:
    """Daily closes on business days; the first row is the initial price."""
    mu = np.asarray(spec.drift, dtype=float)
    sig = np.asarray(spec.volatility, dtype=float)
    n = mu.shape[0]
    if days < 1:
        raise InvalidSpec("days must be >= 1")
    if sig.shape != (n,) or np.any(sig < 0) or not np.all(np.isfinite(np.concatenate([mu, sig]))):
        raise InvalidSpec("drift/volatility must be finite vectors of equal length with volatility >= 0")
    corr = np.eye(n) if spec.correlation is None else np.asarray(spec.correlation, dtype=float)
    if corr.shape != (n, n) or not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
        raise InvalidSpec("correlation must be a symmetric unit-diagonal matrix")
    cov = corr * np.outer(sig, sig)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -1e-12 * max(1.0, vals.max()):
        raise InvalidSpec("covariance is not positive semidefinite")
    L = vecs * np.sqrt(np.clip(vals, 0.0, None))
    tickers = tuple(spec.tickers) if spec.tickers is not None else tuple(f"S{j:03d}" for j in range(n))
    if len(tickers) != n or len(set(tickers)) != n:
        raise InvalidSpec("tickers must be unique and match the asset count")
    rng = np.random.default_rng(seed)
    shocks = rng.standard_normal((days - 1, n)) @ L.T
    logrel = (mu - 0.5 * sig**2) + shocks
    close = spec.initial_price * np.exp(np.vstack([np.zeros(n), np.cumsum(logrel, axis=0)]))
    start = np.busday_offset(np.datetime64(spec.start, "D"), 0, roll="forward")
    dates = np.busday_offset(start, np.arange(days), roll="forward")
    return PriceSeries(tuple(d.item() for d in dates), tickers, close)


# --- configuration and report --------------------------------------------


@dataclass(frozen=True)
class Window:
    """Date-index spans ``[start, stop)`` into the pool; test relatives start at the test span."""

    train: tuple[int, int]
    validation: tuple[int, int]
    test: tuple[int, int]

    def __post_init__(self) -> None:
        spans = [self.train, self.validation, self.test]
        for a, b in spans:
            if not 0 <= a < b:
                raise ValueError(f"bad span {(a, b)}")
        if not (self.train[1] <= self.validation[0] and self.validation[1] <= self.test[0]):
            raise ValueError("spans must be ordered train < validation < test and disjoint")


def rolling_windows(days: int, train: int = 378, validation: int = 126, test: int = 253, count: int = 2) -> list[Window]:
    """Consecutive windows advancing by one test span; the latest ends at ``days``."""
    out = []
    for k in range(count):
        end = days - (count - 1 - k) * (test - 1)
        t0 = end - test
        v0 = t0 - validation
        out.append(Window((v0 - train, v0), (v0, t0), (t0, end)))
    if out[0].train[0] < 0:
        raise ValueError(f"{days} days cannot hold {count} windows")
    return out


@dataclass(frozen=True)
class BacktestConfig:
    n: int = 5
    portfolios: int = 100
    windows: tuple[Window, ...] = ()
    cost: float = COST_RATE
    seed: int = 0
    lookback: int = LOOKBACK
    strategies: tuple[str, ...] = STRATEGIES
    drl_grid: tuple[TrainConfig, ...] = (TrainConfig(episodes=100, hidden=(32, 32), batch_size=32),)
    val_portfolios: int = 20

    def __post_init__(self) -> None:
        if self.cost < 0:
            raise ValueError("cost rate must be >= 0")
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["windows"] = [asdict(w) for w in self.windows]
        d["drl_grid"] = [c.to_dict() for c in self.drl_grid]
        return d


@dataclass
class PathStats:
    annual_return: float
    cost_adjusted_return: float
    std: float
    sharpe: float | None
    turnover: float
    transaction_cost: float
    max_drawdown: float
    flags: list[str] = field(default_factory=list)


def path_stats(path: WealthPath, cost: float) -> PathStats:
    """Return, σ, Sharpe and the trading metrics of one path (percent units except Sharpe)."""
    flags = list(path.flags)
    rets = path.daily_returns()
    ann = 100.0 * annualized_return(path.W)
    to = turnover(path) if path.N >= 2 else 0.0
    tc = transaction_cost(path, cost)
    try:
        sr = sharpe(rets)
    except ZeroVariance:
        sr = None
        flags.append("zero_variance")
    return PathStats(ann, ann - tc, 100.0 * annualized_volatility(rets), sr, to, tc, 100.0 * max_drawdown(path.W), flags)


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


@dataclass
class StrategySummary:
    name: str
    mean_path: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    stats: dict
    portfolios: int
    flags: dict

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "portfolios": self.portfolios,
            "stats": self.stats,
            "flags": self.flags,
            "mean_path": self.mean_path.tolist(),
            "lo95": self.lo95.tolist(),
            "hi95": self.hi95.tolist(),
        }


def summarize(name: str, paths: list[WealthPath], stats: list[PathStats]) -> StrategySummary:
    W = np.vstack([p.W for p in paths])
    mean = W.mean(axis=0)
    lo, hi = np.percentile(W, [2.5, 97.5], axis=0)
    # empirical percentiles need not bracket a mean dragged by one outlier
    lo, hi = np.minimum(lo, mean), np.maximum(hi, mean)
    agg = {
        key: _mean_or_none([getattr(s, key) for s in stats])
        for key in ("annual_return", "cost_adjusted_return", "std", "sharpe", "turnover", "transaction_cost", "max_drawdown")
    }
    counts: dict[str, int] = {}
    for s in stats:
        for f in s.flags:
            key = f.split(":")[0]
            counts[key] = counts.get(key, 0) + 1
    return StrategySummary(name, mean, lo, hi, agg, len(paths), dict(sorted(counts.items())))


@dataclass
class WindowReport:
    window: Window
    target: float
    dates: tuple[date, ...]
    strategies: dict[str, StrategySummary]
    leaderboard: list[dict]
    failures: list[dict]

    def to_dict(self) -> dict:
        return {
            "spans": asdict(self.window),
            "target": self.target,
            "dates": [d.isoformat() for d in self.dates],
            "strategies": {k: v.to_dict() for k, v in self.strategies.items()},
            "leaderboard": self.leaderboard,
            "failures": self.failures,
        }


@dataclass
class BacktestReport:
    config: BacktestConfig
    windows: list[WindowReport]

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "windows": [w.to_dict() for w in self.windows]}


# --- driver ---------------------------------------------------------------


def _draw_rng(seed: int, window: int, draw: int) -> np.random.Generator:
    return np.random.default_rng([seed, window, draw])


def run_backtest(
    pool: PriceSeries,
    config: BacktestConfig,
    targets: Sequence[float],
    *,
    policies: Sequence[Policy] | None = None,
) -> BacktestReport:
    """Evaluate every strategy on the same seeded portfolio draws of every window.

    ``policies`` (one per window) skips DRL training when supplied.
    """
    if len(targets) != len(config.windows):
        raise ValueError("need one target return per window")
    rel = pool.relatives()  # row i: close[i+1] / close[i]
    P = len(pool.tickers)
    if P < config.n:
        raise InvalidSpec(f"pool has {P} tickers, need {config.n}")
    reports = []
    for w_idx, (win, z) in enumerate(zip(config.windows, targets)):
        t0, t1 = win.test
        if t1 > len(pool.dates):
            raise InvalidSpec(f"window {w_idx} test span ends past the pool")
        N = t1 - t0 - 1
        leaderboard: list[dict] = []
        policy = None
        if "ipo-drl" in config.strategies:
            if policies is not None:
                policy = policies[w_idx]
            else:
                grid = [_with_horizon(c, win, config.n) for c in config.drl_grid]
                train_pool = pool.slice(*win.train)
                val_pool = pool.slice(*win.validation)
                policy, leaderboard = hyperparameter_search(
                    grid, train_pool, val_pool, z, config.val_portfolios, seed=config.seed
                )
        paths: dict[str, list[WealthPath]] = {s: [] for s in config.strategies}
        stats: dict[str, list[PathStats]] = {s: [] for s in config.strategies}
        failures = []
        for d in range(config.portfolios):
            rng = _draw_rng(config.seed, w_idx, d)
            cols = np.sort(rng.choice(P, size=config.n, replace=False))
            try:
                episode = MarketEpisode(rel[t0 : t0 + N][:, cols], tuple(pool.tickers[c] for c in cols))
                result = {}
                for s in config.strategies:
                    if s == "ipo-drl":
                        result[s] = policy.run(episode)
                    elif s == "buy-and-hold":
                        result[s] = buy_and_hold(estimate_before(rel[:, cols], t0, config.lookback), z, episode)
                    else:
                        ests = [estimate_before(rel[:, cols], t0 + k, config.lookback) for k in quarter_starts(N)]
                        result[s] = quarterly_mv(ests, z, episode)
                row = {s: path_stats(p, config.cost) for s, p in result.items()}
            except RoboAdviseError as exc:
                failures.append({"draw": d, "tickers": [pool.tickers[c] for c in cols], "error": f"{type(exc).__name__}: {exc}"})
                log.warning("window %d draw %d failed: %s", w_idx, d, exc)
                continue
            for s in config.strategies:
                paths[s].append(result[s])
                stats[s].append(row[s])
        if not any(paths.values()) or not paths[config.strategies[0]]:
            raise RoboAdviseError(f"every portfolio draw failed in window {w_idx}")
        summaries = {s: summarize(s, paths[s], stats[s]) for s in config.strategies}
        reports.append(WindowReport(win, float(z), pool.dates[t0:t1], summaries, leaderboard, failures))
    return BacktestReport(config, reports)


def _with_horizon(cfg: TrainConfig, win: Window, n: int) -> TrainConfig:
    """Clip the training horizon to what the train span can supply."""
    span = win.train[1] - win.train[0] - 1
    return replace(cfg, n=n, horizon=min(cfg.horizon, span))


def write_report(report: BacktestReport, out: str | Path, extra: dict | None = None) -> list[Path]:
    """Write the JSON report and one ``date,mean,lo95,hi95`` CSV per strategy and window."""
    out = Path(out)
    doc = report.to_dict()
    if extra:
        doc.update(extra)
    out.write_text(json.dumps(doc, sort_keys=True, indent=1), encoding="utf-8")
    written = [out]
    for w_idx, wr in enumerate(report.windows):
        for name, summ in wr.strategies.items():
            path = out.with_name(f"{out.stem}_w{w_idx}_{name}.csv")
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["date", "mean", "lo95", "hi95"])
                for d, m, lo, hi in zip(wr.dates, summ.mean_path, summ.lo95, summ.hi95):
                    writer.writerow([d.isoformat(), repr(float(m)), repr(float(lo)), repr(float(hi))])
            written.append(path)
    return written
