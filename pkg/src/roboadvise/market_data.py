"""Price/holdings ingestion and the observation stream fed to the inverse agent."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    InsufficientHistory,
    MissingCell,
    NonPositivePrice,
    SeriesTooShort,
    UniverseMismatch,
    UnparseableDate,
    WrongAggregation,
)

log = logging.getLogger(__name__)

TRADING_DAYS = 252
WEIGHT_TOL = 1e-6


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple[date, ...]
    tickers: tuple[str, ...]
    close: np.ndarray  # (len(dates), len(tickers))

    def __post_init__(self) -> None:
        close = np.asarray(self.close, dtype=float)
        if close.shape != (len(self.dates), len(self.tickers)):
            raise DataError(
                f"close has shape {close.shape}, expected {(len(self.dates), len(self.tickers))}"
            )
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        if not np.all(np.isfinite(close)):
            raise MissingCell("non-finite close price")
        if np.any(close <= 0):
            raise NonPositivePrice("close prices must be > 0")
        close.setflags(write=False)
        object.__setattr__(self, "close", close)

    def select(self, tickers: Sequence[str]) -> "PriceSeries":
        idx = [self.tickers.index(t) for t in tickers]
        return PriceSeries(self.dates, tuple(tickers), self.close[:, idx])

    def slice(self, start: int, stop: int) -> "PriceSeries":
        return PriceSeries(self.dates[start:stop], self.tickers, self.close[start:stop])

    def relatives(self) -> np.ndarray:
        """Gross daily price relatives ``S[i+1] / S[i]``, shape (T-1, n)."""
        return self.close[1:] / self.close[:-1]


@dataclass(frozen=True)
class ProfitSeries:
    dates: tuple[date, ...]
    tickers: tuple[str, ...]
    profits: np.ndarray
    aggregation: str = "daily"  # "daily" | "monthly"


@dataclass(frozen=True)
class HoldingsSnapshot:
    date: date
    tickers: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.tickers),):
            raise DataError("weights/tickers length mismatch")
        if np.any(w < 0):
            raise DataError(f"negative holding weight on {self.date}")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise DataError(f"holdings on {self.date} sum to {w.sum():.8f}, not 1")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class Observation:
    date: date
    y: np.ndarray
    Q: np.ndarray
    mean_profit: np.ndarray


@dataclass(frozen=True)
class ObservationStream:
    tickers: tuple[str, ...]
    entries: tuple[Observation, ...]
    warnings: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.entries)

    def prefix(self, length: int) -> "ObservationStream":
        return ObservationStream(self.tickers, self.entries[:length], self.warnings)


def _parse_date(raw: str, lineno: int) -> date:
    try:
        return date.fromisoformat(raw.strip())
    except ValueError as exc:
        raise UnparseableDate(f"line {lineno}: cannot parse date {raw!r}") from exc


def _read_long_csv(path: Path, value_column: str) -> list[tuple[date, str, float]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = {"date", "ticker", value_column} - set(header)
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            d = _parse_date(row["date"], lineno)
            raw = (row[value_column] or "").strip()
            if raw == "":
                raise MissingCell(f"line {lineno}: empty {value_column}")
            try:
                value = float(raw)
            except ValueError as exc:
                raise DataError(f"line {lineno}: bad {value_column} {raw!r}") from exc
            rows.append((d, row["ticker"].strip(), value))
    return rows


def load_prices(path: str | Path) -> PriceSeries:
    """Read a long ``date,ticker,close`` CSV into a dense price matrix."""
    rows = _read_long_csv(Path(path), "close")
    dates = sorted({d for d, _, _ in rows})
    tickers = sorted({t for _, t, _ in rows})
    d_idx = {d: i for i, d in enumerate(dates)}
    t_idx = {t: j for j, t in enumerate(tickers)}
    close = np.full((len(dates), len(tickers)), np.nan)
    for d, t, v in rows:
        if not np.isfinite(v) or v <= 0:
            raise NonPositivePrice(f"{t} on {d}: close {v}")
        close[d_idx[d], t_idx[t]] = v
    gaps = np.argwhere(np.isnan(close))
    if len(gaps):
        i, j = gaps[0]
        raise MissingCell(f"no close for {tickers[j]} on {dates[i]} ({len(gaps)} gaps)")
    return PriceSeries(tuple(dates), tuple(tickers), close)


def write_prices(path: str | Path, prices: PriceSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "ticker", "close"])
        for i, d in enumerate(prices.dates):
            for j, t in enumerate(prices.tickers):
                writer.writerow([d.isoformat(), t, repr(float(prices.close[i, j]))])


def load_holdings(path: str | Path) -> list[HoldingsSnapshot]:
    """Read ``date,ticker,weight`` rows; every snapshot spans the union universe."""
    rows = _read_long_csv(Path(path), "weight")
    universe = tuple(sorted({t for _, t, _ in rows}))
    t_idx = {t: j for j, t in enumerate(universe)}
    by_date: dict[date, np.ndarray] = {}
    for d, t, w in rows:
        by_date.setdefault(d, np.zeros(len(universe)))[t_idx[t]] += w
    return [HoldingsSnapshot(d, universe, by_date[d]) for d in sorted(by_date)]


def write_holdings(path: str | Path, snapshots: Iterable[HoldingsSnapshot]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "ticker", "weight"])
        for snap in snapshots:
            for t, w in zip(snap.tickers, snap.weights):
                if w > 0:
                    writer.writerow([snap.date.isoformat(), t, repr(float(w))])


def rolling_yearly_profit(prices: PriceSeries, window: int = TRADING_DAYS) -> ProfitSeries:
    """Rolling profit ``close[t] / close[t - window + 1] - 1`` for every full window."""
    if window < 1:
        raise ValueError("window must be positive")
    if len(prices.dates) < window:
        raise SeriesTooShort(f"{len(prices.dates)} rows < window {window}")
    close = prices.close
    profits = close[window - 1:] / close[: len(close) - window + 1] - 1.0
    return ProfitSeries(prices.dates[window - 1:], prices.tickers, profits, "daily")


def monthly_aggregate(daily: ProfitSeries) -> ProfitSeries:
    """Average daily values per calendar month; rows are labelled by the month's last date."""
    if daily.aggregation != "daily":
        raise WrongAggregation(f"expected daily input, got {daily.aggregation}")
    labels: list[date] = []
    rows: list[np.ndarray] = []
    start = 0
    dates = daily.dates
    for i in range(1, len(dates) + 1):
        if i == len(dates) or (dates[i].year, dates[i].month) != (dates[start].year, dates[start].month):
            labels.append(dates[i - 1])
            rows.append(daily.profits[start:i].mean(axis=0))
            start = i
    profits = np.vstack(rows) if rows else np.empty((0, len(daily.tickers)))
    return ProfitSeries(tuple(labels), daily.tickers, profits, "monthly")


def repair_psd(Q: np.ndarray) -> np.ndarray:
    """Symmetrize and clip negative eigenvalues at zero."""
    Q = 0.5 * (Q + Q.T)
    vals, vecs = np.linalg.eigh(Q)
    if vals.min() >= 0:
        return Q
    Q = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return 0.5 * (Q + Q.T)


def lookback_covariance(profits: ProfitSeries, t: date, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance and mean of the ``w + 1`` profit rows ending at ``t``.

    Rows dated after ``t`` are never used, so the estimate has no look-ahead.
    """
    if w < 1:
        raise ValueError("lookback must be positive")
    end = int(np.searchsorted(np.array(profits.dates, dtype="datetime64[D]"), np.datetime64(t, "D"), side="right"))
    if end < w + 1:
        raise InsufficientHistory(f"{end} profit rows up to {t}, need {w + 1}")
    block = profits.profits[end - w - 1 : end]
    mean = block.mean(axis=0)
    Q = np.atleast_2d(np.cov(block, rowvar=False, ddof=1))
    return repair_psd(Q), mean


def align_observations(
    holdings: Sequence[HoldingsSnapshot], profits: ProfitSeries, w: int
) -> ObservationStream:
    """Pair each holdings snapshot with the lookback covariance and mean profit at its date."""
    if not holdings:
        raise DataError("no holdings snapshots")
    held = set().union(*(s.tickers for s in holdings))
    universe = tuple(sorted(held & set(profits.tickers)))
    if not universe:
        raise UniverseMismatch("holdings and prices share no tickers")
    dropped = sorted(held - set(universe))
    cols = [profits.tickers.index(t) for t in universe]
    sub = ProfitSeries(profits.dates, universe, profits.profits[:, cols], profits.aggregation)

    warnings: list[str] = []
    if dropped:
        warnings.append(f"dropped tickers without prices: {', '.join(dropped)}")
        log.warning(warnings[-1])
    entries = []
    for snap in holdings:
        pos = {t: i for i, t in enumerate(snap.tickers)}
        y = np.array([snap.weights[pos[t]] if t in pos else 0.0 for t in universe])
        total = y.sum()
        if total <= 0:
            raise UniverseMismatch(f"no priced holdings on {snap.date}")
        if abs(total - 1.0) > WEIGHT_TOL:
            warnings.append(f"{snap.date}: renormalized weights after dropping {1 - total:.6f}")
            log.warning(warnings[-1])
            y = y / total
        Q, mean = lookback_covariance(sub, snap.date, w)
        entries.append(Observation(snap.date, y, Q, mean))
    return ObservationStream(universe, tuple(entries), tuple(warnings))
