from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pytest

from roboadvise.market_data import PriceSeries


def make_prices(close, start=date(2020, 1, 1), tickers=None) -> PriceSeries:
    close = np.asarray(close, dtype=float)
    if close.ndim == 1:
        close = close[:, None]
    tickers = tickers or tuple(f"T{j}" for j in range(close.shape[1]))
    dates = tuple(start + timedelta(days=i) for i in range(close.shape[0]))
    return PriceSeries(dates, tuple(tickers), close)


def random_spd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    G = rng.normal(size=(n, n))
    return scale * (G @ G.T / n + 0.05 * np.eye(n))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
