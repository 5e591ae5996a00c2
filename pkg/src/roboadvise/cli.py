"""Command-line entry point.

Every subcommand resolves its parameters from defaults, then an optional JSON
``--config`` file, then explicit flags, and stamps the resolved set (including
seeds) into each artifact it writes.  Errors go to stderr as one JSON record;
exit codes are 2 for usage errors, 3 for data errors and 4 for solver or
training failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .backtest import (
    COST_RATE,
    BacktestConfig,
    SyntheticSpec,
    gen_synthetic_pool,
    path_stats,
    rolling_windows,
    run_backtest,
    summarize,
    write_report,
)
from .drl import (
    TrainConfig,
    hyperparameter_search,
    load_policy,
    save_policy,
    universal_episode_sampler,
    write_training_log,
)
from .errors import DataError, RoboAdviseError, SolverError, TrainingError
from .forward import ForwardSpec, solve_forward
from .inverse import IpoConfig, alternating_learn, ensemble_annual_target
from .market_data import (
    HoldingsSnapshot,
    align_observations,
    load_holdings,
    load_prices,
    lookback_covariance,
    rolling_yearly_profit,
    write_holdings,
    write_prices,
)

log = logging.getLogger("roboadvise")

QUARTER_DAYS = 63
YEAR_DAYS = 252

DEFAULTS: dict[str, dict] = {
    "gen-data": {
        "n": 5,
        "days": 900,
        "seed": 0,
        "drift": 3e-4,
        "volatility": 0.012,
        "correlation": 0.3,
        "drift_spread": 2e-4,
        "out": None,
        "holdings": None,
        "true_r": 0.02,
        "window": 60,
        "every": 42,
    },
    "infer": {
        "prices": None,
        "holdings": None,
        "out": None,
        "window": 60,
        "M": 1e3,
        "eta": 1e3,
        "r0": 1.0,
        "mode": "restart",
        "solver": "auto",
        "seed": 0,
    },
    "train": {
        "prices": None,
        "out": None,
        "target": 0.1,
        "n": 5,
        "seed": 0,
        "validation_fraction": 0.25,
        "portfolios": 20,
        "grid": None,  # list of TrainConfig overrides
        "episodes": 100,
        "hidden": [32, 32],
        "batch_size": 32,
    },
    "backtest": {
        "prices": None,
        "out": None,
        "target": 0.1,
        "n": 5,
        "portfolios": 20,
        "window": 2,  # number of rolling windows
        "seed": 0,
        "cost": 5e-4,
        "grid": None,
        "episodes": 100,
        "hidden": [32, 32],
        "batch_size": 32,
        "val_portfolios": 20,
    },
    "eval-policy": {
        "prices": None,
        "policy": None,
        "out": None,
        "portfolios": 20,
        "seed": 0,
        "start": 0,
        "stop": None,
        "n": None,
    },
}

REQUIRED = {
    "gen-data": ("out",),
    "infer": ("prices", "holdings", "out"),
    "train": ("prices", "out"),
    "backtest": ("prices", "out"),
    "eval-policy": ("prices", "policy", "out"),
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    params: dict

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "version": __version__, "params": self.params}


WINDOW_HELP = {
    "gen-data": "profit lookback rows used to generate synthetic holdings",
    "infer": "lookback rows of profits for each covariance estimate",
    "backtest": "number of rolling train/validate/test windows",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roboadvise", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    def common(p, *names):
        p.add_argument("--config", help="JSON file of parameters; flags override its values")
        p.add_argument("--out", help="output path")
        p.add_argument("--seed", type=int, help="master random seed")
        if "prices" in names:
            p.add_argument("--prices", help="long CSV with columns date,ticker,close")
        if "holdings" in names:
            p.add_argument("--holdings", help="long CSV with columns date,ticker,weight")
        if "n" in names:
            p.add_argument("--n", type=int, help="stocks per portfolio (assets for gen-data)")
        if "portfolios" in names:
            p.add_argument("--portfolios", type=int, help="number of random portfolio draws")
        if "window" in names:
            p.add_argument("--window", type=int, help=WINDOW_HELP[p.prog.split()[-1]])
        if "target" in names:
            p.add_argument("--target", help="annual target return, or a profile JSON written by infer")

    p = sub.add_parser("gen-data", help="write a synthetic GBM price pool (and round-trip holdings)")
    common(p, "n", "window", "holdings")
    p = sub.add_parser("infer", help="learn risk tolerance and expected returns from holdings")
    common(p, "prices", "holdings", "window")
    p = sub.add_parser("train", help="hyperparameter search for the DRL policy")
    common(p, "prices", "n", "portfolios", "target")
    p = sub.add_parser("backtest", help="compare strategies over rolling windows")
    common(p, "prices", "n", "portfolios", "window", "target")
    p = sub.add_parser("eval-policy", help="run a saved policy on a span of prices")
    common(p, "prices", "portfolios", "n")
    p.add_argument("--policy", help="policy JSON written by train")
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    params = dict(DEFAULTS[args.subcommand])
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise DataError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        loaded = loaded.get("params", loaded)
        for key, value in loaded.items():
            if key not in params:
                raise UsageError(f"unknown config key {key!r} for {args.subcommand}")
            params[key] = value
    for key in params:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    missing = [k for k in REQUIRED[args.subcommand] if params.get(k) in (None, "")]
    if missing:
        raise UsageError(f"missing required parameters: {', '.join('--' + m for m in missing)}")
    return RunConfig(args.subcommand, params)


def _write_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


# --- subcommands -----------------------------------------------------------


def synthetic_holdings(prices, r: float, window: int, every: int):
    """Holdings chosen by a mean-variance investor with tolerance ``r`` and ``c = lookback mean``."""
    profits = rolling_yearly_profit(prices, YEAR_DAYS)
    snaps, truth = [], []
    for k in range(window, len(profits.dates), every):
        d = profits.dates[k]
        Q, mean = lookback_covariance(profits, d, window)
        y = np.clip(solve_forward(ForwardSpec(Q, mean, r=r)).x, 0.0, None)
        y = y / y.sum()
        snaps.append(HoldingsSnapshot(d, prices.tickers, y))
        truth.append({"date": d.isoformat(), "r": r, "c": mean.tolist(), "z": float(mean @ y)})
    return snaps, truth


def cmd_gen_data(cfg: RunConfig) -> None:
    p = cfg.params
    n = int(p["n"])
    if n < 1:
        raise UsageError("--n must be >= 1")
    corr = np.full((n, n), float(p["correlation"]))
    np.fill_diagonal(corr, 1.0)
    drifts = p["drift"] + p["drift_spread"] * (np.linspace(-1, 1, n) if n > 1 else np.zeros(1))
    vols = p["volatility"] if isinstance(p["volatility"], list) else [p["volatility"]] * n
    spec = SyntheticSpec(list(drifts), vols, corr)
    prices = gen_synthetic_pool(spec, int(p["days"]), int(p["seed"]))
    write_prices(p["out"], prices)
    stamp = {"run_config": cfg.to_dict()}
    _write_json(str(p["out"]) + ".meta.json", stamp)
    if p["holdings"]:
        snaps, truth = synthetic_holdings(prices, float(p["true_r"]), int(p["window"]), int(p["every"]))
        write_holdings(p["holdings"], snaps)
        _write_json(str(p["holdings"]) + ".truth.json", {**stamp, "truth": truth})


def _quarter_key(d: date) -> tuple[int, int]:
    return d.year, (d.month - 1) // 3


def cmd_infer(cfg: RunConfig) -> None:
    p = cfg.params
    prices = load_prices(p["prices"])
    holdings = load_holdings(p["holdings"])
    ipo = IpoConfig(M=float(p["M"]), eta=p["eta"], r0=float(p["r0"]), mode=p["mode"], solver=p["solver"])
    w = int(p["window"])
    yearly = alternating_learn(align_observations(holdings, rolling_yearly_profit(prices, YEAR_DAYS), w), ipo)
    quarterly = alternating_learn(align_observations(holdings, rolling_yearly_profit(prices, QUARTER_DAYS), w), ipo)
    # one quarterly estimate per calendar quarter (its last snapshot), the latest four
    per_quarter: dict[tuple[int, int], float] = {}
    for est in quarterly:
        per_quarter[_quarter_key(est.date)] = est.z
    last_four = [per_quarter[k] for k in sorted(per_quarter)[-4:]]
    target = ensemble_annual_target(last_four, yearly[-1].z, label=yearly[-1].date.isoformat())
    doc = {
        "run_config": cfg.to_dict(),
        "estimates": [e.to_dict() for e in yearly],
        "quarterly_estimates": [e.to_dict() for e in quarterly],
        "target": {
            "label": target.label,
            "quarterly": list(target.quarterly),
            "yearly": target.yearly,
            "annualized_from_quarterly": target.annualized_from_quarterly,
            "ensemble": target.ensemble,
        },
    }
    _write_json(p["out"], doc)


def _target_value(raw) -> float:
    if isinstance(raw, (int, float)):
        return float(raw)
    try:
        return float(raw)
    except ValueError:
        pass
    path = Path(raw)
    if not path.exists():
        raise UsageError(f"--target is neither a number nor an existing profile file: {raw!r}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    try:
        return float(doc["target"]["ensemble"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"{raw}: no target.ensemble in profile") from exc


def _grid(p: dict) -> list[TrainConfig]:
    base = {"n": int(p["n"]), "seed": int(p["seed"]), "episodes": int(p["episodes"]),
            "hidden": tuple(p["hidden"]), "batch_size": int(p["batch_size"])}
    entries = p.get("grid") or [{}]
    try:
        return [TrainConfig.from_dict({**base, **entry}) for entry in entries]
    except TypeError as exc:
        raise UsageError(f"bad grid entry: {exc}") from exc


def cmd_train(cfg: RunConfig) -> None:
    p = cfg.params
    prices = load_prices(p["prices"])
    z = _target_value(p["target"])
    T = len(prices.dates)
    cut = int(round(T * (1.0 - float(p["validation_fraction"]))))
    if cut < 2 or T - cut < 2:
        raise DataError(f"{T} price rows cannot be split into train and validation spans")
    grid = _grid(p)
    train_pool, val_pool = prices.slice(0, cut), prices.slice(cut, T)
    grid = [TrainConfig.from_dict({**g.to_dict(), "horizon": min(g.horizon, cut - 1)}) for g in grid]
    policy, board = hyperparameter_search(grid, train_pool, val_pool, z, int(p["portfolios"]), seed=int(p["seed"]))
    save_policy(p["out"], policy, {"run_config": cfg.to_dict(), "target": z, "leaderboard": board})
    write_training_log(Path(str(p["out"]) + ".log.csv"), policy.history)


def cmd_backtest(cfg: RunConfig) -> None:
    p = cfg.params
    prices = load_prices(p["prices"])
    z = _target_value(p["target"])
    count = int(p["window"])
    try:
        windows = rolling_windows(len(prices.dates), count=count)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    config = BacktestConfig(
        n=int(p["n"]),
        portfolios=int(p["portfolios"]),
        windows=tuple(windows),
        cost=float(p["cost"]),
        seed=int(p["seed"]),
        drl_grid=tuple(_grid(p)),
        val_portfolios=int(p["val_portfolios"]),
    )
    report = run_backtest(prices, config, [z] * count)
    write_report(report, p["out"], {"run_config": cfg.to_dict()})


def cmd_eval_policy(cfg: RunConfig) -> None:
    p = cfg.params
    prices = load_prices(p["prices"])
    policy = load_policy(p["policy"])
    stop = len(prices.dates) if p["stop"] is None else int(p["stop"])
    span = prices.slice(int(p["start"]), stop)
    if p["n"] is not None and int(p["n"]) != policy.n:
        raise UsageError(f"policy allocates {policy.n} assets, --n is {p['n']}")
    rel = span.relatives()
    N = min(policy.config.horizon, rel.shape[0])
    rng = np.random.default_rng(int(p["seed"]))
    paths, stats = [], []
    for _ in range(int(p["portfolios"])):
        ep = universal_episode_sampler(span, policy.n, N, rng, relatives=rel)
        path = policy.run(ep)
        paths.append(path)
        stats.append(path_stats(path, COST_RATE))
    summary = summarize("ipo-drl", paths, stats)
    _write_json(p["out"], {"run_config": cfg.to_dict(), "summary": summary.to_dict(), "mean_sharpe": summary.stats["sharpe"]})


COMMANDS = {
    "gen-data": cmd_gen_data,
    "infer": cmd_infer,
    "train": cmd_train,
    "backtest": cmd_backtest,
    "eval-policy": cmd_eval_policy,
}


def _fail(code: int, exc: BaseException) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        code = exc.code if isinstance(exc.code, int) else 2
        if code:
            print(json.dumps({"error": "UsageError", "message": "invalid command line", "exit_code": 2}), file=sys.stderr)
        return code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        cfg = resolve(args)
        COMMANDS[args.subcommand](cfg)
    except UsageError as exc:
        return _fail(2, exc)
    except (DataError, FileNotFoundError) as exc:
        return _fail(3, exc)
    except (SolverError, TrainingError) as exc:
        return _fail(4, exc)
    except RoboAdviseError as exc:
        return _fail(4, exc)
    except (ValueError, TypeError) as exc:
        return _fail(2, exc)
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
