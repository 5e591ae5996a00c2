"""Inverse portfolio optimization: recover r, c or the return floor e from holdings.

Each inverse problem replaces the forward QP by its KKT system, linearizes
complementarity with big-M binaries, and minimizes a prior-deviation term plus
``eta * ||y - x||^2`` over the learned parameter, the implied portfolio ``x``
and the multipliers ``u``.  The continuous vector is laid out as
``w = (theta, x, u)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Sequence

import numpy as np

from .errors import RoboAdviseError, SolverError
from .forward import stack_constraints
from .market_data import ObservationStream
from .miqp import MiqpProblem, MiqpResult, solve_miqp
from .qp import ConstraintSet

log = logging.getLogger(__name__)

R_FLOOR = 1e-6


@dataclass(frozen=True)
class IpoConfig:
    M: float = 1e3
    eta: float | Sequence[float] | Callable[[int], float] = 1e3
    r0: float = 1.0
    c_bounds: tuple = (-0.5, 1.0)
    e_bounds: tuple = (-0.5, 1.0)
    r_bounds: tuple = (R_FLOOR, np.inf)
    solver: str = "auto"  # auto | enumerate | branch-and-bound
    mode: str = "restart"  # restart | warm

    def __post_init__(self) -> None:
        if not self.M > 0:
            raise ValueError("M must be positive")
        if isinstance(self.eta, (int, float)) and self.eta < 0:
            raise ValueError("eta must be nonnegative")
        lo, hi = (np.asarray(b, dtype=float) for b in self.c_bounds)
        if np.any(lo > hi):
            raise ValueError("c_bounds lower exceeds upper")
        if self.e_bounds[0] > self.e_bounds[1]:
            raise ValueError("e_bounds lower exceeds upper")
        if self.solver not in ("auto", "enumerate", "branch-and-bound"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.mode not in ("restart", "warm"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def eta_at(self, t: int) -> float:
        if callable(self.eta):
            value = float(self.eta(t))
        elif isinstance(self.eta, (int, float)):
            value = float(self.eta)
        else:
            if t >= len(self.eta):
                raise ValueError(f"eta schedule has {len(self.eta)} entries, step {t} requested")
            value = float(self.eta[t])
        if value < 0:
            raise ValueError(f"eta at step {t} is negative")
        return value


@dataclass
class IpoResult:
    param: np.ndarray
    x: np.ndarray
    u: np.ndarray  # multipliers of every inner constraint row
    z: np.ndarray  # complementarity pattern over inner inequality rows
    objective: float
    fit_residual: float
    flags: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class RiskProfileEstimate:
    date: date | None
    r: float
    c: np.ndarray
    z: float
    fit_residual: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "date": self.date.isoformat() if self.date else None,
            "r": self.r,
            "c": [float(v) for v in self.c],
            "z": self.z,
            "residual": self.fit_residual,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class TargetReturn:
    label: str
    quarterly: tuple[float, ...]
    yearly: float
    annualized_from_quarterly: float
    ensemble: float


def build_inverse_miqp(
    Q: np.ndarray,
    y: np.ndarray,
    inner: ConstraintSet,
    stat_B: np.ndarray,
    rhs_B: np.ndarray,
    prior: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    eta: float,
) -> MiqpProblem:
    """Generic KKT-linearized inverse problem.

    The inner (forward) problem is ``min 1/2 x'Qx - (stat_B theta)'x`` subject
    to ``A x >= b + rhs_B theta``; its stationarity is
    ``Q x - stat_B theta - A'u = 0``.
    """
    Q = np.asarray(Q, float)
    y = np.asarray(y, float)
    prior = np.atleast_1d(np.asarray(prior, float))
    n, p, m = Q.shape[0], prior.shape[0], inner.m
    k = p + n + m
    A, b, eq = inner.A, inner.b, inner.equality
    ineq = np.flatnonzero(~eq)

    H = np.zeros((k, k))
    H[:p, :p] = np.eye(p)
    H[p : p + n, p : p + n] = 2.0 * eta * np.eye(n)
    f = np.concatenate([-prior, -2.0 * eta * y, np.zeros(m)])
    const = 0.5 * float(prior @ prior) + eta * float(y @ y)

    rows, rhs, eqs = [], [], []
    # stationarity
    stat = np.hstack([-stat_B, Q, -A.T])
    rows.append(stat)
    rhs.append(np.zeros(n))
    eqs.append(np.ones(n, dtype=bool))
    # primal feasibility
    primal = np.hstack([-rhs_B, A, np.zeros((m, m))])
    rows.append(primal)
    rhs.append(b)
    eqs.append(eq)
    # dual feasibility on inequality rows
    dual = np.zeros((len(ineq), k))
    dual[np.arange(len(ineq)), p + n + ineq] = 1.0
    rows.append(dual)
    rhs.append(np.zeros(len(ineq)))
    eqs.append(np.zeros(len(ineq), dtype=bool))
    # parameter box
    lo = np.broadcast_to(np.asarray(lo, float), (p,))
    hi = np.broadcast_to(np.asarray(hi, float), (p,))
    if eta == 0:
        # the observation carries no weight: the parameter is the (clipped) prior
        lo = hi = np.clip(prior, lo, hi)
    for i in range(p):
        if lo[i] == hi[i]:
            row = np.zeros(k)
            row[i] = 1.0
            rows.append(row[None])
            rhs.append([lo[i]])
            eqs.append([True])
            continue
        if np.isfinite(lo[i]):
            row = np.zeros(k)
            row[i] = 1.0
            rows.append(row[None])
            rhs.append([lo[i]])
            eqs.append([False])
        if np.isfinite(hi[i]):
            row = np.zeros(k)
            row[i] = -1.0
            rows.append(row[None])
            rhs.append([-hi[i]])
            eqs.append([False])
    cons = ConstraintSet(np.vstack(rows), np.concatenate(rhs), np.concatenate(eqs))
    return MiqpProblem(
        H=H,
        f=f,
        const=const,
        constraints=cons,
        dual_index=p + n + ineq,
        S=primal[ineq],
        s0=b[ineq],
        param=slice(0, p),
    )


def _finish(problem: MiqpProblem, result: MiqpResult, y: np.ndarray, n: int) -> IpoResult:
    p = problem.param.stop
    w = result.w
    x = w[p : p + n]
    param = w[:p].copy()
    # pinned parameters are reported at their pin, free of solver roundoff
    rows = _pin_rows(problem)
    param[rows >= 0] = problem.constraints.b[rows[rows >= 0]]
    return IpoResult(
        param=param,
        x=x.copy(),
        u=w[p + n :].copy(),
        z=result.z,
        objective=result.objective,
        fit_residual=float(np.linalg.norm(y - x)),
        flags=list(result.flags),
    )


def _pin_rows(problem: MiqpProblem) -> np.ndarray:
    """Row index of each parameter's equality pin, or -1."""
    cons = problem.constraints
    p = problem.param.stop
    rows = np.full(p, -1)
    for i in np.flatnonzero(cons.equality):
        nz = np.flatnonzero(cons.A[i])
        if len(nz) == 1 and nz[0] < p and cons.A[i, nz[0]] == 1.0:
            rows[nz[0]] = i
    return rows


def _simplex_default(constraints, n):
    return constraints if constraints is not None else ConstraintSet.simplex(n)


def solve_ipo_risk(
    Q: np.ndarray,
    c: np.ndarray,
    y: np.ndarray,
    r_prior: float,
    config: IpoConfig = IpoConfig(),
    *,
    eta: float | None = None,
    constraints: ConstraintSet | None = None,
) -> IpoResult:
    """Learn the risk tolerance ``r`` that best rationalizes ``y`` given ``c``."""
    c = np.asarray(c, float)
    n = c.shape[0]
    inner = _simplex_default(constraints, n)
    problem = build_inverse_miqp(
        Q, y, inner, c[:, None], np.zeros((inner.m, 1)), [r_prior],
        [max(config.r_bounds[0], R_FLOOR)], [config.r_bounds[1]],
        config.eta_at(0) if eta is None else eta,
    )
    result = solve_miqp(problem, config.M, config.solver)
    return _finish(problem, result, np.asarray(y, float), n)


def solve_ipo_return(
    Q: np.ndarray,
    r: float,
    y: np.ndarray,
    c_prior: np.ndarray,
    config: IpoConfig = IpoConfig(),
    *,
    eta: float | None = None,
    constraints: ConstraintSet | None = None,
) -> IpoResult:
    """Learn the asset-level expected returns ``c`` given the tolerance ``r``."""
    c_prior = np.asarray(c_prior, float)
    n = c_prior.shape[0]
    if not r > 0:
        raise ValueError("risk tolerance must be positive")
    inner = _simplex_default(constraints, n)
    lo, hi = config.c_bounds
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("c_bounds must be finite")
    problem = build_inverse_miqp(
        Q, y, inner, r * np.eye(n), np.zeros((inner.m, n)), c_prior, lo, hi,
        config.eta_at(0) if eta is None else eta,
    )
    result = solve_miqp(problem, config.M, config.solver)
    return _finish(problem, result, np.asarray(y, float), n)


def solve_ipo_b(
    Q: np.ndarray,
    c: np.ndarray,
    y: np.ndarray,
    e_prior: float,
    config: IpoConfig = IpoConfig(),
    *,
    eta: float | None = None,
    constraints: ConstraintSet | None = None,
) -> IpoResult:
    """Learn the portfolio return floor ``e`` of the target-return problem.

    The inner problem is ``min 1/2 x'Qx`` over the base constraints plus the
    leading row ``c'x >= e``; only ``e`` is free.
    """
    c = np.asarray(c, float)
    n = c.shape[0]
    base = _simplex_default(constraints, n)
    inner = stack_constraints(c, 0.0, base)
    lo, hi = config.e_bounds
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("e_bounds must be finite")
    rhs_B = np.zeros((inner.m, 1))
    rhs_B[0, 0] = 1.0
    problem = build_inverse_miqp(
        Q, y, inner, np.zeros((n, 1)), rhs_B, [e_prior], [lo], [hi],
        config.eta_at(0) if eta is None else eta,
    )
    result = solve_miqp(problem, config.M, config.solver)
    return _finish(problem, result, np.asarray(y, float), n)


def _learn_pass(stream: ObservationStream, config: IpoConfig, c0: np.ndarray, upto: int):
    r, c = config.r0, np.asarray(c0, float)
    out = None
    for t in range(upto):
        obs = stream.entries[t]
        eta = config.eta_at(t)
        try:
            ret = solve_ipo_return(obs.Q, r, obs.y, c, config, eta=eta)
            c = ret.param
            risk = solve_ipo_risk(obs.Q, c, obs.y, r, config, eta=eta)
        except RoboAdviseError as exc:
            raise type(exc)(f"t={t} ({obs.date}): {exc}") from exc
        r = float(risk.param[0])
        flags = tuple(dict.fromkeys(ret.flags + risk.flags))
        out = RiskProfileEstimate(obs.date, r, c.copy(), float(c @ obs.y), risk.fit_residual, flags)
        yield out


def alternating_learn(stream: ObservationStream, config: IpoConfig = IpoConfig()) -> list[RiskProfileEstimate]:
    """Alternate IPO-Return and IPO-Risk over the observation stream.

    ``restart`` mode re-runs the loop from ``(r0, c0)`` over every prefix,
    with ``c0`` the lookback mean profit at the prefix end, so the estimate at
    ``t`` never depends on later observations.  ``warm`` mode makes a single
    pass seeded with the first observation's mean profit.
    """
    if len(stream) == 0:
        raise ValueError("observation stream is empty")
    if config.mode == "warm":
        return list(_learn_pass(stream, config, stream.entries[0].mean_profit, len(stream)))
    estimates = []
    for T in range(1, len(stream) + 1):
        *_, last = _learn_pass(stream, config, stream.entries[T - 1].mean_profit, T)
        estimates.append(last)
    return estimates


def ensemble_annual_target(quarterly: Sequence[float], yearly: float, label: str = "") -> TargetReturn:
    """Compound quarterly returns to a year and average with the yearly estimate."""
    if len(quarterly) == 0:
        raise ValueError("need at least one quarterly return")
    annual = float(np.prod(1.0 + np.asarray(quarterly, float)) - 1.0)
    return TargetReturn(label, tuple(float(q) for q in quarterly), float(yearly), annual, 0.5 * (annual + float(yearly)))


__all__ = [
    "IpoConfig",
    "IpoResult",
    "RiskProfileEstimate",
    "TargetReturn",
    "SolverError",
    "alternating_learn",
    "build_inverse_miqp",
    "ensemble_annual_target",
    "solve_ipo_b",
    "solve_ipo_return",
    "solve_ipo_risk",
]
