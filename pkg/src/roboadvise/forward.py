"""Forward mean-variance problems: risk-tolerance form and target-return form."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible
from .qp import ConstraintSet, QpProblem, QpSolution, solve_qp


@dataclass(frozen=True)
class ForwardSpec:
    """``mode="risk"``: min 1/2 x'Qx - r c'x.  ``mode="target"``: min 1/2 x'Qx s.t. c'x >= e."""

    Q: np.ndarray
    c: np.ndarray
    mode: str = "risk"
    r: float | None = None
    e: float | None = None
    constraints: ConstraintSet | None = None

    def __post_init__(self) -> None:
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        c = np.asarray(self.c, dtype=float).reshape(-1)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        if self.constraints is None:
            object.__setattr__(self, "constraints", ConstraintSet.simplex(c.shape[0]))
        if self.mode == "risk":
            if self.r is None or not self.r > 0:
                raise ValueError("risk-tolerance mode needs r > 0")
        elif self.mode == "target":
            if self.e is None:
                raise ValueError("target-return mode needs e")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class ForwardResult:
    x: np.ndarray
    u: np.ndarray  # duals of the constraint rows actually solved (return row first in target mode)
    constraints: ConstraintSet
    solution: QpSolution = field(repr=False)


def stack_constraints(c: np.ndarray, e: float, base: ConstraintSet) -> ConstraintSet:
    """Prepend the return row ``c'x >= e`` to ``base``."""
    c = np.asarray(c, dtype=float).reshape(1, -1)
    return ConstraintSet(
        np.vstack([c, base.A]) if base.m else c,
        np.concatenate([[e], base.b]),
        np.concatenate([[False], base.equality]),
    )


def solve_forward(spec: ForwardSpec, tol: float = 1e-10) -> ForwardResult:
    n = spec.c.shape[0]
    if spec.mode == "risk":
        cons = spec.constraints
        problem = QpProblem(spec.Q, -spec.r * spec.c, cons)
    else:
        cons = stack_constraints(spec.c, spec.e, spec.constraints)
        problem = QpProblem(spec.Q, np.zeros(n), cons)
    try:
        sol = solve_qp(problem, tol)
    except Infeasible as exc:
        raise Infeasible(f"forward problem infeasible ({spec.mode} mode): {exc}") from exc
    return ForwardResult(sol.x, sol.u, cons, sol)


def min_variance(Q: np.ndarray, constraints: ConstraintSet | None = None) -> np.ndarray:
    n = Q.shape[0]
    cons = constraints or ConstraintSet.simplex(n)
    return solve_qp(QpProblem(Q, np.zeros(n), cons)).x
