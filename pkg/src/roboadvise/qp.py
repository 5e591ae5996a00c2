"""Dense convex QP: ``min 1/2 x'Qx + q'x  s.t.  A x >= b`` (some rows equalities).

Primal active-set method in null-space form.  The reduced Hessian may be
singular: along zero-curvature directions the method takes a linear descent
step to the nearest blocking constraint, so PSD problems (rank-deficient
covariances, KKT systems whose dual block carries no curvature) are solved
exactly without regularization.  Ties on entering and leaving constraints are
broken by smallest index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, MaxIterations, SolverError, Unbounded


@dataclass(frozen=True)
class ConstraintSet:
    """Rows of ``A x >= b``; rows flagged in ``equality`` hold with equality."""

    A: np.ndarray
    b: np.ndarray
    equality: np.ndarray

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        eq = np.asarray(self.equality, dtype=bool).reshape(-1)
        if A.shape[0] != b.shape[0] or eq.shape[0] != b.shape[0]:
            raise ValueError(f"inconsistent constraint shapes {A.shape}, {b.shape}, {eq.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "equality", eq)

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @classmethod
    def simplex(cls, n: int) -> "ConstraintSet":
        """Long-only (``x >= 0``) plus a budget equality ``sum(x) = 1`` as the last row."""
        A = np.vstack([np.eye(n), np.ones((1, n))])
        b = np.concatenate([np.zeros(n), [1.0]])
        eq = np.concatenate([np.zeros(n, dtype=bool), [True]])
        return cls(A, b, eq)

    @classmethod
    def empty(cls, n: int) -> "ConstraintSet":
        return cls(np.zeros((0, n)), np.zeros(0), np.zeros(0, dtype=bool))

    def inequality_rows(self) -> np.ndarray:
        return np.flatnonzero(~self.equality)


@dataclass(frozen=True)
class QpProblem:
    Q: np.ndarray
    q: np.ndarray
    constraints: ConstraintSet

    def __post_init__(self) -> None:
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        q = np.asarray(self.q, dtype=float).reshape(-1)
        n = q.shape[0]
        if Q.shape != (n, n) or self.constraints.n != n:
            raise ValueError("QP dimensions are inconsistent")
        if not np.allclose(Q, Q.T, atol=1e-10, rtol=0):
            raise ValueError("Q must be symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.q @ x)

    def scaled(self, factor: float) -> "QpProblem":
        return QpProblem(factor * self.Q, factor * self.q, self.constraints)


@dataclass
class QpSolution:
    x: np.ndarray
    u: np.ndarray
    active: tuple[int, ...]
    objective: float
    status: str = "optimal"  # optimal | infeasible | unbounded
    iterations: int = 0
    singular: bool = False  # optimum lies on a face with zero curvature (argmin not unique)


@dataclass
class KktReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float
    tol: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def check_kkt(problem: QpProblem, candidate: QpSolution, tol: float) -> KktReport:
    """Residuals of the four KKT conditions; never raises."""
    cons = problem.constraints
    x, u = np.asarray(candidate.x, float), np.asarray(candidate.u, float)
    ineq = ~cons.equality
    grad = problem.Q @ x + problem.q - cons.A.T @ u
    slack = cons.A @ x - cons.b
    stat = float(np.max(np.abs(grad))) if grad.size else 0.0
    viol = np.concatenate([np.maximum(-slack[ineq], 0.0), np.abs(slack[~ineq])])
    primal = float(viol.max()) if viol.size else 0.0
    dual = float(np.maximum(-u[ineq], 0.0).max()) if ineq.any() else 0.0
    prod = np.where(u[ineq] == 0.0, 0.0, u[ineq] * np.where(np.isfinite(slack[ineq]), slack[ineq], 0.0))
    comp = float(np.abs(prod).max()) if ineq.any() else 0.0
    report = KktReport(stat, primal, dual, comp, tol)
    for name in ("stationarity", "primal", "dual", "complementarity"):
        if getattr(report, name) > tol:
            report.failures.append(name)
    return report


def _independent_rows(C: np.ndarray, rows: list[int], tol: float = 1e-10) -> list[int]:
    keep: list[int] = []
    for r in rows:
        trial = C[keep + [r]]
        if np.linalg.matrix_rank(trial, tol=tol * max(1.0, np.abs(trial).max())) == len(keep) + 1:
            keep.append(r)
    return keep


class _ActiveSet:
    """Shared iteration for phase 1 (H = 0) and phase 2."""

    def __init__(self, H, f, C, d, eq, tol, max_iter):
        self.H, self.f, self.C, self.d, self.eq = H, f, C, d, eq
        self.tol, self.max_iter = tol, max_iter
        self.n = H.shape[0]
        hnorm = float(np.abs(H).max()) if H.size else 0.0
        self.curv_tol = 1e-12 * max(hnorm, 1e-300)

    def run(self, w: np.ndarray, work: list[int]):
        H, f, C, d = self.H, self.f, self.C, self.d
        n = self.n
        at_min = False
        singular = False
        for it in range(self.max_iter):
            g = H @ w + f
            k = len(work)
            if k:
                Qf, R = np.linalg.qr(C[work].T, mode="complete")
                Z = Qf[:, k:]
            else:
                Qf, R, Z = None, None, np.eye(n)
            p = None
            linear = False
            if Z.shape[1] and not at_min:
                gz = Z.T @ g
                vals, V = np.linalg.eigh(Z.T @ H @ Z)
                zero = vals <= max(self.curv_tol, 1e-12 * max(vals.max(), 0.0))
                gv = V.T @ gz
                gscale = 1e-11 * max(1.0, float(np.abs(g).max()))
                if zero.any() and np.abs(gv[zero]).max() > gscale:
                    p = -Z @ (V[:, zero] @ gv[zero])
                    linear = True
                else:
                    pos = ~zero
                    p = -Z @ (V[:, pos] @ (gv[pos] / vals[pos])) if pos.any() else np.zeros(n)
                    singular = bool(zero.any())
            if p is None or (not linear and np.abs(p).max() <= 1e-15 * (1.0 + np.abs(w).max())):
                # stationary on the current working set: inspect multipliers
                if k:
                    lam = np.linalg.solve(R[:k, :k], Qf[:, :k].T @ g)
                else:
                    lam = np.zeros(0)
                dual_tol = self.tol * max(1.0, float(np.abs(g).max()))
                leave = None
                for pos_i, row in sorted(enumerate(work), key=lambda t: t[1]):
                    if not self.eq[row] and lam[pos_i] < -dual_tol:
                        leave = pos_i
                        break
                if leave is None:
                    return w, work, lam, it, singular
                del work[leave]
                at_min = False
                singular = False
                continue
            # ratio test against inactive inequality rows
            Cp = C @ p
            slack = C @ w - d
            alpha, block = (np.inf if linear else 1.0), None
            in_work = np.zeros(C.shape[0], dtype=bool)
            in_work[work] = True
            cand = np.flatnonzero((~in_work) & (~self.eq) & (Cp < -1e-14 * (1.0 + np.abs(p).max())))
            if cand.size:
                steps = np.maximum(slack[cand], 0.0) / -Cp[cand]
                smin = steps.min()
                if smin <= alpha:
                    ties = cand[steps <= smin + 1e-15 * (1.0 + smin)]
                    block = int(ties.min())
                    alpha = float(smin)
            if block is None and linear:
                raise Unbounded("objective decreases without bound along a feasible ray")
            w = w + alpha * p
            if block is not None:
                work.append(block)
                at_min = False
            else:
                at_min = True
        raise MaxIterations(f"active set did not converge in {self.max_iter} iterations")


def _phase_one(C, d, eq, tol, max_iter):
    """Return a feasible point and the independent equality rows."""
    n = C.shape[1]
    eq_rows = list(np.flatnonzero(eq))
    if eq_rows:
        CE, dE = C[eq_rows], d[eq_rows]
        w0, *_ = np.linalg.lstsq(CE, dE, rcond=None)
        if np.abs(CE @ w0 - dE).max() > 1e3 * tol * (1.0 + np.abs(dE).max()):
            raise Infeasible("equality constraints are inconsistent")
        eq_rows = _independent_rows(C, eq_rows)
    else:
        w0 = np.zeros(n)
    ineq = np.flatnonzero(~eq)
    viol = float(np.max(d[ineq] - C[ineq] @ w0, initial=0.0))
    if viol <= tol:
        return w0, eq_rows
    # min t  s.t.  C_I w + t >= d_I,  t >= 0,  C_E w = d_E
    m = C.shape[0]
    C1 = np.zeros((m + 1, n + 1))
    C1[:m, :n] = C
    C1[ineq, n] = 1.0
    C1[m, n] = 1.0
    d1 = np.concatenate([d, [0.0]])
    eq1 = np.concatenate([eq, [False]])
    f1 = np.zeros(n + 1)
    f1[n] = 1.0
    solver = _ActiveSet(np.zeros((n + 1, n + 1)), f1, C1, d1, eq1, tol, max_iter)
    w1, _, _, _, _ = solver.run(np.concatenate([w0, [viol]]), list(eq_rows))
    if w1[n] > tol * max(1.0, viol) and w1[n] > tol:
        raise Infeasible(f"constraints are infeasible (residual {w1[n]:.3e})")
    return w1[:n], eq_rows


def solve_qp(problem: QpProblem, tol: float = 1e-8, *, max_iter: int | None = None) -> QpSolution:
    """Solve the QP to an optimal primal/dual pair.

    Raises ``Infeasible``, ``Unbounded`` or ``MaxIterations``.
    """
    cons = problem.constraints
    n, m = problem.q.shape[0], cons.m
    H, f, C, d, eq = problem.Q, problem.q, cons.A, cons.b, cons.equality
    max_iter = max_iter or 50 * (n + m + 10)
    w, eq_rows = _phase_one(C, d, eq, tol, max_iter)
    solver = _ActiveSet(H, f, C, d, eq, tol, max_iter)
    w, work, lam, iters, singular = solver.run(w, list(eq_rows))
    u = np.zeros(m)
    u[work] = lam
    x = w
    return QpSolution(
        x=x,
        u=u,
        active=tuple(int(i) for i in sorted(work)),
        objective=problem.objective(x),
        status="optimal",
        iterations=iters,
        singular=singular,
    )


def try_solve_qp(problem: QpProblem, tol: float = 1e-8) -> QpSolution:
    """Like ``solve_qp`` but reports infeasible/unbounded through ``status``."""
    n, m = problem.q.shape[0], problem.constraints.m
    try:
        return solve_qp(problem, tol)
    except Infeasible:
        status = "infeasible"
    except Unbounded:
        status = "unbounded"
    return QpSolution(np.full(n, np.nan), np.zeros(m), (), np.inf if status == "infeasible" else -np.inf, status)


__all__ = [
    "ConstraintSet",
    "QpProblem",
    "QpSolution",
    "KktReport",
    "SolverError",
    "check_kkt",
    "solve_qp",
    "try_solve_qp",
]
