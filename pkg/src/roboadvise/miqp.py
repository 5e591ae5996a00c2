"""Mixed-integer QPs arising from big-M linearized complementarity.

A problem has a continuous block ``w`` (quadratic objective, linear rows) and
one binary ``z_j`` per complementarity pair ``(u_j, s_j)`` where ``u_j`` is a
dual variable and ``s_j = S_j w - s0_j`` the matching primal slack.  Both are
already constrained nonnegative; the binaries add

    u_j <= M z_j,        s_j <= M (1 - z_j).

Fixing every ``z`` leaves a convex QP.  Relaxing ``z_j`` to ``[0, 1]`` and
projecting it out gives the single row ``u_j + s_j <= M``, which is what the
branch-and-bound nodes use.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, PatternLimitExceeded
from .qp import ConstraintSet, QpProblem, try_solve_qp

TIE_TOL = 1e-8


@dataclass(frozen=True)
class MiqpProblem:
    H: np.ndarray
    f: np.ndarray
    const: float
    constraints: ConstraintSet
    dual_index: np.ndarray  # position of u_j in w, one per pair
    S: np.ndarray  # (pairs, len(w)) slack rows
    s0: np.ndarray  # slack offsets, s_j = S_j w - s0_j
    param: slice = slice(0, 0)  # the learned parameter inside w

    @property
    def pairs(self) -> int:
        return int(self.dual_index.shape[0])

    def objective(self, w: np.ndarray) -> float:
        return float(0.5 * w @ self.H @ w + self.f @ w + self.const)

    def slacks(self, w: np.ndarray) -> np.ndarray:
        return self.S @ w - self.s0

    def duals(self, w: np.ndarray) -> np.ndarray:
        return w[self.dual_index]


@dataclass
class MiqpResult:
    w: np.ndarray
    z: np.ndarray
    objective: float
    nodes: int
    ties: int = 1  # optimal patterns found within TIE_TOL
    non_identifiable: bool = False
    flags: list[str] = field(default_factory=list)


def _node_qp(problem: MiqpProblem, fixed: dict[int, int], M: float) -> QpProblem:
    k = problem.H.shape[0]
    rows, rhs, eqs = [], [], []
    for j in range(problem.pairs):
        e_u = np.zeros(k)
        e_u[problem.dual_index[j]] = 1.0
        s_row = problem.S[j]
        z = fixed.get(j)
        if z == 0:
            rows += [e_u, -s_row]
            rhs += [0.0, -M - problem.s0[j]]
            eqs += [True, False]
        elif z == 1:
            rows += [s_row, -e_u]
            rhs += [problem.s0[j], -M]
            eqs += [True, False]
        else:
            rows.append(-e_u - s_row)
            rhs.append(-M - problem.s0[j])
            eqs.append(False)
    base = problem.constraints
    cons = ConstraintSet(
        np.vstack([base.A] + rows) if rows else base.A,
        np.concatenate([base.b, rhs]),
        np.concatenate([base.equality, np.array(eqs, dtype=bool)]),
    )
    return QpProblem(problem.H, problem.f, cons)


def _pattern_from(problem: MiqpProblem, w: np.ndarray, fixed: dict[int, int]) -> np.ndarray:
    s = problem.slacks(w)
    u = problem.duals(w)
    z = np.array([fixed.get(j, int(s[j] <= u[j])) for j in range(problem.pairs)], dtype=int)
    return z


def _distinct_params(problem: MiqpProblem, ws: list[np.ndarray]) -> bool:
    if len(ws) < 2:
        return False
    ref = ws[0][problem.param]
    return any(np.abs(w[problem.param] - ref).max() > 1e-6 for w in ws[1:])


def enumerate_patterns(
    problem: MiqpProblem, M: float, *, max_patterns: int = 1 << 24, tol: float = 1e-10
) -> MiqpResult:
    """Exhaustive search over all binary patterns."""
    p = problem.pairs
    if (1 << p) > max_patterns:
        raise PatternLimitExceeded(f"{1 << p} patterns exceed the limit {max_patterns}")
    results = []
    for bits in itertools.product((0, 1), repeat=p):
        fixed = dict(enumerate(bits))
        sol = try_solve_qp(_node_qp(problem, fixed, M), tol)
        if sol.status == "optimal":
            results.append((problem.objective(sol.x), bits, sol.x))
    if not results:
        raise Infeasible("no complementarity pattern is feasible")
    best = min(r[0] for r in results)
    tied = [r for r in results if r[0] <= best + TIE_TOL * (1.0 + abs(best))]
    obj, bits, w = min(tied, key=lambda r: (r[0], r[1]))
    return MiqpResult(
        w=w,
        z=np.array(bits, dtype=int),
        objective=obj,
        nodes=1 << p,
        ties=len(tied),
        non_identifiable=_distinct_params(problem, [r[2] for r in tied]),
    )


def branch_and_bound(
    problem: MiqpProblem, M: float, *, tol: float = 1e-10, comp_tol: float = 1e-9, max_nodes: int = 1 << 20
) -> MiqpResult:
    """Best-first branch-and-bound on the continuous relaxation."""
    counter = itertools.count()
    nodes = 0
    incumbent: tuple[float, np.ndarray, np.ndarray] | None = None
    tied: list[np.ndarray] = []

    def solve(fixed):
        nonlocal nodes
        nodes += 1
        sol = try_solve_qp(_node_qp(problem, fixed, M), tol)
        if sol.status != "optimal":
            return None
        return problem.objective(sol.x), sol.x

    root = solve({})
    heap = []
    if root is not None:
        heapq.heappush(heap, (root[0], next(counter), {}, root[1]))
    while heap:
        bound, _, fixed, w = heapq.heappop(heap)
        if incumbent is not None and bound > incumbent[0] + TIE_TOL * (1.0 + abs(incumbent[0])):
            break
        u, s = problem.duals(w), problem.slacks(w)
        scale = max(1.0, float(np.abs(w).max()))
        viol = np.array(
            [0.0 if j in fixed else min(u[j], s[j]) for j in range(problem.pairs)]
        )
        if viol.size == 0 or viol.max() <= comp_tol * scale:
            z = _pattern_from(problem, w, fixed)
            if incumbent is None or bound < incumbent[0] - TIE_TOL * (1.0 + abs(bound)):
                if incumbent is not None and bound > incumbent[0] - TIE_TOL * (1.0 + abs(incumbent[0])):
                    tied.append(w)
                else:
                    tied = [w]
                incumbent = (bound, w, z)
            else:
                tied.append(w)
            continue
        j = int(np.argmax(viol))
        for val in (0, 1):
            child = dict(fixed)
            child[j] = val
            res = solve(child)
            if res is not None:
                heapq.heappush(heap, (res[0], next(counter), child, res[1]))
        if nodes > max_nodes:
            raise PatternLimitExceeded(f"branch-and-bound exceeded {max_nodes} nodes")
    if incumbent is None:
        raise Infeasible("no complementarity pattern is feasible")
    obj, w, z = incumbent
    return MiqpResult(
        w=w,
        z=z,
        objective=obj,
        nodes=nodes,
        ties=len(tied),
        non_identifiable=_distinct_params(problem, tied),
    )


def solve_miqp(
    problem: MiqpProblem,
    M: float = 1e3,
    solver: str = "auto",
    *,
    enumerate_limit: int = 12,
    max_patterns: int = 1 << 24,
    audit: bool = True,
    max_raises: int = 3,
) -> MiqpResult:
    """Solve with the requested strategy, then audit the big-M bound.

    ``auto`` enumerates when there are at most ``enumerate_limit`` pairs.  If
    any dual or slack of the optimum comes within 1% of ``M`` the problem is
    re-solved with ``10 M``.
    """
    if solver == "auto":
        solver = "enumerate" if problem.pairs <= enumerate_limit else "branch-and-bound"
    flags: list[str] = []
    for attempt in range(max_raises + 1):
        if solver == "enumerate":
            result = enumerate_patterns(problem, M, max_patterns=max_patterns)
        elif solver == "branch-and-bound":
            result = branch_and_bound(problem, M)
        else:
            raise ValueError(f"unknown MIQP solver {solver!r}")
        peak = max(
            float(np.abs(problem.duals(result.w)).max(initial=0.0)),
            float(np.abs(problem.slacks(result.w)).max(initial=0.0)),
        )
        if not audit or peak < 0.99 * M or attempt == max_raises:
            if peak >= 0.99 * M:
                flags.append("big_m_binding")
            break
        flags.append(f"big_m_raised:{M * 10:g}")
        M *= 10
    result.flags = flags + result.flags
    if result.non_identifiable:
        result.flags.append("non_identifiable")
    return result
