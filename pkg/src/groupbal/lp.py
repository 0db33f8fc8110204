"""Small dense linear programs over the simplex.

Problems maximize a linear objective over w in the simplex (w >= 0,
sum w = 1) intersected with half-spaces a.w >= b.  `solve` is a
two-phase dense simplex with Bland's anti-cycling rule; the domain is
compact so the outcome is only ever optimal or infeasible.
`enumerate_oracle` independently checks small instances by enumerating
every basic feasible point.

Constraints are used exactly as given; no rescaling happens here, the
caller owns the normalization policy.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .group_state import simplex_weights

__all__ = ["LpProblem", "LpSolution", "solve", "enumerate_oracle"]

FEAS_TOL = 1e-8  # accepted constraint violation
PIVOT_TOL = 1e-11  # tableau entries below this count as zero
_MAX_ORACLE_K = 5
_MAX_ORACLE_CONSTRAINTS = 8


@dataclass(frozen=True)
class LpProblem:
    """Maximize objective.w over the simplex subject to a.w >= b rows."""

    objective: np.ndarray
    constraints: tuple = ()

    def __post_init__(self):
        obj = np.asarray(self.objective, dtype=np.float64)
        if obj.ndim != 1 or obj.size < 2:
            raise ValueError(f"objective must be 1-D with K >= 2, got shape {obj.shape}")
        if not np.all(np.isfinite(obj)):
            raise ValueError("objective contains non-finite entries")
        cons = []
        for a, b in self.constraints:
            a = np.asarray(a, dtype=np.float64)
            b = float(b)
            if a.shape != obj.shape:
                raise ValueError(f"constraint row shape {a.shape} != objective shape {obj.shape}")
            if not (np.all(np.isfinite(a)) and np.isfinite(b)):
                raise ValueError("constraint contains non-finite entries")
            cons.append((a, b))
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "constraints", tuple(cons))

    @property
    def k(self) -> int:
        return self.objective.size


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible"
    w: np.ndarray | None
    objective_value: float


def _bland_pivot_loop(T: np.ndarray, basis: list[int], n_enter: int) -> None:
    """Run simplex pivots to optimality on a minimization tableau.

    Row layout: T[:-1] are constraint rows with rhs in the last column,
    T[-1] holds reduced costs and -objective in the corner.  Entering
    candidates are restricted to columns < n_enter (phase 2 excludes the
    artificials this way).  Bland's rule: smallest eligible entering
    column; ratio ties leave the row whose basic variable has the
    smallest index.
    """
    m = T.shape[0] - 1
    max_pivots = 1000 + 100 * T.shape[1]
    for _ in range(max_pivots):
        red = T[-1, :n_enter]
        entering = -1
        for j in range(n_enter):
            if red[j] < -PIVOT_TOL:
                entering = j
                break
        if entering < 0:
            return
        leave = -1
        best_ratio = np.inf
        for i in range(m):
            aij = T[i, entering]
            if aij <= PIVOT_TOL:
                continue
            ratio = T[i, -1] / aij
            if leave < 0 or ratio < best_ratio or (ratio == best_ratio and basis[i] < basis[leave]):
                leave = i
                best_ratio = ratio
        if leave < 0:
            # impossible on a compact domain; means the tableau is corrupt
            raise RuntimeError("simplex reported an unbounded direction on a bounded LP")
        piv = T[leave, entering]
        T[leave] /= piv
        for r in range(m + 1):
            if r != leave and T[r, entering] != 0.0:
                T[r] -= T[r, entering] * T[leave]
        basis[leave] = entering
    raise RuntimeError("simplex exceeded the pivot budget")


def solve(problem: LpProblem) -> LpSolution:
    """Exact optimum (to ~1e-9) of the LP, or infeasible."""
    k = problem.k
    ncons = len(problem.constraints)
    n = k + ncons  # w variables plus one surplus per inequality
    m = ncons + 1  # inequality rows plus the simplex equality

    A = np.zeros((m, n))
    b = np.zeros(m)
    for i, (a, bi) in enumerate(problem.constraints):
        A[i, :k] = a
        A[i, k + i] = -1.0  # a.w - s = b, s >= 0
        b[i] = bi
    A[ncons, :k] = 1.0
    b[ncons] = 1.0

    neg = b < 0.0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: artificial basis, minimize the sum of artificials
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _bland_pivot_loop(T, basis, n_enter=n + m)
    if -T[-1, -1] > FEAS_TOL:
        return LpSolution(status="infeasible", w=None, objective_value=float("nan"))

    # drive any artificial still basic (at zero level) out where possible;
    # rows with no structural pivot are redundant and stay inert
    for i in range(m):
        if basis[i] >= n:
            for j in range(n):
                if abs(T[i, j]) > PIVOT_TOL:
                    piv = T[i, j]
                    T[i] /= piv
                    for r in range(m + 1):
                        if r != i and T[r, j] != 0.0:
                            T[r] -= T[r, j] * T[i]
                    basis[i] = j
                    break

    # phase 2: minimize -objective.w over structural columns only
    cost = np.zeros(n + m)
    cost[:k] = -problem.objective
    zrow = np.concatenate([cost, [0.0]])
    for i, bi in enumerate(basis):
        if cost[bi] != 0.0:
            zrow -= cost[bi] * T[i]
    T[-1] = zrow
    _bland_pivot_loop(T, basis, n_enter=n)

    x = np.zeros(n)
    for i, bi in enumerate(basis):
        if bi < n:
            x[bi] = T[i, -1]
    w = simplex_weights(x[:k])
    _check_solution(problem, w)
    return LpSolution(status="optimal", w=w, objective_value=float(problem.objective @ w))


def _check_solution(problem: LpProblem, w: np.ndarray) -> None:
    for a, b in problem.constraints:
        if float(a @ w) < b - 10 * FEAS_TOL:
            raise RuntimeError("simplex returned an infeasible point; numerical failure")


def enumerate_oracle(problem: LpProblem) -> LpSolution:
    """Brute-force optimum by enumerating all basic feasible points.

    Every vertex of the feasible polytope activates K-1 of the boundary
    hyperplanes (w_j = 0 or a_i.w = b_i) together with sum w = 1, so
    scanning all such square systems and keeping the feasible solutions
    finds the optimum whenever one exists.  Limited to K <= 5 and at most
    8 constraints.
    """
    k = problem.k
    cons = problem.constraints
    if k > _MAX_ORACLE_K:
        raise ValueError(f"oracle limited to K <= {_MAX_ORACLE_K}, got {k}")
    if len(cons) > _MAX_ORACLE_CONSTRAINTS:
        raise ValueError(f"oracle limited to {_MAX_ORACLE_CONSTRAINTS} constraints, got {len(cons)}")

    pool_rows = [np.eye(k)[j] for j in range(k)] + [a for a, _ in cons]
    pool_rhs = [0.0] * k + [b for _, b in cons]
    combos = list(itertools.combinations(range(len(pool_rows)), k - 1))

    systems = np.empty((len(combos), k, k))
    rhs = np.empty((len(combos), k))
    for idx, combo in enumerate(combos):
        systems[idx, 0, :] = 1.0
        rhs[idx, 0] = 1.0
        for r, c in enumerate(combo, start=1):
            systems[idx, r, :] = pool_rows[c]
            rhs[idx, r] = pool_rhs[c]

    dets = np.linalg.det(systems)
    nonsingular = np.abs(dets) > 1e-12
    if not np.any(nonsingular):
        return LpSolution(status="infeasible", w=None, objective_value=float("nan"))
    candidates = np.linalg.solve(systems[nonsingular], rhs[nonsingular][..., None])[..., 0]

    ok = np.all(np.isfinite(candidates), axis=1)
    ok &= np.min(candidates, axis=1) >= -1e-9
    for a, b in cons:
        ok &= candidates @ a >= b - FEAS_TOL
    if not np.any(ok):
        return LpSolution(status="infeasible", w=None, objective_value=float("nan"))

    feasible = candidates[ok]
    values = feasible @ problem.objective
    best = int(np.argmax(values))
    w = simplex_weights(np.maximum(feasible[best], 0.0))
    return LpSolution(status="optimal", w=w, objective_value=float(problem.objective @ w))
