"""Small dense two-phase simplex with Bland's rule.

Solves ``min c.x  s.t.  A_eq x = b_eq,  0 <= x <= ub`` for desk-size problems.
It shares no code with the production LP path and serves as an independent
oracle in tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LPInfeasible


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    pivots: int


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T: np.ndarray, basis: list, n_cols: int, tol: float, max_pivots: int) -> int:
    """Minimise the last row of tableau ``T`` over columns ``< n_cols`` (Bland's rule)."""
    pivots = 0
    m = T.shape[0] - 1
    while True:
        cost = T[-1, :n_cols]
        enter = next((j for j in range(n_cols) if cost[j] < -tol), None)
        if enter is None:
            return pivots
        col = T[:m, enter]
        rhs = T[:m, -1]
        best, leave = np.inf, None
        for i in range(m):
            if col[i] > tol:
                ratio = rhs[i] / col[i]
                if ratio < best - tol or (abs(ratio - best) <= tol and leave is not None and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            raise LPInfeasible("LP is unbounded")
        _pivot(T, leave, enter)
        basis[leave] = enter
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("simplex pivot limit reached")


def simplex_solve(c, A_eq, b_eq, ub=None, tol: float = 1e-10, max_pivots: int = 200_000) -> SimplexResult:
    c = np.asarray(c, float)
    A = np.atleast_2d(np.asarray(A_eq, float))
    b = np.asarray(b_eq, float)
    n = len(c)
    if ub is not None:
        ub = np.asarray(ub, float)
        fin = np.flatnonzero(np.isfinite(ub))
        # x_j + s_j = ub_j for every finite upper bound
        extra = np.zeros((len(fin), n + len(fin)))
        extra[np.arange(len(fin)), fin] = 1.0
        extra[np.arange(len(fin)), n + np.arange(len(fin))] = 1.0
        A = np.vstack([np.hstack([A, np.zeros((A.shape[0], len(fin)))]), extra])
        b = np.concatenate([b, ub[fin]])
        c = np.concatenate([c, np.zeros(len(fin))])
    m, N = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # phase one with artificial variables N..N+m-1
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :N] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(N, N + m))
    pivots = _run(T, basis, N + m, tol, max_pivots)
    if T[-1, -1] < -1e-8 * max(1.0, np.abs(b).max(initial=0.0)):
        raise LPInfeasible("LP is infeasible")
    # drive remaining artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= N:
            j = next((j for j in range(N) if abs(T[i, j]) > tol), None)
            if j is not None:
                _pivot(T, i, j)
                basis[i] = j
                pivots += 1
    keep = [i for i in range(m) if basis[i] < N]
    T2 = np.zeros((len(keep) + 1, N + 1))
    T2[:-1, :N] = T[keep, :N]
    T2[:-1, -1] = T[keep, -1]
    basis2 = [basis[i] for i in keep]
    T2[-1, :N] = c
    for i, j in enumerate(basis2):
        T2[-1] -= c[j] * T2[i]
    pivots += _run(T2, basis2, N, tol, max_pivots)
    x = np.zeros(N)
    for i, j in enumerate(basis2):
        x[j] = T2[i, -1]
    return SimplexResult(x[:n], float(c[:N] @ x), pivots)
