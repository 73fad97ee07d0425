"""Finite atomic measures: total variation, Kantorovich-Rubinstein norms and T1 plans.

Scalar transport plans come from the exact network simplex of POT and the
bounded KR dual is a small HiGHS linear program. For vector
valued measures the default norm is the sum of the componentwise scalar norms,
which bounds the exact vectorial norm from above by at most a factor ``dim V``;
the exact vectorial dual is available as a second-order-cone program.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

# POT probes every installed array backend on import; only numpy is used here
for _backend in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402

from .errors import LPInfeasible, MassImbalance

COALESCE_TOL = 1e-12


@dataclass
class AtomicMeasure:
    """``sum_k v_k delta_{p_k}`` with ``p_k`` in R^d and ``v_k`` in R^n."""

    points: np.ndarray
    values: np.ndarray
    reference_point: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, float))
        vals = np.asarray(self.values, float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if len(pts) == 0:
            d = pts.shape[1] if pts.ndim == 2 and pts.shape[1] else 1
            pts = np.zeros((0, d))
            vals = vals.reshape(0, vals.shape[1] if vals.ndim == 2 and vals.shape[1] else 1)
        if len(pts) != len(vals):
            raise ValueError("points and values must have the same length")
        pts, vals = _coalesce(pts, vals)
        self.points = pts
        self.values = vals
        x0 = np.zeros(pts.shape[1]) if self.reference_point is None else np.asarray(self.reference_point, float)
        self.reference_point = x0

    @classmethod
    def from_vertex_measure(cls, m, tol: float = 0.0, reference_point=None) -> "AtomicMeasure":
        idx = m.support(tol)
        return cls(m.graph.points[idx], m.values[idx], reference_point)

    @classmethod
    def from_json(cls, text: str) -> "AtomicMeasure":
        data = json.loads(text)
        atoms = data["atoms"] if isinstance(data, dict) else data
        pts = [a["point"] for a in atoms]
        vals = [np.atleast_1d(a["value"]) for a in atoms]
        x0 = data.get("reference_point") if isinstance(data, dict) else None
        return cls(np.asarray(pts, float), np.asarray(vals, float), x0)

    def to_json(self) -> str:
        atoms = [{"point": p.tolist(), "value": v.tolist()} for p, v in zip(self.points, self.values)]
        return json.dumps({"atoms": atoms, "reference_point": self.reference_point.tolist()})

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def value_dim(self) -> int:
        return self.values.shape[1]

    def total(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def component(self, i: int) -> "AtomicMeasure":
        return AtomicMeasure(self.points, self.values[:, i:i + 1], self.reference_point)

    def __add__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        return AtomicMeasure(np.concatenate([self.points, other.points]),
                             np.concatenate([self.values, other.values]), self.reference_point)

    def __neg__(self) -> "AtomicMeasure":
        return AtomicMeasure(self.points, -self.values, self.reference_point)

    def __sub__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        return self + (-other)

    def __mul__(self, c) -> "AtomicMeasure":
        return AtomicMeasure(self.points, self.values * float(c), self.reference_point)

    __rmul__ = __mul__

    def pushforward(self, shift, scale: float) -> "AtomicMeasure":
        """Image under ``y -> (y - shift) / scale`` (reference point moved along)."""
        shift = np.asarray(shift, float)
        return AtomicMeasure((self.points - shift) / scale, self.values, (self.reference_point - shift) / scale)


def _coalesce(pts: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if len(pts) < 2:
        return pts.copy(), vals.copy()
    key = np.round(pts / COALESCE_TOL).astype(np.int64) if np.all(np.abs(pts) < 1e6) else None
    if key is None:
        return pts.copy(), vals.copy()
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    out = np.zeros((len(first), vals.shape[1]))
    np.add.at(out, inv, vals)
    order = np.argsort(first)
    return pts[first[order]], out[order]


def total_variation(m: AtomicMeasure) -> float:
    return float(np.linalg.norm(m.values, axis=1).sum())


# ---------------------------------------------------------------------------
# scalar transport
# ---------------------------------------------------------------------------

@dataclass
class TransportPlan:
    """Scalar plan moving mass from the negative part to the positive part."""

    sources: np.ndarray
    targets: np.ndarray
    mass: np.ndarray
    cost: float
    source_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    target_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.mass)


def scalar_w1_plan(points: np.ndarray, weights: np.ndarray, tol: float | None = None) -> TransportPlan:
    """Optimal W1 coupling from ``weights^-`` to ``weights^+`` (zero total mass)."""
    points = np.atleast_2d(np.asarray(points, float))
    w = np.asarray(weights, float).reshape(-1)
    tv = float(np.abs(w).sum())
    if tol is None:
        tol = 1e-14 * max(tv, 1.0)
    if abs(w.sum()) > 1e-10 * max(tv, 1e-300) and abs(w.sum()) > 1e-15:
        raise MassImbalance(f"total mass {w.sum():.3e} is not zero")
    neg = np.flatnonzero(w < -tol)
    pos = np.flatnonzero(w > tol)
    src, a, dst, b = points[neg], -w[neg], points[pos], w[pos]
    if len(a) == 0 or len(b) == 0:
        d = points.shape[1]
        return TransportPlan(np.zeros((0, d)), np.zeros((0, d)), np.zeros(0), 0.0)
    # unit total mass keeps the simplex tolerances relative; balance exactly after dropping round-off atoms
    total = a.sum()
    a = a / total
    b = b * (a.sum() / b.sum())
    x, log = ot.emd(a, b, cdist(src, dst), numItermax=max(100_000, 50 * len(a) * len(b)), log=True)
    if log["warning"] is not None:
        raise LPInfeasible(f"transport simplex failed: {log['warning']}")
    x = x * total
    keep = np.argwhere(x > 1e-14 * max(tv, 1.0))
    cost = float(log["cost"]) * total
    return TransportPlan(src[keep[:, 0]], dst[keep[:, 1]], x[keep[:, 0], keep[:, 1]], cost,
                         neg[keep[:, 0]], pos[keep[:, 1]])


def t1_flow(m: AtomicMeasure) -> list[TransportPlan]:
    """Per-component optimal plans for a measure of zero total mass."""
    tv = total_variation(m)
    tot = m.total()
    if np.any(np.abs(tot) > 1e-10 * max(tv, 1e-300)) and np.any(np.abs(tot) > 1e-15):
        raise MassImbalance(f"measure has nonzero total mass {tot}")
    return [scalar_w1_plan(m.points, m.values[:, i]) for i in range(m.value_dim)]


def _scalar_tilde_sup(points, w, x0) -> float:
    """``sup{ sum psi_k w_k : psi(x0) = 0, Lip(psi) <= 1 }`` as a transport cost."""
    pts = np.concatenate([points, x0[None, :]])
    ww = np.concatenate([w, [-w.sum()]])
    return scalar_w1_plan(pts, ww).cost


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def kr_tilde(m: AtomicMeasure, exact: bool = False) -> float:
    """Tilde Kantorovich-Rubinstein norm with reference point ``m.reference_point``.

    ``exact=False`` uses the componentwise sum for vector measures (an upper
    bound); scalar measures are always exact.
    """
    if len(m.points) == 0:
        return 0.0
    mass = float(np.linalg.norm(m.total()))
    if m.value_dim == 1 or not exact:
        return mass + sum(_scalar_tilde_sup(m.points, m.values[:, i], m.reference_point) for i in range(m.value_dim))
    return mass + _vector_sup(m, bounded=False)


def kr(m: AtomicMeasure, exact: bool = False) -> float:
    """Kantorovich-Rubinstein norm: dual over bounded 1-Lipschitz test functions."""
    if len(m.points) == 0:
        return 0.0
    if m.value_dim == 1 or not exact:
        return sum(_scalar_kr(m.points, m.values[:, i]) for i in range(m.value_dim))
    return _vector_sup(m, bounded=True)


def _scalar_kr(points, w) -> float:
    k = len(points)
    if k == 0 or not np.any(w):
        return 0.0
    if k == 1:
        return float(abs(w[0]))
    D = cdist(points, points)
    iu, ju = np.triu_indices(k, 1)
    rows = len(iu)
    A = np.zeros((2 * rows, k))
    A[np.arange(rows), iu] = 1.0
    A[np.arange(rows), ju] = -1.0
    A[rows + np.arange(rows), iu] = -1.0
    A[rows + np.arange(rows), ju] = 1.0
    b = np.concatenate([D[iu, ju], D[iu, ju]])
    res = linprog(-w, A_ub=A, b_ub=b, bounds=(-1, 1), method="highs")
    if res.status != 0:
        raise LPInfeasible(f"KR dual LP failed: {res.message}")
    return float(-res.fun)


def _vector_sup(m: AtomicMeasure, bounded: bool) -> float:
    import cvxpy as cp

    pts = m.points
    vals = m.values
    if not bounded:
        pts = np.concatenate([pts, m.reference_point[None, :]])
        vals = np.concatenate([vals, np.zeros((1, m.value_dim))])
    k, n = vals.shape
    psi = cp.Variable((k, n))
    D = cdist(pts, pts)
    iu, ju = np.triu_indices(k, 1)
    cons = [cp.norm(psi[iu] - psi[ju], axis=1) <= D[iu, ju]] if len(iu) else []
    if bounded:
        cons.append(cp.norm(psi, axis=1) <= 1)
    else:
        cons.append(psi[k - 1] == 0)
    prob = cp.Problem(cp.Maximize(cp.sum(cp.multiply(psi, vals))), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise LPInfeasible(f"vector KR dual failed: {prob.status}")
    return float(prob.value)


def kr_equivalence_constant(points, reference_point) -> float:
    """A constant ``c`` with ``kr_tilde <= c * kr`` for measures on ``points``."""
    pts = np.atleast_2d(np.asarray(points, float))
    spread = float(np.linalg.norm(pts - np.asarray(reference_point, float), axis=1).max()) if len(pts) else 0.0
    return 1.0 + max(1.0, spread)
