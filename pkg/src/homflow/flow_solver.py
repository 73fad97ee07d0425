"""Minimise a localized edge energy subject to a divergence constraint.

``FlowProblem`` fixes the values of some edges (``pinned``) and asks for the
remaining ones so that ``DIVE J = m`` at every vertex that touches a free
edge. Three engines are provided:

* :func:`solve_convex` -- exact. Piecewise-linear scalar costs become an LP by
  arc splitting (HiGHS); other convex cases go through a conic program.
* :func:`solve_nonconvex` -- multi-start coordinate descent on cycle-space
  coordinates with exact line search over the cost kinks.
* :func:`brute_force` -- grid search over cycle coordinates, an oracle for
  problems with at most six of them.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components

from .calculus import DiscreteField, VertexMeasure, dive
from .energy import CostTable, EdgeCostFamily, LocalizedEnergy
from .errors import GraphMismatch, Infeasible, LPInfeasible, TooManyFreeVariables
from .simplex import simplex_solve

FEAS_TOL = 1e-10


@dataclass(eq=False)
class FlowProblem:
    """Minimise ``energy(J, region)`` over ``J`` with ``DIVE J = target`` and pinned edges fixed."""

    energy: LocalizedEnergy
    target: VertexMeasure
    region: object = None
    pinned_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pinned_values: np.ndarray | None = None

    def __post_init__(self):
        if self.target.graph is not self.energy.graph:
            raise GraphMismatch("divergence target lives on a different graph")
        self.pinned_ids = np.asarray(self.pinned_ids, dtype=np.int64).reshape(-1)
        n = self.target.value_dim
        if self.pinned_values is None:
            self.pinned_values = np.zeros((len(self.pinned_ids), n))
        pv = np.asarray(self.pinned_values, float)
        self.pinned_values = pv.reshape(len(self.pinned_ids), n)
        if len(np.unique(self.pinned_ids)) != len(self.pinned_ids):
            raise ValueError("an edge is pinned twice")

    @property
    def graph(self):
        return self.energy.graph

    @property
    def value_dim(self) -> int:
        return self.target.value_dim

    @property
    def free_ids(self) -> np.ndarray:
        mask = np.ones(self.graph.n_edges, dtype=bool)
        mask[self.pinned_ids] = False
        return np.flatnonzero(mask)

    def pinned_field(self) -> DiscreteField:
        vals = np.zeros((self.graph.n_edges, self.value_dim))
        vals[self.pinned_ids] = self.pinned_values
        return DiscreteField(self.graph, vals, epsilon=self.energy.epsilon)

    def reduced_target(self) -> np.ndarray:
        """``m - DIVE(pinned part)``, the demand the free edges must carry."""
        return self.target.values - dive(self.pinned_field()).values

    def assemble(self, x_free: np.ndarray) -> DiscreteField:
        vals = np.zeros((self.graph.n_edges, self.value_dim))
        vals[self.pinned_ids] = self.pinned_values
        vals[self.free_ids] = x_free
        return DiscreteField(self.graph, vals, epsilon=self.energy.epsilon)

    def constrained_vertices(self) -> np.ndarray:
        e = self.graph.edges[self.free_ids]
        mask = np.zeros(self.graph.n_vertices, dtype=bool)
        mask[e[:, 0]] = True
        mask[e[:, 1]] = True
        return mask

    def check_feasible(self) -> None:
        """Raise :class:`Infeasible` when some free component cannot balance its demand."""
        mp = self.reduced_target()
        tv = float(np.linalg.norm(mp, axis=1).sum())
        tol = FEAS_TOL * max(tv, 1.0)
        cons = self.constrained_vertices()
        stray = np.linalg.norm(mp[~cons], axis=1)
        if np.any(stray > tol):
            raise Infeasible("nonzero demand at a vertex without free edges")
        labels = self.free_components()
        sums = np.zeros((labels.max() + 1 if len(labels) else 0, self.value_dim))
        np.add.at(sums, labels[cons], mp[cons])
        if np.any(np.abs(sums) > tol):
            raise Infeasible("a connected component of free edges has unbalanced demand")

    def free_components(self) -> np.ndarray:
        g = self.graph
        e = g.edges[self.free_ids]
        n = g.n_vertices
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
        return labels

    def edge_weights(self) -> np.ndarray:
        return self.energy.clip_weights(self.region)

    def objective(self, J: DiscreteField) -> float:
        return self.energy(J, self.region)


@dataclass
class FlowSolution:
    J: DiscreteField
    objective: float
    status: str
    solver_log: dict = field(default_factory=dict)

    def divergence_residual(self, problem: FlowProblem) -> float:
        """TV of ``DIVE J - m`` over vertices touching free edges."""
        r = dive(self.J).values - problem.target.values
        return float(np.linalg.norm(r[problem.constrained_vertices()], axis=1).sum())

    def to_dict(self) -> dict:
        return {"objective": self.objective, "status": self.status, "log": self.solver_log,
                "edges": self.J.graph.edges.tolist(), "values": self.J.values.tolist()}


# ---------------------------------------------------------------------------
# convex engine
# ---------------------------------------------------------------------------

def _pl_data(p: FlowProblem):
    """Per-segment widths and slopes for the arc-split LP of the free edges."""
    table = p.energy.table
    bps, slopes = table.pl_segments(p.energy.scale)
    widths = np.diff(np.concatenate([[0.0], bps, [np.inf]]))
    return widths, slopes


def solve_convex(p: FlowProblem) -> FlowSolution:
    fam = p.energy.costs
    if not fam.convex:
        raise ValueError(f"solve_convex needs a convex family, got {fam.kind}")
    p.check_feasible()
    if p.value_dim == 1 and fam.kind in ("weighted_abs", "piecewise_linear_convex"):
        return _solve_lp(p)
    return _solve_conic(p)


def _solve_lp(p: FlowProblem) -> FlowSolution:
    g = p.graph
    free = p.free_ids
    nf = len(free)
    if nf == 0:
        J = p.assemble(np.zeros((0, 1)))
        return FlowSolution(J, p.objective(J), "optimal", {"engine": "lp", "variables": 0, "duality_gap": 0.0})
    widths, slopes = _pl_data(p)
    K = len(slopes)
    coef = p.energy.table.alpha[free] * p.edge_weights()[free]
    # variable layout: [p_{e,k} for e, k] then [q_{e,k} for e, k]
    cost_pk = (coef[:, None] * slopes[None, :]).ravel()
    c = np.concatenate([cost_pk, cost_pk])
    ub = np.tile(widths, nf)
    ub = np.concatenate([ub, ub])
    cons = np.flatnonzero(p.constrained_vertices())
    row_of = -np.ones(g.n_vertices, dtype=np.int64)
    row_of[cons] = np.arange(len(cons))
    e = g.edges[free]
    rows, cols, vals = [], [], []
    for k in range(K):
        idx = np.arange(nf) * K + k
        for end, sgn in ((0, 1.0), (1, -1.0)):
            r = row_of[e[:, end]]
            rows += [r, r]
            cols += [idx, nf * K + idx]
            vals += [np.full(nf, sgn), np.full(nf, -sgn)]
    A = csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(len(cons), 2 * nf * K))
    b = p.reduced_target()[cons, 0]
    bounds = np.stack([np.zeros_like(ub), np.where(np.isfinite(ub), ub, np.nan)], axis=1)
    bounds = [(0.0, None if np.isnan(hi) else hi) for hi in bounds[:, 1]]
    res = linprog(c, A_eq=A, b_eq=b, bounds=bounds, method="highs-ds")
    if res.status == 2:
        raise Infeasible(res.message)
    if res.status != 0:
        raise LPInfeasible(f"LP solver failed: {res.message}")
    x = res.x[: nf * K].reshape(nf, K).sum(axis=1) - res.x[nf * K:].reshape(nf, K).sum(axis=1)
    dual = float(b @ res.eqlin.marginals)
    fin = np.isfinite(ub)
    dual += float(ub[fin] @ res.upper.marginals[fin])
    J = p.assemble(x[:, None])
    obj = p.objective(J)
    log = {"engine": "lp", "variables": int(len(c)), "rows": int(len(cons)), "lp_value": float(res.fun),
           "dual_value": dual, "duality_gap": abs(float(res.fun) - dual), "iterations": int(res.nit)}
    return FlowSolution(J, obj, "optimal", log)


def _solve_conic(p: FlowProblem) -> FlowSolution:
    import cvxpy as cp

    g = p.graph
    free = p.free_ids
    nf, n = len(free), p.value_dim
    if nf == 0:
        J = p.assemble(np.zeros((0, n)))
        return FlowSolution(J, p.objective(J), "optimal", {"engine": "conic", "variables": 0})
    fam = p.energy.costs
    s = p.energy.scale
    coef = p.energy.table.alpha[free] * p.edge_weights()[free]
    X = cp.Variable((nf, n))
    t = cp.Variable(nf, nonneg=True)
    cons_mask = p.constrained_vertices()
    B = g.incidence[:, free][cons_mask]
    constraints = [B @ X == p.reduced_target()[cons_mask], cp.norm(X, 2, axis=1) <= t]
    if fam.kind == "weighted_abs":
        obj = coef @ t
    elif fam.kind == "piecewise_linear_convex":
        bps, slopes = p.energy.table.pl_segments(s)
        # convex PL as a max of affine pieces: g(r) = max_k (slope_k r + off_k)
        offs = np.concatenate([[0.0], np.cumsum((slopes[:-1] - slopes[1:]) * bps)])
        u = cp.Variable(nf)
        constraints += [u >= slopes[k] * t + offs[k] for k in range(len(slopes))]
        obj = coef @ u
    else:
        beta, delta = fam.params["beta"], fam.params["delta"]
        hub = cp.huber(t / s, delta) * (s / (2 * delta))
        obj = coef @ t + beta * (coef @ hub)
    prob = cp.Problem(cp.Minimize(obj), constraints)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise Infeasible(f"conic solver status {prob.status}")
    J = p.assemble(np.asarray(X.value))
    return FlowSolution(J, p.objective(J), "optimal",
                        {"engine": "conic", "variables": int(nf * n), "solver_value": float(prob.value),
                         "solver_status": prob.status})


def solve_convex_oracle(p: FlowProblem) -> float:
    """Optimal value from the dense simplex on an unreduced formulation.

    Every edge gets split variables, pinned edges are fixed through
    equality rows, and divergence rows are written for every vertex touching
    a free edge. Scalar piecewise-linear families only.
    """
    fam = p.energy.costs
    if p.value_dim != 1 or fam.kind not in ("weighted_abs", "piecewise_linear_convex"):
        raise ValueError("oracle handles scalar piecewise-linear costs only")
    g = p.graph
    m = g.n_edges
    bps, slopes = p.energy.table.pl_segments(p.energy.scale)
    widths = np.diff(np.concatenate([[0.0], bps, [np.inf]]))
    K = len(slopes)
    w = p.energy.clip_weights(p.region)
    cost = np.zeros(2 * m * K)
    ub = np.zeros(2 * m * K)
    for e in range(m):
        for k in range(K):
            for side in range(2):
                v = (2 * e + side) * K + k
                cost[v] = p.energy.table.alpha[e] * w[e] * slopes[k]
                ub[v] = widths[k]
    rows, rhs = [], []
    cons = np.flatnonzero(p.constrained_vertices())
    for x in cons:
        row = np.zeros(2 * m * K)
        for y, e in g.adjacency[x]:
            sgn = 1.0 if g.edges[e, 0] == x else -1.0
            row[(2 * e) * K:(2 * e) * K + K] += sgn
            row[(2 * e + 1) * K:(2 * e + 1) * K + K] -= sgn
        rows.append(row)
        rhs.append(p.target.values[x, 0])
    for e, val in zip(p.pinned_ids, p.pinned_values[:, 0]):
        row = np.zeros(2 * m * K)
        row[(2 * e) * K:(2 * e) * K + K] = 1.0
        row[(2 * e + 1) * K:(2 * e + 1) * K + K] = -1.0
        rows.append(row)
        rhs.append(val)
    # pinned edges carry their value with one split variable; keep the other at 0
    res = simplex_solve(cost, np.array(rows), np.array(rhs), ub)
    return res.fun


# ---------------------------------------------------------------------------
# cycle-space parametrisation
# ---------------------------------------------------------------------------

@dataclass
class CycleSpace:
    """Feasible set ``x = x0 + sum_f theta_f z_f`` of the free edges.

    ``x0`` solves the reduced divergence system on a spanning forest and
    ``z_f`` is the fundamental cycle of the non-tree free edge ``f`` (with
    coefficient +1 on ``f`` itself), given as (local edge indices, signs).
    """

    free: np.ndarray
    tree_local: np.ndarray
    nontree_local: np.ndarray
    x0: np.ndarray
    cycles: list

    @property
    def k(self) -> int:
        return len(self.cycles)

    def dense_matrix(self) -> np.ndarray:
        Z = np.zeros((len(self.free), self.k))
        for c, (idx, sg) in enumerate(self.cycles):
            Z[idx, c] = sg
        return Z

    def reconstruct(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, float).reshape(self.k, -1)
        x = self.x0.copy()
        for c, (idx, sg) in enumerate(self.cycles):
            x[idx] += sg[:, None] * theta[c][None, :]
        return x

    def coordinates(self, x: np.ndarray) -> np.ndarray:
        """Cycle coordinates of a feasible ``x`` (its values on the non-tree edges)."""
        return np.asarray(x)[self.nontree_local]


def cycle_space(p: FlowProblem) -> CycleSpace:
    p.check_feasible()
    g = p.graph
    free = p.free_ids
    n = p.value_dim
    e = g.edges[free]
    adj = [[] for _ in range(g.n_vertices)]
    for loc, (u, v) in enumerate(e):
        adj[u].append((int(v), loc))
        adj[v].append((int(u), loc))
    for lst in adj:
        lst.sort()
    parent = -np.ones(g.n_vertices, dtype=np.int64)
    parent_edge = -np.ones(g.n_vertices, dtype=np.int64)
    depth = np.zeros(g.n_vertices, dtype=np.int64)
    seen = np.zeros(g.n_vertices, dtype=bool)
    order = []
    in_tree = np.zeros(len(free), dtype=bool)
    for root in range(g.n_vertices):
        if seen[root] or not adj[root]:
            continue
        seen[root] = True
        queue = [root]
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            order.append(u)
            for v, loc in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    parent[v] = u
                    parent_edge[v] = loc
                    depth[v] = depth[u] + 1
                    in_tree[loc] = True
                    queue.append(v)
    mp = p.reduced_target()
    x0 = np.zeros((len(free), n))
    excess = mp.copy()
    for v in reversed(order):
        if parent[v] < 0:
            continue
        loc = parent_edge[v]
        # outflow from v along the tree edge to its parent equals its remaining demand
        sgn = 1.0 if e[loc, 0] == v else -1.0
        x0[loc] = sgn * excess[v]
        excess[parent[v]] += excess[v]
        excess[v] = 0.0
    cycles = []
    nontree = np.flatnonzero(~in_tree)
    for loc in nontree:
        u, v = int(e[loc, 0]), int(e[loc, 1])
        idx = [loc]
        sg = [1.0]
        # close u -> v with the tree path v -> ... -> lca -> ... -> u
        a, b = v, u
        up_a, up_b = [], []
        while a != b:
            if depth[a] >= depth[b]:
                up_a.append(a)
                a = parent[a]
            else:
                up_b.append(b)
                b = parent[b]
        for w in up_a:  # traverse w -> parent(w)
            le = parent_edge[w]
            idx.append(le)
            sg.append(1.0 if e[le, 0] == w else -1.0)
        for w in up_b:  # traverse parent(w) -> w
            le = parent_edge[w]
            idx.append(le)
            sg.append(-1.0 if e[le, 0] == w else 1.0)
        cycles.append((np.asarray(idx, dtype=np.int64), np.asarray(sg)))
    return CycleSpace(free, np.flatnonzero(in_tree), nontree, x0, cycles)


# ---------------------------------------------------------------------------
# nonconvex engine
# ---------------------------------------------------------------------------

class _EdgeCosts:
    """Vectorised cost of the free edges: ``w_e s phi_e(|x_e| / s)``."""

    def __init__(self, p: FlowProblem):
        self.table: CostTable = p.energy.table
        self.fam: EdgeCostFamily = p.energy.costs
        self.scale = p.energy.scale
        free = p.free_ids
        self.alpha = self.table.alpha[free]
        self.w = p.edge_weights()[free]
        prm = self.fam.params
        s = self.scale
        if self.fam.kind == "piecewise_linear_convex":
            self.kinks = [np.full(len(free), s * b) for b in prm["breakpoints"]]
        elif self.fam.kind == "huberized":
            self.kinks = [np.full(len(free), s * prm["delta"])]
        elif self.fam.kind == "nonconvex_capped":
            self.kinks = [s * prm["beta"] / (self.alpha - prm["gamma"])]
        else:
            self.kinks = []
        self.smooth = self.fam.kind == "huberized"

    def cost(self, norms: np.ndarray, idx=None) -> np.ndarray:
        a = self.alpha if idx is None else self.alpha[idx]
        w = self.w if idx is None else self.w[idx]
        s = self.scale
        return w * s * self.table.phi(norms / s, a)

    def total(self, x: np.ndarray) -> float:
        return float(self.cost(np.linalg.norm(x, axis=1)).sum())


def _line_search(ec: _EdgeCosts, x: np.ndarray, idx: np.ndarray, sg: np.ndarray, comp: int):
    """Exact minimiser of ``t -> sum_e cost_e(x_e + t sg_e u_comp)`` over kink candidates.

    Returns ``(t, decrease)``. For smooth or vector-valued pieces a
    golden-section refinement runs between the neighbours of the best kink.
    """
    xe = x[idx]
    base_norm = np.linalg.norm(xe, axis=1)
    base = ec.cost(base_norm, idx)
    xc = xe[:, comp]
    cands = [-xc * sg]
    for kink in ec.kinks:
        kk = kink[idx]
        if xe.shape[1] == 1:
            cands += [(kk - xc) * sg, (-kk - xc) * sg]
        else:
            other = np.sqrt(np.maximum(base_norm ** 2 - xc ** 2, 0.0))
            r = np.sqrt(np.maximum(kk ** 2 - other ** 2, 0.0))
            cands += [(r - xc) * sg, (-r - xc) * sg]
    t = np.unique(np.concatenate(cands + [np.zeros(1)]))

    def h(tt):
        tt = np.atleast_1d(tt)
        new = xe[None, :, :].repeat(len(tt), axis=0)
        new[:, :, comp] += tt[:, None] * sg[None, :]
        return (ec.cost(np.linalg.norm(new, axis=2), idx) - base).sum(axis=1)

    vals = h(t)
    b = int(np.argmin(vals))
    best_t, best_v = t[b], vals[b]
    if ec.smooth or xe.shape[1] > 1:
        lo = t[b - 1] if b > 0 else t[b] - 1.0
        hi = t[b + 1] if b + 1 < len(t) else t[b] + 1.0
        for a0, b0 in ((lo, best_t), (best_t, hi)):
            tt, vv = _golden(lambda s_: float(h(s_)[0]), a0, b0)
            if vv < best_v:
                best_t, best_v = tt, vv
    return best_t, -best_v


def _golden(f, a: float, b: float, iters: int = 60):
    gr = (np.sqrt(5) - 1) / 2
    c, d = b - gr * (b - a), a + gr * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _descend(ec: _EdgeCosts, cs: CycleSpace, x: np.ndarray, budget: int, pairwise: bool) -> tuple[np.ndarray, int]:
    n = x.shape[1]
    sweeps = 0
    moves = [(idx, sg) for idx, sg in cs.cycles]
    if pairwise and 1 < cs.k <= 30:
        for (i1, s1), (i2, s2) in itertools.combinations(cs.cycles, 2):
            for sign in (1.0, -1.0):
                merged = {}
                for i, s_ in zip(i1, s1):
                    merged[int(i)] = merged.get(int(i), 0.0) + s_
                for i, s_ in zip(i2, s2):
                    merged[int(i)] = merged.get(int(i), 0.0) + sign * s_
                keys = [k for k, v in merged.items() if v != 0]
                moves.append((np.asarray(keys, dtype=np.int64), np.asarray([merged[k] for k in keys])))
    while sweeps < budget:
        sweeps += 1
        improved = False
        for idx, sg in moves:
            for comp in range(n):
                t, dec = _line_search(ec, x, idx, sg, comp)
                if dec > 1e-13 * max(1.0, abs(t)) and t != 0:
                    x[idx, comp] += t * sg
                    improved = True
        if not improved:
            break
    return x, sweeps


def solve_nonconvex(p: FlowProblem, restarts: int = 4, budget: int = 200, seed: int = 0) -> FlowSolution:
    """Heuristic minimiser that keeps the divergence constraint exactly.

    Starts from the optimum of the convex relaxation, from the spanning-tree
    solution, and from seeded random cycle perturbations of the incumbent.
    """
    cs = cycle_space(p)
    ec = _EdgeCosts(p)
    n = p.value_dim
    rng = np.random.default_rng(seed)
    starts = []
    relax = p.energy.costs.relaxation()
    relax_energy = p.energy.with_costs(relax)
    rp = FlowProblem(relax_energy, p.target, p.region, p.pinned_ids, p.pinned_values)
    start_obj = None
    try:
        rsol = solve_convex(rp)
        x_relax = rsol.J.values[cs.free]
        starts.append(("relaxation", x_relax))
        start_obj = ec.total(x_relax)
    except Exception:  # the relaxation is a seed only; fall back to the tree solution
        pass
    starts.append(("tree", cs.x0.copy()))
    best_x, best_v, log = None, np.inf, []
    scale = max(1.0, float(np.abs(p.reduced_target()).sum()) / 2)
    for r in range(restarts + len(starts)):
        if r < len(starts):
            name, x = starts[r]
            x = x.copy()
        else:
            name = f"perturb{r - len(starts)}"
            theta = rng.normal(scale=scale, size=(cs.k, n))
            x = best_x.copy()
            for c, (idx, sg) in enumerate(cs.cycles):
                x[idx] += sg[:, None] * theta[c][None, :]
        x, sweeps = _descend(ec, cs, x, budget, pairwise=True)
        v = ec.total(x)
        log.append({"start": name, "value": v, "sweeps": sweeps})
        if v < best_v - 1e-14:
            best_x, best_v = x, v
    J = p.assemble(best_x)
    obj = p.objective(J)
    return FlowSolution(J, obj, "heuristic", {"engine": "cycle_descent", "cycles": cs.k, "runs": log,
                                              "relaxation_start_value": start_obj})


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

def brute_force(p: FlowProblem, h: float = 1.0, R: float | None = None, max_vars: int = 6,
                chunk: int = 200_000) -> FlowSolution:
    """Exhaustive grid search over cycle coordinates in ``[-R, R]`` at step ``h``.

    The default radius is half the total demand of the reduced problem, which
    contains an optimum of every scalar problem whose costs grow with ``|x|``
    (conformal cycles can be cancelled). With integer data and piecewise-linear
    or capped costs with integer kinks, ``h = 1`` finds the exact optimum.
    """
    cs = cycle_space(p)
    ec = _EdgeCosts(p)
    n = p.value_dim
    kv = cs.k * n
    if kv > max_vars:
        raise TooManyFreeVariables(f"{kv} cycle coordinates exceed the oracle limit of {max_vars}")
    if kv == 0:
        J = p.assemble(cs.x0)
        return FlowSolution(J, p.objective(J), "oracle", {"engine": "brute_force", "grid_points": 1})
    if R is None:
        R = max(float(np.abs(p.reduced_target()).sum()) / 2, h)
    steps = int(np.floor(R / h + 1e-9))
    axis = h * np.arange(-steps, steps + 1)
    Z = cs.dense_matrix()
    best_v, best_theta = np.inf, None
    total = len(axis) ** kv
    grid_iter = itertools.product(axis, repeat=kv)
    done = 0
    while done < total:
        block = np.array(list(itertools.islice(grid_iter, chunk)))
        done += len(block)
        theta = block.reshape(len(block), cs.k, n)
        x = cs.x0[None, :, :] + np.einsum("fk,bkn->bfn", Z, theta)
        vals = ec.cost(np.linalg.norm(x, axis=2)).sum(axis=1)
        b = int(np.argmin(vals))
        if vals[b] < best_v - 1e-13:
            best_v, best_theta = float(vals[b]), theta[b]
    x = cs.reconstruct(best_theta)
    J = p.assemble(x)
    return FlowSolution(J, p.objective(J), "oracle",
                        {"engine": "brute_force", "grid_points": int(total), "h": h, "R": R,
                         "error_bound": ec.fam.lipschitz_L * h * kv * float(ec.w.max(initial=0.0))})
