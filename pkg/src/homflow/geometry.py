"""Embedded graphs in R^d: generation, certification, restriction and rescaling.

Vertices are stored as an ``(n, d)`` float array and every undirected edge is
stored once as ``(u, v)`` with ``u < v``; the reversed orientation is implied.
Generated graphs carry an integer cell label per vertex so that per-edge
randomness can be keyed on lattice data (exact under integer shifts).
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import Delaunay, cKDTree

from .errors import Disconnected, EmptyWindow, UnsupportedDimension

GRAPH_KINDS = ("lattice_zd", "jittered_lattice", "voronoi_points")
_VORONOI_PAD = 2


# ---------------------------------------------------------------------------
# boxes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo, hi)``.

    Line measure is taken on the half-open box so that boxes tiling a region
    split every edge exactly; distances and containment tests use the closure.
    """

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise ValueError("lo and hi must have the same length")
        if any(h < l for l, h in zip(lo, hi)):
            raise ValueError(f"empty box {lo} {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, side=1.0, dim=2, corner=None):
        corner = np.zeros(dim) if corner is None else np.asarray(corner, float)
        return cls(tuple(corner), tuple(corner + side))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_arr(self) -> np.ndarray:
        return np.asarray(self.lo)

    @property
    def hi_arr(self) -> np.ndarray:
        return np.asarray(self.hi)

    @property
    def sides(self) -> np.ndarray:
        return self.hi_arr - self.lo_arr

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo_arr + self.hi_arr)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.sides))

    def scaled(self, s: float) -> "Box":
        return Box(tuple(self.lo_arr * s), tuple(self.hi_arr * s))

    def shifted(self, z) -> "Box":
        z = np.asarray(z, float)
        return Box(tuple(self.lo_arr + z), tuple(self.hi_arr + z))

    def enlarged(self, r: float) -> "Box":
        return Box(tuple(self.lo_arr - r), tuple(self.hi_arr + r))

    def concentric(self, factor: float) -> "Box":
        half = 0.5 * factor * self.sides
        return Box(tuple(self.center - half), tuple(self.center + half))

    def _tol(self) -> float:
        return 1e-12 * max(1.0, float(np.max(np.abs(self.lo_arr))), float(np.max(np.abs(self.hi_arr))))

    def contains(self, pts, closed: bool = True) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        t = self._tol()
        if closed:
            return np.all((pts >= self.lo_arr - t) & (pts <= self.hi_arr + t), axis=1)
        return np.all((pts > self.lo_arr) & (pts < self.hi_arr), axis=1)

    def dist_to_complement(self, pts) -> np.ndarray:
        """Distance from each point to ``R^d \\ box`` (0 for points outside)."""
        pts = np.atleast_2d(np.asarray(pts, float))
        inner = np.minimum(pts - self.lo_arr, self.hi_arr - pts).min(axis=1)
        return np.maximum(inner, 0.0)

    def segment_dist_to_complement(self, a, b) -> np.ndarray:
        # distance to the complement is concave along a segment: min at an end
        return np.minimum(self.dist_to_complement(a), self.dist_to_complement(b))

    def clip_params(self, a, b) -> tuple[np.ndarray, np.ndarray]:
        """Parameter interval ``[t0, t1]`` of each segment inside the half-open box.

        Empty intersections give ``t1 <= t0``.
        """
        a = np.atleast_2d(np.asarray(a, float))
        b = np.atleast_2d(np.asarray(b, float))
        d = b - a
        seg_len = np.linalg.norm(d, axis=1)
        t0 = np.zeros(len(a))
        t1 = np.ones(len(a))
        tol = self._tol()
        for k in range(self.dim):
            lo, hi = self.lo[k], self.hi[k]
            dk = d[:, k]
            flat = np.abs(dk) <= 1e-15 * np.maximum(seg_len, 1.0)
            ak = a[:, k]
            # segments parallel to a face: half-open membership test
            inside = (ak >= lo - tol) & (ak < hi - tol)
            t1 = np.where(flat & ~inside, -1.0, t1)
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (lo - ak) / dk
                tb = (hi - ak) / dk
            tmin = np.where(flat, -np.inf, np.minimum(ta, tb))
            tmax = np.where(flat, np.inf, np.maximum(ta, tb))
            t0 = np.maximum(t0, tmin)
            t1 = np.minimum(t1, tmax)
        return t0, t1

    def clip_lengths(self, a, b) -> np.ndarray:
        """H^1 measure of ``[a_k, b_k]`` intersected with the half-open box."""
        a = np.atleast_2d(np.asarray(a, float))
        b = np.atleast_2d(np.asarray(b, float))
        t0, t1 = self.clip_params(a, b)
        out = np.maximum(t1 - t0, 0.0) * np.linalg.norm(b - a, axis=1)
        out[out < 1e-14] = 0.0
        return out

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


def region_clip_lengths(region, a, b) -> np.ndarray:
    """Clipped segment lengths for a box, a list of disjoint boxes, or ``None`` (all space)."""
    a = np.atleast_2d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    if region is None:
        return np.linalg.norm(b - a, axis=1)
    if isinstance(region, Box):
        return region.clip_lengths(a, b)
    out = np.zeros(len(a))
    for box in region:
        out += box.clip_lengths(a, b)
    return out


def region_dist_to_complement(region, a, b) -> np.ndarray:
    if region is None:
        return np.full(len(np.atleast_2d(a)), np.inf)
    if isinstance(region, Box):
        return region.segment_dist_to_complement(a, b)
    raise TypeError("distance to complement is only defined for a single box")


# ---------------------------------------------------------------------------
# graph containers
# ---------------------------------------------------------------------------

def _canonical_edges(edges, n: int) -> np.ndarray:
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if np.any(e[:, 0] == e[:, 1]):
        raise ValueError("self-loops are not allowed")
    if e.min() < 0 or e.max() >= n:
        raise ValueError("edge endpoint out of range")
    e = np.sort(e, axis=1)
    e = np.unique(e, axis=0)
    return e


@dataclass(frozen=True, eq=False)
class EmbeddedGraph:
    """Undirected graph with vertices in R^d; edges stored once, ``u < v``."""

    points: np.ndarray
    edges: np.ndarray
    cells: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValueError("points must have shape (n, d)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("vertex coordinates must be finite")
        edges = _canonical_edges(self.edges, len(pts))
        pts.setflags(write=False)
        edges.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "edges", edges)
        if self.cells is not None:
            cells = np.array(self.cells, dtype=np.int64).reshape(len(pts), -1)
            cells.setflags(write=False)
            object.__setattr__(self, "cells", cells)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_directed_edges(self) -> int:
        return 2 * len(self.edges)

    @cached_property
    def lengths(self) -> np.ndarray:
        p = self.points
        return np.linalg.norm(p[self.edges[:, 1]] - p[self.edges[:, 0]], axis=1)

    @cached_property
    def tangents(self) -> np.ndarray:
        p = self.points
        d = p[self.edges[:, 1]] - p[self.edges[:, 0]]
        return d / self.lengths[:, None]

    @cached_property
    def _edge_lookup(self) -> dict:
        return {(int(u), int(v)): i for i, (u, v) in enumerate(self.edges)}

    @cached_property
    def adjacency(self) -> list:
        """Per-vertex sorted list of ``(neighbor, edge_id)``."""
        adj = [[] for _ in range(self.n_vertices)]
        for i, (u, v) in enumerate(self.edges):
            adj[u].append((int(v), i))
            adj[v].append((int(u), i))
        for lst in adj:
            lst.sort()
        return adj

    @cached_property
    def incidence(self) -> csr_matrix:
        """Signed vertex-edge incidence: ``DIVE J = incidence @ J`` (canonical values)."""
        m = self.n_edges
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([np.arange(m), np.arange(m)])
        vals = np.concatenate([np.ones(m), -np.ones(m)])
        return csr_matrix((vals, (rows, cols)), shape=(self.n_vertices, m))

    def neighbors(self, x: int) -> list:
        return [y for y, _ in self.adjacency[x]]

    def edge_id(self, x: int, y: int) -> tuple[int, int]:
        """Return ``(edge index, sign)`` where sign is +1 for the stored orientation."""
        if x < y:
            return self._edge_lookup[(x, y)], 1
        return self._edge_lookup[(y, x)], -1

    def has_edge(self, x: int, y: int) -> bool:
        key = (x, y) if x < y else (y, x)
        return key in self._edge_lookup

    def directed_edges(self) -> np.ndarray:
        return np.concatenate([self.edges, self.edges[:, ::-1]])

    def subgraph(self, keep) -> tuple["EmbeddedGraph", np.ndarray, np.ndarray]:
        """Induced subgraph on a vertex mask; returns (graph, vertex_map, edge_map)."""
        keep = np.asarray(keep, dtype=bool)
        vmap = np.flatnonzero(keep)
        new_index = -np.ones(self.n_vertices, dtype=np.int64)
        new_index[vmap] = np.arange(len(vmap))
        emask = keep[self.edges[:, 0]] & keep[self.edges[:, 1]]
        emap = np.flatnonzero(emask)
        new_edges = new_index[self.edges[emap]]
        cells = None if self.cells is None else self.cells[vmap]
        g = EmbeddedGraph(self.points[vmap], new_edges, cells)
        # new edges stay sorted since the index map is monotone
        return g, vmap, emap

    def weighted_csr(self) -> csr_matrix:
        n = self.n_vertices
        e = self.edges
        w = self.lengths
        return csr_matrix(
            (np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
            shape=(n, n),
        )

    def nearest_vertex(self, point) -> tuple[int, float]:
        """Nearest vertex to a point, ties broken by lowest index."""
        d = np.linalg.norm(self.points - np.asarray(point, float), axis=1)
        best = d.min()
        idx = int(np.flatnonzero(d <= best * (1 + 1e-12) + 1e-15)[0])
        return idx, float(d[idx])

    @cached_property
    def kdtree(self) -> cKDTree:
        return cKDTree(self.points)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "vertices": self.points.tolist(),
            "edges": self.edges.tolist(),
            **({"cells": self.cells.tolist()} if self.cells is not None else {}),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EmbeddedGraph":
        pts = np.asarray(data["vertices"], float).reshape(-1, int(data["dim"]))
        return cls(pts, np.asarray(data["edges"], dtype=np.int64).reshape(-1, 2), data.get("cells"))

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.points).tobytes())
        h.update(np.ascontiguousarray(self.edges).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class GraphSpec:
    kind: str = "lattice_zd"
    dim: int = 2
    jitter_amplitude: float = 0.0
    seed: int = 0
    period_hint: int = 4
    origin: tuple | None = None

    def __post_init__(self):
        if self.kind not in GRAPH_KINDS:
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if self.dim < 1:
            raise UnsupportedDimension("dim must be >= 1")
        if not 0.0 <= self.jitter_amplitude < 0.5:
            raise ValueError("jitter_amplitude must lie in [0, 0.5)")
        origin = (0,) * self.dim if self.origin is None else tuple(int(v) for v in self.origin)
        if len(origin) != self.dim:
            raise ValueError("origin has the wrong dimension")
        object.__setattr__(self, "origin", origin)

    def window_cells(self) -> np.ndarray:
        if self.period_hint < 1:
            raise EmptyWindow("period_hint must be positive")
        grid = np.indices((self.period_hint,) * self.dim).reshape(self.dim, -1).T
        return grid + np.asarray(self.origin, dtype=np.int64)

    def covering(self, box: Box, margin: int = 2) -> "GraphSpec":
        """Same random environment, window enlarged to cover ``box`` plus a margin."""
        lo = np.floor(box.lo_arr).astype(int) - margin
        hi = np.ceil(box.hi_arr).astype(int) + margin
        n = int(np.max(hi - lo)) + 1
        return GraphSpec(self.kind, self.dim, self.jitter_amplitude, self.seed, n, tuple(lo))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "jitter_amplitude": self.jitter_amplitude,
            "seed": self.seed,
            "period_hint": self.period_hint,
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GraphSpec":
        origin = data.get("origin")
        return cls(
            kind=data.get("kind", "lattice_zd"),
            dim=int(data.get("dim", 2)),
            jitter_amplitude=float(data.get("jitter_amplitude", 0.0)),
            seed=int(data.get("seed", 0)),
            period_hint=int(data.get("period_hint", 4)),
            origin=None if origin is None else tuple(origin),
        )


# ---------------------------------------------------------------------------
# seeded per-cell randomness
# ---------------------------------------------------------------------------

def cell_uniforms(seed: int, keys, n: int, stream: int = 0) -> np.ndarray:
    """Uniform [0, 1) draws that depend only on ``(seed, stream, key)``.

    ``keys`` is an integer array of shape ``(k, p)``; each row gets its own
    ``SeedSequence`` so translated windows reproduce translated draws.
    """
    keys = np.atleast_2d(np.asarray(keys, dtype=np.int64))
    out = np.empty((len(keys), n))
    base = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF, int(stream)]
    offset = 1 << 31
    for i, row in enumerate(keys):
        ss = np.random.SeedSequence(base + [int(v) + offset for v in row])
        words = ss.generate_state(n, dtype=np.uint64)
        out[i] = (words >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
    return out


def _jittered_points(spec: GraphSpec, cells: np.ndarray) -> np.ndarray:
    pts = cells.astype(float)
    if spec.jitter_amplitude > 0:
        u = cell_uniforms(spec.seed, cells, spec.dim, stream=1)
        pts = pts + spec.jitter_amplitude * (2.0 * u - 1.0)
    return pts


def _lattice_edges(cells: np.ndarray) -> np.ndarray:
    index = {tuple(c): i for i, c in enumerate(cells.tolist())}
    d = cells.shape[1]
    edges = []
    for i, c in enumerate(cells.tolist()):
        for k in range(d):
            nb = list(c)
            nb[k] += 1
            j = index.get(tuple(nb))
            if j is not None:
                edges.append((i, j))
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# exact incircle predicate and Delaunay adjacency
# ---------------------------------------------------------------------------

def _orient2d_exact(a, b, c) -> int:
    ax, ay = Fraction(a[0]), Fraction(a[1])
    bx, by = Fraction(b[0]), Fraction(b[1])
    cx, cy = Fraction(c[0]), Fraction(c[1])
    det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (det > 0) - (det < 0)


def incircle_exact(a, b, c, d) -> int:
    """Sign of the incircle determinant in exact rational arithmetic.

    Returns +1 if ``d`` lies strictly inside the circle through ``a, b, c``,
    -1 if strictly outside and 0 if cocircular (orientation-normalised).
    """
    o = _orient2d_exact(a, b, c)
    if o == 0:
        raise ValueError("degenerate triangle")
    dx, dy = Fraction(d[0]), Fraction(d[1])
    rows = []
    for p in (a, b, c):
        px, py = Fraction(p[0]) - dx, Fraction(p[1]) - dy
        rows.append((px, py, px * px + py * py))
    (a1, a2, a3), (b1, b2, b3), (c1, c2, c3) = rows
    det = a1 * (b2 * c3 - b3 * c2) - a2 * (b1 * c3 - b3 * c1) + a3 * (b1 * c2 - b2 * c1)
    s = (det > 0) - (det < 0)
    return s * o


def voronoi_adjacency(points: np.ndarray) -> np.ndarray:
    """Pairs of points whose Voronoi cells share an interface of positive length.

    The triangulation comes from Qhull; every interior edge is re-checked with
    the exact incircle predicate, and edges whose two adjacent triangles are
    cocircular (zero-length Voronoi interface) are dropped.
    """
    points = np.asarray(points, float)
    if points.shape[1] != 2:
        raise UnsupportedDimension("Voronoi adjacency is implemented for d = 2 only")
    if len(points) < 3:
        return np.array([[0, 1]], dtype=np.int64) if len(points) == 2 else np.zeros((0, 2), np.int64)
    tri = Delaunay(points)
    opposite: dict = {}
    for s in tri.simplices:
        s = [int(v) for v in s]
        for k in range(3):
            u, v = sorted((s[(k + 1) % 3], s[(k + 2) % 3]))
            opposite.setdefault((u, v), []).append(s[k])
    keep = []
    for (u, v), opp in opposite.items():
        if len(opp) == 2:
            a, b, c, w = points[u], points[v], points[opp[0]], points[opp[1]]
            sign = incircle_exact(a, b, c, w)
            if sign > 0:
                raise RuntimeError("triangulation is not Delaunay under the exact predicate")
            if sign == 0:
                continue
        keep.append((u, v))
    return np.asarray(sorted(keep), dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def generate(spec: GraphSpec) -> EmbeddedGraph:
    """Build the graph described by ``spec`` on its integer window."""
    cells = spec.window_cells()
    if len(cells) == 0:
        raise EmptyWindow("window contains no cells")
    if spec.kind == "lattice_zd":
        return EmbeddedGraph(cells.astype(float), _lattice_edges(cells), cells)
    if spec.kind == "jittered_lattice":
        return EmbeddedGraph(_jittered_points(spec, cells), _lattice_edges(cells), cells)
    # voronoi_points
    if spec.dim != 2:
        raise UnsupportedDimension("voronoi_points requires dim = 2")
    pad = _VORONOI_PAD
    padded = GraphSpec(spec.kind, 2, spec.jitter_amplitude, spec.seed, spec.period_hint + 2 * pad,
                       tuple(np.asarray(spec.origin) - pad))
    pcells = padded.window_cells()
    pts = _jittered_points(padded, pcells)
    edges = voronoi_adjacency(pts)
    lo = np.asarray(spec.origin)
    inside = np.all((pcells >= lo) & (pcells < lo + spec.period_hint), axis=1)
    full = EmbeddedGraph(pts, edges, pcells)
    g, _, _ = full.subgraph(inside)
    return g


# ---------------------------------------------------------------------------
# shortest paths
# ---------------------------------------------------------------------------

def shortest_path(g: EmbeddedGraph, x: int, y: int, allowed_edges=None, banned_edge: int | None = None) -> list:
    """Dijkstra on Euclidean edge lengths with lowest-index tie-breaking.

    ``allowed_edges`` optionally restricts the search to a boolean edge mask.
    """
    x, y = int(x), int(y)
    if x == y:
        return [x]
    lengths = g.lengths
    dist = {x: 0.0}
    prev: dict = {}
    heap = [(0.0, x)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == y:
            break
        for v, e in g.adjacency[u]:
            if v in done:
                continue
            if allowed_edges is not None and not allowed_edges[e]:
                continue
            if banned_edge is not None and e == banned_edge:
                continue
            nd = d + lengths[e]
            old = dist.get(v)
            if old is None or nd < old - 1e-15 * max(1.0, nd):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if y not in done:
        raise Disconnected(f"no path between vertices {x} and {y}")
    path = [y]
    while path[-1] != x:
        path.append(prev[path[-1]])
    return path[::-1]


def path_length(g: EmbeddedGraph, path: Sequence[int]) -> float:
    p = g.points[np.asarray(path)]
    if len(path) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


# ---------------------------------------------------------------------------
# certification of (G1)-(G3)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeometryCertificate:
    r1: float
    r2: float
    r3: float
    verified_box: Box
    slack: float = 0.0
    n_pairs: int = 0

    @property
    def r1_upper(self) -> float:
        """Gap radius including the grid-pitch slack."""
        return self.r1 + self.slack

    @property
    def path_bound(self) -> float:
        """Upper bound on catalogue path lengths, ``R2 (2 R1 + 1) + 1``."""
        return self.r2 * (2 * self.r1_upper + 1) + 1

    @property
    def localisation_constant(self) -> float:
        """Band width constant ``R2 (R1 + 1/2) + R1`` for localized paths."""
        return self.r2 * (self.r1_upper + 0.5) + self.r1_upper

    def to_dict(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "r3": self.r3, "slack": self.slack,
                "n_pairs": self.n_pairs, "verified_box": self.verified_box.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "GeometryCertificate":
        b = data["verified_box"]
        return cls(data["r1"], data["r2"], data["r3"], Box(tuple(b["lo"]), tuple(b["hi"])),
                   data.get("slack", 0.0), data.get("n_pairs", 0))


def _grid(box: Box, pitch: float) -> np.ndarray:
    axes = [np.linspace(l, h, max(2, int(np.ceil((h - l) / pitch)) + 1)) for l, h in zip(box.lo, box.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def certify_geometry(g: EmbeddedGraph, box: Box, samples: int | None = 200, seed: int = 0) -> GeometryCertificate:
    """Numerically certify the constants of (G1)-(G3) on ``box``.

    ``samples=None`` checks every pair of vertices inside ``box`` for the
    path-stretch constant instead of a random sample.
    """
    if g.n_vertices == 0:
        raise EmptyWindow("graph has no vertices")
    r3 = float(g.lengths.max()) if g.n_edges else 0.0

    tree = g.kdtree
    scale = r3 if r3 > 0 else max(box.diameter / 4, 1e-9)
    r = max(float(tree.query(_grid(box, scale / 4))[0].max()), 1e-9)
    # r only grows and is bounded by the true gap radius, so this terminates
    for _ in range(50):
        worst = float(tree.query(_grid(box, r / 4))[0].max())
        if worst <= r:
            break
        r = worst
    pitch = r / 4
    slack = float(pitch * np.sqrt(g.dim) / 2)

    inside = np.flatnonzero(box.contains(g.points))
    if len(inside) < 2:
        return GeometryCertificate(r, 0.0, r3, box, slack, 0)
    rng = np.random.default_rng(seed)
    if samples is None:
        sources = inside
        pairs = None
    else:
        a = rng.choice(inside, size=samples)
        b = rng.choice(inside, size=samples)
        keep = a != b
        a, b = a[keep], b[keep]
        sources = np.unique(a)
        pairs = (a, b)
    dist = dijkstra(g.weighted_csr(), directed=False, indices=sources)
    row = {int(s): i for i, s in enumerate(sources)}
    if pairs is None:
        sub = dist[:, inside]
        eu = np.linalg.norm(g.points[sources][:, None, :] - g.points[inside][None, :, :], axis=2)
        mask = sources[:, None] != inside[None, :]
        if np.any(~np.isfinite(sub[mask])):
            raise Disconnected("graph is disconnected on the verified box")
        r2 = float(np.max(np.where(mask, sub / (eu + 1.0), 0.0)))
        n_pairs = int(mask.sum())
    else:
        a, b = pairs
        pl = dist[[row[int(s)] for s in a], b]
        if np.any(~np.isfinite(pl)):
            raise Disconnected("sampled vertex pair is disconnected")
        eu = np.linalg.norm(g.points[a] - g.points[b], axis=1)
        r2 = float(np.max(pl / (eu + 1.0))) if len(a) else 0.0
        n_pairs = len(a)
    return GeometryCertificate(r, r2, r3, box, slack, n_pairs)


# ---------------------------------------------------------------------------
# localisation and rescaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RestrictedGraph:
    """The graph ``eps * X`` intersected with a closed box (or all of R^d)."""

    base: EmbeddedGraph
    epsilon: float
    domain: Box | None
    graph: EmbeddedGraph
    vertex_map: np.ndarray
    edge_map: np.ndarray

    @property
    def dim(self) -> int:
        return self.base.dim


def restrict_rescale(g: EmbeddedGraph, epsilon: float, domain: Box | None = None) -> RestrictedGraph:
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    scaled = EmbeddedGraph(g.points * epsilon, g.edges, g.cells)
    if domain is None:
        keep = np.ones(g.n_vertices, dtype=bool)
    else:
        keep = domain.contains(scaled.points, closed=True)
    sub, vmap, emap = scaled.subgraph(keep)
    return RestrictedGraph(g, float(epsilon), domain, sub, vmap, emap)


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def graph_to_json(g: EmbeddedGraph, cert: GeometryCertificate | None = None) -> str:
    data = g.to_dict()
    if cert is not None:
        data["certificate"] = cert.to_dict()
    return json.dumps(data)


def graph_from_json(text: str) -> tuple[EmbeddedGraph, GeometryCertificate | None]:
    data = json.loads(text)
    cert = data.get("certificate")
    return EmbeddedGraph.from_dict(data), (GeometryCertificate.from_dict(cert) if cert else None)


def load_graph(arg: str) -> EmbeddedGraph:
    """Resolve a ``--graph`` argument: a JSON file, inline JSON, graph or spec."""
    import os

    text = open(arg).read() if os.path.exists(arg) else arg
    data = json.loads(text)
    if "vertices" in data:
        return EmbeddedGraph.from_dict(data)
    return generate(GraphSpec.from_dict(data))


def min_pairwise_distance(points: np.ndarray) -> float:
    tree = cKDTree(points)
    d, _ = tree.query(points, k=2)
    return float(d[:, 1].min())


def iter_simple_paths(g: EmbeddedGraph, x: int, y: int) -> Iterable[list]:
    """All simple paths from ``x`` to ``y`` (exponential; tiny graphs only)."""
    stack = [(x, [x])]
    while stack:
        u, path = stack.pop()
        if u == y:
            yield path
            continue
        for v in g.neighbors(u):
            if v not in path:
                stack.append((v, path + [v]))
