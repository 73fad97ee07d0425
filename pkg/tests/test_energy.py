import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homflow.calculus import DiscreteField, unit_path_flux
from homflow.energy import EdgeCostFamily, LocalizedEnergy, eval_energy, eval_rescaled, lipschitz_gap, lower_bound
from homflow.errors import GraphMismatch, ScaleMismatch
from homflow.geometry import Box, GraphSpec, generate, restrict_rescale

FAMILIES = [
    EdgeCostFamily("weighted_abs", 1, {"alpha_min": 1.0, "alpha_max": 2.0}),
    EdgeCostFamily("piecewise_linear_convex", 2, {"alpha_min": 0.5, "alpha_max": 1.5}),
    EdgeCostFamily("huberized", 3),
    EdgeCostFamily("nonconvex_capped", 4, {"alpha_min": 1.0, "alpha_max": 2.0}),
]


def test_l1_path_energy_on_lattice():
    g = generate(GraphSpec("lattice_zd", 2, 0.0, 0, 6))
    e = LocalizedEnergy(g, EdgeCostFamily())
    path = [g.nearest_vertex(p)[0] for p in [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2)]]
    J = unit_path_flux(g, path)
    assert eval_energy(e, J) == pytest.approx(4.0)
    # two horizontal edges and half of the first vertical one lie in the box
    assert eval_energy(e, J, Box((-1, -1), (2.5, 0.5))) == pytest.approx(2.5)


def test_family_shapes():
    g = generate(GraphSpec("lattice_zd", 1, 0.0, 0, 2))
    r = np.array([0.0, 0.5, 1.0, 3.0])
    pl = EdgeCostFamily("piecewise_linear_convex").table(g)
    np.testing.assert_allclose(pl.phi(r, 1.0), [0.0, 0.5, 1.0, 5.0])
    hub = EdgeCostFamily("huberized").table(g)
    np.testing.assert_allclose(hub.phi(r, 1.0), [0.0, 0.75, 1.75, 5.75])
    cap = EdgeCostFamily("nonconvex_capped").table(g)
    np.testing.assert_allclose(cap.phi(r, 1.0), [0.0, 0.5, 0.75, 1.25])


def test_invalid_families():
    with pytest.raises(ValueError):
        EdgeCostFamily("quadratic")
    with pytest.raises(ValueError):
        EdgeCostFamily("piecewise_linear_convex", params={"slopes": [2.0, 1.0]})
    with pytest.raises(ValueError):
        EdgeCostFamily("nonconvex_capped", params={"gamma": 2.0})


def test_alphas_are_translation_covariant():
    fam = FAMILIES[0]
    a = generate(GraphSpec("jittered_lattice", 2, 0.2, 5, 6, (0, 0)))
    b = generate(GraphSpec("jittered_lattice", 2, 0.2, 5, 8, (-1, -1)))
    ka = {tuple(k): al for k, al in zip(_keys(a).tolist(), fam.alphas(a))}
    for k, al in zip(_keys(b).tolist(), fam.alphas(b)):
        if tuple(k) in ka:
            assert ka[tuple(k)] == al


def _keys(g):
    from homflow.energy import edge_keys
    return edge_keys(g)


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.kind)
def test_rescaled_equals_scaled_energy(fam):
    rng = np.random.default_rng(0)
    g = generate(GraphSpec("jittered_lattice", 2, 0.25, 1, 14))
    eps = 0.25
    A = Box((0.3, 0.4), (2.1, 2.2))
    rg = restrict_rescale(g, eps, A.enlarged(eps))
    e = LocalizedEnergy(rg, fam)
    J = DiscreteField(rg.graph, rng.normal(size=(rg.graph.n_edges, 1)) * eps, epsilon=eps)
    assert eval_rescaled(e, J, A, eps) == pytest.approx(e(J, A), rel=1e-12)
    with pytest.raises(ScaleMismatch):
        eval_rescaled(e, J, A, 0.5)


def test_graph_mismatch():
    g = generate(GraphSpec("lattice_zd", 2, 0.0, 0, 3))
    h = generate(GraphSpec("lattice_zd", 2, 0.0, 0, 3))
    with pytest.raises(GraphMismatch):
        LocalizedEnergy(g, EdgeCostFamily())(DiscreteField.zeros(h))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(0, 10_000), st.sampled_from([1.0, 0.5, 0.25]))
def test_growth_and_lipschitz_bounds(k, seed, eps):
    rng = np.random.default_rng(seed)
    g = generate(GraphSpec("jittered_lattice", 2, 0.2, seed % 7, 10))
    A = Box((1.0, 1.0), (2.0, 2.0)) if eps < 1 else Box((1.5, 1.5), (6.5, 6.5))
    rg = restrict_rescale(g, eps, A.enlarged(3 * eps))
    e = LocalizedEnergy(rg, FAMILIES[k], r_lip=1.5)
    n = rg.graph.n_edges
    J = DiscreteField(rg.graph, rng.normal(size=(n, 2)), epsilon=eps)
    Jp = DiscreteField(rg.graph, J.values + rng.normal(size=(n, 2)) * rng.random(), epsilon=eps)
    assert lower_bound(e, J, A) <= e(J, A) + 1e-12
    gap, bound = lipschitz_gap(e, J, Jp, A)
    assert gap <= bound + 1e-12
