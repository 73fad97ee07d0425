import json

import numpy as np
import pytest

from homflow.calculus import dive, embedded_mass
from homflow.errors import DegenerateOrthotope
from homflow.geometry import Box, GraphSpec, certify_geometry, generate, path_length, restrict_rescale
from homflow.uniform_flow import (BumpFunction, apply, apply_rescaled, build, interior_divergence, random_orthotopes,
                                  standard_test_functions, verify_boundedness, verify_convergence)


@pytest.fixture(scope="module")
def small():
    g = generate(GraphSpec("jittered_lattice", 2, 0.25, 2, 16))
    window = Box((2, 2), (13, 13))
    return build(g, certify_geometry(g, window), window)


def test_lattice_operator_is_the_edge_indicator():
    g = generate(GraphSpec("lattice_zd", 2, 0.0, 0, 8))
    window = Box((1, 1), (6, 6))
    op = build(g, certify_geometry(g, window), window)
    J = apply(op, (1.0, 0.0))
    horizontal = np.abs(g.tangents[:, 0]) > 0.5
    mid = 0.5 * (g.points[g.edges[:, 0]] + g.points[g.edges[:, 1]])
    inside = np.all((mid >= 1) & (mid <= 6), axis=1) & horizontal & (mid[:, 0] < 6)
    np.testing.assert_array_equal(J.values[inside, 0], 1.0)
    np.testing.assert_array_equal(J.values[~inside, 0], 0.0)


@pytest.mark.parametrize("kind,a", [("lattice_zd", 0.0), ("jittered_lattice", 0.3), ("voronoi_points", 0.3)])
def test_interior_divergence_is_exactly_zero(kind, a):
    g = generate(GraphSpec(kind, 2, a, 5, 14))
    window = Box((2, 2), (11, 11))
    op = build(g, certify_geometry(g, window), window)
    # integer path counts cancel exactly for the basis tensors
    for j in [(1.0, 0.0), (0.0, 1.0)]:
        assert interior_divergence(op, j) == 0.0
    assert interior_divergence(op, (0.3, -2.0)) <= 1e-13


def test_catalogue_paths_are_short(small):
    ell = small.path_bound
    assert not small.long_paths
    assert all(path_length(small.graph, p) <= ell for p in small.catalogue.values())
    data = json.loads(small.catalogue_json())
    assert len(data["paths"]) == len(small.catalogue)


def test_operator_is_linear(small):
    a, b = apply(small, (1.0, 2.0)), apply(small, (-0.5, 0.25))
    c = apply(small, (0.5, 2.25))
    np.testing.assert_allclose(a.values + b.values, c.values, atol=1e-14)
    # a matrix-valued tensor maps each species independently
    M = apply(small, [[1.0, 2.0], [-0.5, 0.25]])
    np.testing.assert_allclose(M.values, np.hstack([a.values, b.values]), atol=1e-14)


def test_avoid_direct_variant_differs_but_stays_divergence_free():
    g = generate(GraphSpec("jittered_lattice", 2, 0.3, 4, 14))
    window = Box((2, 2), (11, 11))
    cert = certify_geometry(g, window)
    a, b = build(g, cert, window), build(g, cert, window, "avoid_direct")
    assert a.fingerprint() != b.fingerprint()
    assert interior_divergence(b, (1.0, 1.0)) == 0.0


def test_rescaled_values(small):
    eps = 0.25
    rg = restrict_rescale(small.graph, eps, Box((1, 1), (2.5, 2.5)))
    J = apply_rescaled(small, (1.0, 0.0), eps, rg)
    np.testing.assert_allclose(J.values[:, 0], eps * small.counts[rg.edge_map, 0])


def test_bump_integral_against_product_formula():
    phi = BumpFunction(Box((0.0, 0.0), (2.0, 1.0)))
    # int_0^1 (4t(1-t))^2 dt = 8/15 per axis, scaled by the side lengths
    assert phi.integral() == pytest.approx((8 / 15) ** 2 * 2.0, rel=1e-12)


def test_convergence_on_lattice_is_fast(operators):
    op = operators["lattice_zd"]
    phi = standard_test_functions(2)[0]
    errs = [r["error"] for r in verify_convergence(op, (1.0, 0.0), phi, [0.25, 0.125, 0.0625, 0.03125])]
    assert errs[-1] < 0.25 * errs[0]
    assert errs[-1] < 0.01


def test_boundedness_and_degenerate_orthotope(small):
    eps = 0.25
    boxes = random_orthotopes(10, eps, Box((1.0, 1.0), (2.5, 2.5)), rng=0)
    ratio = verify_boundedness(small, (1.0, 1.0), boxes, eps)
    assert 0.5 < ratio < 4.0
    with pytest.raises(DegenerateOrthotope):
        verify_boundedness(small, (1.0, 0.0), [Box((1.0, 1.0), (1.1, 2.0))], eps)


def test_flux_through_a_cut_matches_tensor():
    # on Z^2 every vertical line between sites is crossed by exactly one unit per row
    g = generate(GraphSpec("lattice_zd", 2, 0.0, 0, 12))
    window = Box((1, 1), (10, 10))
    op = build(g, certify_geometry(g, window), window)
    J = apply(op, (1.0, 0.0))
    box = Box((3.0, 3.0), (7.0, 7.0))
    np.testing.assert_allclose(embedded_mass(J, box), [[16.0, 0.0]])
    assert dive(J).total_variation(op.interior_vertices()) == 0.0
