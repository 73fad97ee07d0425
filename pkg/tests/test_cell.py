import numpy as np
import pytest

from homflow.calculus import DiscreteField, embedded_mass
from homflow.cell import (canonical_energy, cell_value, cube_cutoff, enforce_representative, equal_mass_spread,
                          estimate_fhom, eta_window, extrapolate, fhom_properties_check, is_member,
                          make_representative_set, random_members, scaling_check)
from homflow.energy import EdgeCostFamily
from homflow.errors import EtaOutOfRange
from homflow.flow_solver import solve_convex_oracle
from homflow.geometry import Box

L1 = EdgeCostFamily("weighted_abs")
UNIT = Box((0.0, 0.0), (1.0, 1.0))


def segment_distance_to_complement(a, b, box, n=401):
    t = np.linspace(0, 1, n)[:, None]
    pts = a[None, :] + t * (b - a)[None, :]
    return box.dist_to_complement(pts).min()


def test_pinned_edges_by_enumeration(operators):
    op = operators["lattice_zd"]
    A = Box((0.0, 0.0), (4.0, 4.0))
    rs = make_representative_set(op, (1.0, 0.0), A, 0.5)
    g = rs.graph
    expect = [e for e in range(g.n_edges)
              if segment_distance_to_complement(g.points[g.edges[e, 0]], g.points[g.edges[e, 1]], A) <= 0.5]
    np.testing.assert_array_equal(rs.pinned, expect)
    # free vertices sit at base coordinates 2..6, a 5 x 5 block with 40 edges
    assert len(rs.free_edges) == 40


def test_zero_tensor_costs_nothing(operators):
    rs = make_representative_set(operators["jittered_lattice"], (0.0, 0.0), UNIT, 0.25)
    assert cell_value(rs, L1).value == 0.0


def test_lattice_cell_values_are_exact(operators):
    op = operators["lattice_zd"]
    for eps in (0.25, 0.125):
        rs = make_representative_set(op, (1.0, 1.0), UNIT, eps)
        v = cell_value(rs, L1).value
        assert v == pytest.approx(2.0, abs=1e-9)
        assert v == pytest.approx(solve_convex_oracle(rs.problem(L1)), abs=1e-9)
        # the canonical field is itself optimal on the lattice
        assert canonical_energy(rs, L1) == pytest.approx(v)


@pytest.mark.parametrize("kind", ["lattice_zd", "jittered_lattice", "voronoi_points"])
def test_members_share_mass(operators, kind):
    rng = np.random.default_rng(4)
    rs = make_representative_set(operators[kind], rng.normal(size=2), UNIT, 0.25)
    members = random_members(rs, 10, rng)
    assert all(is_member(rs, J) for J in members)
    assert equal_mass_spread(rs, members) <= 1e-10
    np.testing.assert_allclose(embedded_mass(members[0], UNIT), embedded_mass(rs.canonical, UNIT), atol=1e-10)


def test_membership_rejects_broken_pins(operators):
    rs = make_representative_set(operators["lattice_zd"], (1.0, 0.0), UNIT, 0.25)
    J = rs.canonical.copy()
    J.values[rs.pinned[0]] += 0.1
    assert not is_member(rs, J)


@pytest.mark.parametrize("kind", ["lattice_zd", "jittered_lattice"])
def test_scaling_identity(operators, kind):
    costs = EdgeCostFamily("weighted_abs", 3, {"alpha_min": 1.0, "alpha_max": 2.0})
    lhs, rhs = scaling_check(operators[kind], costs, (0.7, -0.4), UNIT, 0.25)
    assert lhs == pytest.approx(rhs, rel=1e-8)


def test_extrapolate_recovers_affine_data():
    f, a, res = extrapolate([0.5, 0.25, 0.125], [3.0 + 2 * 0.5, 3.0 + 2 * 0.25, 3.0 + 2 * 0.125])
    assert (f, a) == (pytest.approx(3.0), pytest.approx(2.0)) and res < 1e-12


def test_estimate_needs_decreasing_scales(operators):
    with pytest.raises(ValueError):
        estimate_fhom(operators["lattice_zd"], L1, (1.0, 0.0), [0.25, 0.5, 0.125])


def test_lattice_fhom_is_the_l1_norm(operators):
    op = operators["lattice_zd"]
    cache = {}

    def fhat(j):
        key = tuple(np.round(j, 12))
        if key not in cache:
            cache[key] = 0.0 if not np.any(j) else estimate_fhom(op, L1, j, [0.25, 0.125, 0.0625]).f_hom
        return cache[key]

    js = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -2.0), (-0.5, 0.25)]
    pairs = [((1.0, 0.0), (0.0, 1.0)), ((1.0, -2.0), (-0.5, 0.25))]
    report = fhom_properties_check(fhat, js, c2=1.0, lip=np.sqrt(2), tol=1e-6, pairs=pairs,
                                   one_homogeneous=True, even=True)
    assert report["passed"], report
    for j in js:
        assert fhat(np.asarray(j)) == pytest.approx(np.abs(j).sum(), abs=1e-6)


def test_cube_cutoff_levels():
    psi = cube_cutoff(UNIT, 0.1)
    np.testing.assert_allclose(psi(np.array([[0.5, 0.5], [0.5, 0.905], [0.5, 0.96], [0.5, 1.0]])),
                               [1.0, 0.9, 0.0, 0.0], atol=1e-12)


def test_enforce_leaves_members_unchanged(operators):
    rs = make_representative_set(operators["lattice_zd"], (1.0, 0.0), UNIT, 1 / 16)
    lo, hi = eta_window(rs, rs.canonical)
    res = enforce_representative(rs, rs.canonical, 0.5 * (lo + hi), L1)
    np.testing.assert_array_equal(res.J.values, rs.canonical.values)
    assert res.member and res.increase == 0.0 and res.corrector_tv == 0.0


def test_enforce_repairs_a_noisy_field(operators):
    rs = make_representative_set(operators["lattice_zd"], (1.0, 0.0), UNIT, 1 / 16)
    rng = np.random.default_rng(0)
    J = DiscreteField(rs.graph, rs.canonical.values + 0.0125 * rng.normal(size=rs.canonical.values.shape),
                      epsilon=rs.eps)
    assert not is_member(rs, J)
    lo, hi = eta_window(rs, J)
    res = enforce_representative(rs, J, 0.5 * (lo + hi), L1)
    assert res.member and is_member(rs, res.J)
    assert res.increase <= 10 * res.err["total"]
    with pytest.raises(EtaOutOfRange):
        enforce_representative(rs, J, 0.5 * lo, L1)
