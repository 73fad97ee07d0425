"""Acceptance criteria, one test each, at their stated tolerances.

Every test appends a ``CRITERION k PASS|FAIL ...`` line that is printed in
the terminal summary, then asserts the criterion as stated.
"""
import time

import numpy as np
from scipy.stats import kendalltau

from homflow.calculus import DiscreteField, Polynomial, VertexMeasure, divergence_pairing_residual, leibniz_residual
from homflow.cell import (cell_value, enforce_representative, equal_mass_spread, estimate_fhom, eta_window,
                          is_member, make_representative_set, random_members, scaling_check)
from homflow.energy import EdgeCostFamily, LocalizedEnergy
from homflow.experiments import ExperimentConfig, run
from homflow.flow_solver import (FlowProblem, brute_force, cycle_space, solve_convex, solve_convex_oracle,
                                 solve_nonconvex)
from homflow.geometry import Box, GraphSpec, generate
from homflow.uniform_flow import (interior_divergence, random_orthotopes, standard_test_functions,
                                  verify_boundedness, verify_convergence)

UNIT = Box((0.0, 0.0), (1.0, 1.0))
L1 = EdgeCostFamily("weighted_abs")


def record(log, k, ok, detail):
    line = f"CRITERION {k} {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    log.append(line)


def test_criterion_01_l1_norm_on_lattice(operators, acceptance_log):
    t0 = time.time()
    op = operators["lattice_zd"]
    eps_list = [1 / 4, 1 / 8, 1 / 16, 1 / 32]
    e1 = estimate_fhom(op, L1, (1.0, 0.0), eps_list)
    diag = estimate_fhom(op, L1, (1.0, 1.0), eps_list)
    oracle_gap = 0.0
    for j in [(1.0, 0.0), (1.0, 1.0)]:
        for eps in eps_list[:2]:
            rs = make_representative_set(op, j, UNIT, eps)
            oracle_gap = max(oracle_gap, abs(cell_value(rs, L1).value - solve_convex_oracle(rs.problem(L1))))
    runtime = time.time() - t0
    ok = (0.95 <= e1.f_hom <= 1.05 and 1.90 <= diag.f_hom <= 2.10 and oracle_gap <= 1e-8 and runtime < 300)
    record(acceptance_log, 1, ok, f"f(e1)={e1.f_hom:.6f} f(1,1)={diag.f_hom:.6f} oracle_gap={oracle_gap:.1e} "
                                  f"runtime={runtime:.1f}s")
    assert ok


def test_criterion_02_scaling_identity(operators, acceptance_log):
    t0 = time.time()
    rng = np.random.default_rng(2)
    families = [EdgeCostFamily("weighted_abs", 0, {"alpha_min": 1.0, "alpha_max": 2.0}),
                EdgeCostFamily("piecewise_linear_convex", 0, {"alpha_min": 0.5, "alpha_max": 1.5})]
    worst = 0.0
    for k in range(10):
        kind = ("lattice_zd", "jittered_lattice")[k % 2]
        fam = families[(k // 2) % 2]
        costs = EdgeCostFamily(fam.kind, k, fam.params)
        eps = [1 / 2, 1 / 4, 1 / 8][k % 3]
        lo = rng.uniform(-0.5, 0.5, size=2)
        A = Box(tuple(lo), tuple(lo + rng.uniform(0.5, 1.0, size=2)))
        lhs, rhs = scaling_check(operators[kind], costs, rng.normal(size=2), A, eps)
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    runtime = time.time() - t0
    ok = worst <= 1e-8 and runtime < 60
    record(acceptance_log, 2, ok, f"max_rel_gap={worst:.2e} instances=10 runtime={runtime:.1f}s")
    assert ok


def test_criterion_03_equal_mass(operators, acceptance_log):
    rng = np.random.default_rng(3)
    kinds = list(operators)
    worst, all_members = 0.0, True
    for k in range(20):
        op = operators[kinds[k % 3]]
        eps = [1 / 4, 1 / 8][k % 2]
        rs = make_representative_set(op, rng.normal(size=2), UNIT, eps)
        costs = EdgeCostFamily("weighted_abs", k, {"alpha_min": 1.0, "alpha_max": 2.0})
        members = random_members(rs, 10, rng) + [cell_value(rs, costs).J]
        all_members &= all(is_member(rs, J) for J in members)
        worst = max(worst, equal_mass_spread(rs, members))
    ok = worst <= 1e-10 and all_members
    record(acceptance_log, 3, ok, f"max_spread={worst:.2e} instances=20 representatives=11 each")
    assert ok


def test_criterion_04_intertwining_and_leibniz(acceptance_log):
    rng = np.random.default_rng(4)
    kinds = [("lattice_zd", 0.0), ("jittered_lattice", 0.3), ("voronoi_points", 0.3)]
    worst_leib = worst_pair = 0.0
    for k in range(200):
        kind, a = kinds[k % 3]
        g = generate(GraphSpec(kind, 2, a, k, int(rng.integers(3, 8))))
        n = int(rng.integers(1, 4))
        J = DiscreteField(g, rng.normal(size=(g.n_edges, n)))
        worst_leib = max(worst_leib, leibniz_residual(J, rng.normal(size=g.n_vertices)))
        Psi = Polynomial.random(2, int(rng.integers(1, 4)), shape=(n,), rng=rng)
        worst_pair = max(worst_pair, abs(divergence_pairing_residual(J, Psi)))
    ok = worst_leib <= 1e-10 and worst_pair <= 1e-10
    record(acceptance_log, 4, ok, f"leibniz={worst_leib:.1e} pairing={worst_pair:.1e} triples=200")
    assert ok


def test_criterion_05_uniform_flow(operators, acceptance_log):
    eps_list = [1 / 2, 1 / 4, 1 / 8, 1 / 16, 1 / 32]
    div = max(interior_divergence(op, e) for op in operators.values() for e in np.eye(2))
    monotone, total, reductions, slopes, failures = 0, 0, [], [], []
    for kind, op in operators.items():
        for k, phi in enumerate(standard_test_functions(2)):
            for j in [(1.0, 0.0), (0.0, 1.0)]:
                err = np.array([r["error"] for r in verify_convergence(op, j, phi, eps_list)])
                total += 1
                if np.all(np.diff(err) < 0):
                    monotone += 1
                else:
                    failures.append(f"{kind}/phi{k}/j={j}")
                reductions.append(err[-1] / err[0])
                slopes.append(np.polyfit(np.log(eps_list), np.log(err), 1)[0])
    bound_ratio = 0.0
    for op in operators.values():
        for j in [(1.0, 0.0), (0.0, 1.0)]:
            levels = [verify_boundedness(op, j, random_orthotopes(20, eps, UNIT, rng=7), eps) for eps in eps_list]
            bound_ratio = max(bound_ratio, max(levels) / min(levels))
    ok = div == 0.0 and monotone == total and bound_ratio <= 2.0
    record(acceptance_log, 5, ok,
           f"interior_divergence={div:.1e} monotone={monotone}/{total} boundedness_max/min={bound_ratio:.3f} "
           f"worst_reduction={max(reductions):.3f} median_loglog_slope={np.median(slopes):.2f} "
           f"non_monotone=[{', '.join(failures)}]")
    assert div == 0.0
    assert bound_ratio <= 2.0
    assert monotone == total, f"non-monotone error sequences: {failures}"


def test_criterion_06_corrector_bounds(acceptance_log):
    eps_list = [1 / 4, 1 / 8, 1 / 16, 1 / 32, 1 / 64]
    rows = []
    plan = [("lattice_zd", 0.0, [0, 1, 2]), ("jittered_lattice", 0.25, [0, 1, 2, 3]),
            ("voronoi_points", 0.3, [0, 1, 2])]
    for kind, a, seeds in plan:
        cfg = ExperimentConfig("corrector_bounds", graph={"kind": kind, "dim": 2, "jitter_amplitude": a},
                               eps_list=eps_list, seeds=seeds)
        rows += run(cfg)["rows"]
    eps = np.array([r["eps"] for r in rows])
    ratio = np.array([r["bound_ratio"] for r in rows])
    div = max(r["divergence_error"] for r in rows)
    band = max(r["band_violation"] for r in rows)
    tau = float(kendalltau(eps, ratio).statistic)
    ok = len(rows) == 50 and div <= 1e-10 and band == 0.0 and ratio.max() <= 10 and tau <= 0.3
    record(acceptance_log, 6, ok, f"instances={len(rows)} max_divergence_error={div:.1e} band_violation={band} "
                                  f"max_ratio={ratio.max():.3f} tau(eps,ratio)={tau:.2f} "
                                  f"tau(1/eps,ratio)={-tau:.2f}")
    assert ok


def test_criterion_07_w1_convergence(acceptance_log):
    eps_list = [1 / 4, 1 / 8, 1 / 16, 1 / 32]
    cfg = ExperimentConfig("w1_convergence", eps_list=eps_list,
                           measures={"plus": [{"point": [0, 0], "mass": 1}], "minus": [{"point": [1, 1], "mass": 1}]})
    s = run(cfg)["summary"]["seed=0"]
    values = np.array(s["values"])
    limit, pred = s["extrapolated"], s["predicted"]
    # affine model value(eps) = limit + C eps; its residual must be small next to the limit
    eps = np.array(eps_list)
    C = s["slope"]
    fit_residual = float(np.max(np.abs(values - limit - C * eps)))
    rel = abs(values[-1] - pred) / abs(pred)
    ok = fit_residual <= 0.01 * abs(limit) and rel <= 0.05 and abs(limit - pred) / abs(pred) <= 0.05
    record(acceptance_log, 7, ok, f"values={np.round(values, 6).tolist()} limit={limit:.6f} predicted={pred:.6f} "
                                  f"C_fit={C:.2e} fit_residual={fit_residual:.1e} rel_error_at_1/32={rel:.2e}")
    assert ok


def test_criterion_08_solver_correctness(acceptance_log):
    fams = [EdgeCostFamily("weighted_abs", 0, {"alpha_min": 1.0, "alpha_max": 3.0}),
            EdgeCostFamily("piecewise_linear_convex", 0, {"alpha_min": 1.0, "alpha_max": 2.0,
                                                          "breakpoints": [1.0, 2.0], "slopes": [1.0, 1.5, 4.0]}),
            EdgeCostFamily("nonconvex_capped", 0, {"alpha_min": 1.0, "alpha_max": 2.0, "beta": 1.0, "gamma": 0.25})]
    convex_gap = nonconvex_gap = 0.0
    max_coords = 0
    for k in range(30):
        fam = fams[k % 3]
        rng = np.random.default_rng(k)
        g = generate(GraphSpec(("jittered_lattice", "lattice_zd")[k % 2], 2, 0.3, k, 3))
        vals = rng.integers(-2, 3, size=g.n_vertices).astype(float)
        vals[-1] -= vals.sum()
        p = FlowProblem(LocalizedEnergy(g, EdgeCostFamily(fam.kind, k, fam.params)), VertexMeasure(g, vals))
        max_coords = max(max_coords, cycle_space(p).k)
        oracle = brute_force(p).objective
        if fam.convex:
            convex_gap = max(convex_gap, abs(solve_convex(p).objective - oracle))
        else:
            nonconvex_gap = max(nonconvex_gap, abs(solve_nonconvex(p).objective - oracle))
    ok = max_coords <= 6 and convex_gap <= 1e-6 and nonconvex_gap <= 1e-3
    record(acceptance_log, 8, ok, f"instances=30 max_cycle_coords={max_coords} convex_gap={convex_gap:.1e} "
                                  f"nonconvex_gap={nonconvex_gap:.1e}")
    assert ok


def test_criterion_09_self_averaging(operators, acceptance_log):
    op = operators["lattice_zd"]
    vals = []
    for seed in range(10):
        costs = EdgeCostFamily("weighted_abs", seed, {"alpha_min": 1.0, "alpha_max": 2.0})
        vals.append(cell_value(make_representative_set(op, (1.0, 0.0), UNIT, 1 / 32), costs).value / UNIT.volume)
    vals = np.array(vals)
    cv = float(vals.std(ddof=1) / vals.mean())
    ok = cv <= 0.05
    record(acceptance_log, 9, ok, f"mean={vals.mean():.4f} cv={100 * cv:.2f}% seeds=10 eps=1/32")
    assert ok


def test_criterion_10_enforce_representative(operators, acceptance_log):
    plan = [("lattice_zd", 4), ("jittered_lattice", 3), ("voronoi_points", 3)]
    eps = 1 / 32
    n, members, worst = 0, 0, -np.inf
    for kind, n_seeds in plan:
        for j in [(1.0, 0.0), (1.0, 1.0)]:
            rs = make_representative_set(operators[kind], j, UNIT, eps)
            for seed in range(n_seeds):
                rng = np.random.default_rng(seed)
                noise = 0.2 * eps * rng.normal(size=rs.canonical.values.shape)
                J = DiscreteField(rs.graph, rs.canonical.values + noise, epsilon=eps)
                lo, hi = eta_window(rs, J)
                res = enforce_representative(rs, J, 0.5 * (lo + hi), L1)
                n += 1
                members += int(res.member and is_member(rs, res.J))
                worst = max(worst, res.increase / (10 * res.err["total"]))
    ok = members == n == 20 and worst <= 1.0
    record(acceptance_log, 10, ok, f"instances={n} members={members} max increase/(10*Err)={worst:.4f}")
    assert ok
