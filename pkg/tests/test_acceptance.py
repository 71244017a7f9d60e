"""Acceptance suite, one test per criterion.

``conftest.py`` prints a PASS/FAIL line per criterion at the end of the run.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from graphlog.cli_io import main, parse_config, run, to_canonical_json
from graphlog.exhaustion import exhaustion_ledger, run_exhaustion
from graphlog.functionals import (
    GlobalProblem,
    LocalProblem,
    c_eps,
    constants_ledger,
    energy_gradient_pairing,
    jacobian,
    nehari_projection,
)
from graphlog.graph_core import (
    GraphSpec,
    Lattice,
    VertexFunction,
    ball,
    build_graph,
    make_domain,
)
from graphlog.solvers import (
    DISTINCT_RTOL,
    SolverConfig,
    find_solutions,
    negative_endpoint,
    solve,
    solve_mountain_pass,
    solve_nehari,
    solve_newton,
)
from graphlog.spaces import PotentialSpec
from graphlog.verify import green_gaps, random_connected_graph

import oracles

Z1_H = PotentialSpec.quadratic(1.0, 1.0)
PATH5_H = PotentialSpec.table({"v2": -0.5}, default=2.0)


def test_criterion_1_green_identities():
    rng = np.random.default_rng(20240101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 1001))
        g = random_connected_graph(rng, n)
        u = VertexFunction.from_array(g.vertices, rng.standard_normal(n))
        v = VertexFunction.from_array(g.vertices, rng.standard_normal(n))
        worst = max(worst, *green_gaps(g, u, v))
        # second identity: u vanishes off a ball, boundary terms enter on the left
        inner = ball(g, 0, 2).interior
        ui = VertexFunction({x: u(x) for x in inner})
        vi = VertexFunction({x: v(x) for x in inner})
        worst = max(worst, green_gaps(g, ui, vi, inner)[0])
    elapsed = time.perf_counter() - t0
    print(f"max relative gap {worst:.3e} in {elapsed:.1f} s")
    assert worst <= 1e-12
    assert elapsed <= 30


def test_criterion_2_closed_form():
    g = build_graph(GraphSpec("path", n=3))
    p = LocalProblem(g, make_domain(g, ["v1"], "v1"), PotentialSpec.constant(1.0))
    exact = math.exp(1.5)
    for method in ("newton", "nehari", "mountain-pass"):
        s = solve(p, SolverConfig(method=method))
        assert abs(abs(s.u("v1")) - exact) <= 1e-10, method
        assert abs(s.energy - 0.5 * math.e**3) <= 1e-9, method
    assert abs(nehari_projection(p, VertexFunction.delta("v1")) - exact) <= 1e-12


def test_criterion_3_z1_exhaustion_certificates():
    t0 = time.perf_counter()
    trace, cand = run_exhaustion(Lattice(1), Z1_H, 0, 3, 12, 3, tol_conv=1e-8)
    elapsed = time.perf_counter() - t0
    led = exhaustion_ledger(Lattice(1), Z1_H, 0, 12)
    for r in trace.rows:
        assert r.residual_norm <= 1e-10, r.k
        assert r.identity_gap <= 1e-8, r.k
        assert r.norm_H**2 >= led.nontriviality_theta, r.k
        assert r.norm_H**2 <= trace.uniform_bound_used, r.k
        assert r.certificate_ok, r.k
    assert trace.converged_at is not None and trace.converged_at <= 12
    assert trace.rows[-1].step <= 1e-8
    assert cand.nontrivial
    print(f"converged_at={trace.converged_at} bound={trace.uniform_bound_used:.6g} in {elapsed:.2f} s")
    assert elapsed <= 120


def _mp_problems(eps):
    g1 = Lattice(1).materialize(0, 6)
    g2 = Lattice(2).materialize((0, 0), 4)
    yield LocalProblem(g1, ball(g1, 0, 5), Z1_H, eps)
    yield LocalProblem(g2, ball(g2, (0, 0), 3), PotentialSpec.constant(1.0), eps)
    g3 = build_graph(GraphSpec("path", n=3))
    yield LocalProblem(g3, make_domain(g3, ["v1"], "v1"), PotentialSpec.constant(1.0), eps)


def test_criterion_4_mountain_pass_geometry():
    rng = np.random.default_rng(4)
    violations = 0
    for eps in (0.25, 0.5, 0.75):
        for p in _mp_problems(eps):
            led = constants_ledger(p)
            r = led.mp_radius
            for _ in range(500):
                x = rng.standard_normal(p.n)
                x *= r / math.sqrt(p.norm_sq(x))
                violations += p.energy_vec(x) < r * r / 4
            violations += not p.energy_vec(1e3 * p.spike()) < 0
    print(f"violations: {violations}")
    assert violations == 0


def test_criterion_5_c_eps_certification():
    t = np.logspace(-8, 8, 1_000_000)
    t2 = t * t
    logt2 = np.log(t2)
    for eps in np.arange(1, 10) / 10:
        ce = c_eps(eps)
        ratio = t2 * np.abs(logt2) / (t ** (2 - eps) + t ** (2 + eps))
        assert ratio.max() <= ce, eps
        assert ce <= 2 / (math.e * eps), eps


def test_criterion_6_derivative_checks():
    rng = np.random.default_rng(6)
    h_step = 1e-6
    for _ in range(50):
        g = random_connected_graph(rng, int(rng.integers(5, 60)))
        hv = PotentialSpec.table({x: float(rng.uniform(0.2, 3.0)) for x in g.vertices})
        p = LocalProblem(g, ball(g, 0, 2), hv, float(rng.uniform(0.1, 0.9)))
        x = rng.choice([-1.0, 1.0], p.n) * 10 ** rng.uniform(-1, 1, p.n)
        v = rng.standard_normal(p.n)
        fd = (p.energy_vec(x + h_step * v) - p.energy_vec(x - h_step * v)) / (2 * h_step)
        an = energy_gradient_pairing(p, p.to_function(x), p.to_function(v))
        assert abs(fd - an) <= 1e-6 * max(abs(an), 1.0)
        fdr = (p.residual_vec(x + h_step * v) - p.residual_vec(x - h_step * v)) / (2 * h_step)
        jv = jacobian(p, p.to_function(x)) @ v
        assert np.max(np.abs(fdr - jv)) <= 1e-6 * max(np.max(np.abs(jv)), 1.0)


@pytest.fixture(scope="module")
def path5():
    g = build_graph(GraphSpec("path", n=5))
    return GlobalProblem(g, PATH5_H)


def test_criterion_7_multiplicity(path5):
    t0 = time.perf_counter()
    order = [path5.unknowns.index(f"v{i}") for i in range(5)]
    h = path5.h[order]
    ref = oracles.multistart(oracles.path_laplacian(5), h, n_starts=10_000, seed=12345)
    t_oracle = time.perf_counter() - t0
    sols = find_solutions(path5, SolverConfig(method="deflated", seed=0))
    elapsed = time.perf_counter() - t0
    found = [s.values[order] for s in sols]
    energies = [s.energy for s in sols]
    levels = sorted({round(e, 8) for e in energies})
    print(f"oracle {len(ref)} solutions in {t_oracle:.1f} s, deflation {len(found)} "
          f"on {len(levels)} energy levels, total {elapsed:.1f} s")

    def close(a, b):
        nb = math.sqrt(b @ b)
        return min(np.linalg.norm(a - b), np.linalg.norm(a + b)) <= DISTINCT_RTOL * (1 + nb)

    assert len(found) >= 3 and len(levels) >= 3
    assert all(b >= a for a, b in zip(energies, energies[1:]))
    assert all(s.residual_norm <= 1e-10 for s in sols)
    for i, a in enumerate(found):
        assert not any(close(a, b) for b in found[i + 1:])
    assert all(any(close(a, b) for b in ref) for a in found)
    assert all(any(close(b, a) for a in found) for b in ref)
    assert elapsed <= 300


def test_criterion_8_symmetry_and_determinism(tmp_path):
    g = Lattice(1).materialize(0, 6)
    p = LocalProblem(g, ball(g, 0, 5), Z1_H)
    rng = np.random.default_rng(8)
    for _ in range(5):
        x0 = rng.standard_normal(p.n) * 3
        for f in (solve_newton, solve_nehari):
            a, b = f(p, x0), f(p, -x0)
            assert np.array_equal(a.values, -b.values), f.__name__
        e = negative_endpoint(p, x0)
        a, b = solve_mountain_pass(p, e), solve_mountain_pass(p, -e)
        assert np.array_equal(a.values, -b.values)

    runs = [
        ["solve-local", "--graph", "p3.json", "--potential", "h1.json", "--k", "1"],
        ["exhaust", "--graph", "Z:1", "--potential", "z1_quadratic.json",
         "--k-range", "3:12", "--window", "3", "--center", "0"],
        ["check-h", "--graph", "Z:1", "--potential", "z1_quadratic.json", "--k", "10",
         "--center", "0"],
    ]
    for i, args in enumerate(runs):
        outs = [tmp_path / f"{i}_{j}.json" for j in range(2)]
        for out in outs:
            assert main(args + ["--seed", "7", "--out", str(out)]) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes(), args[0]

    texts = []
    for _ in range(2):
        cfg = parse_config(["multi", "--graph", "path5.json", "--potential", "path5_well.json",
                            "--seed", "7"])
        cfg.solver = dataclasses.replace(cfg.solver, n_starts=48)
        rep, code = run(cfg)
        assert code == 0
        texts.append(to_canonical_json(rep))
    assert texts[0] == texts[1]
