import math

import numpy as np
import pytest
from scipy.optimize import root

from graphlog.errors import NoNewSolution, SingularJacobian
from graphlog.functionals import GlobalProblem, LocalProblem, constants_ledger
from graphlog.graph_core import GraphSpec, Lattice, VertexFunction, ball, build_graph, make_domain
from graphlog.solvers import (
    Solution,
    SolverConfig,
    _solve_linear,
    certify,
    default_start,
    find_solutions,
    negative_endpoint,
    sign_normalize,
    solve_deflated,
    solve_mountain_pass,
    solve_nehari,
    solve_newton,
)
from graphlog.spaces import PotentialSpec

import oracles

E32 = math.exp(1.5)
HALF_E3 = 0.5 * math.e**3

# frozen from oracles.multistart(path_laplacian(5), h, 10_000 starts, seed 12345)
PATH5_LEVELS = [1.7223893747557326, 8.22577807202622, 8.325893203979959, 11.60974845090331,
                16.642188668617358, 17.6662828631138, 21.706049292412345, 158.5494606394501,
                191.49311562763853, 196.53457238138697, 342.14036907958484]
PATH5_GROUND = np.array([0.02767543985877277, 0.2815815436487029, 1.8123660110809676,
                         0.2815815436487029, 0.02767543985877278])


@pytest.fixture
def p3_local():
    g = build_graph(GraphSpec("path", n=3))
    return LocalProblem(g, make_domain(g, ["v1"], "v1"), PotentialSpec.constant(1.0))


def z1_ball(k, h=None):
    g = Lattice(1).materialize(0, k + 1)
    return LocalProblem(g, ball(g, 0, k), h or PotentialSpec.constant(1.0))


@pytest.fixture(scope="module")
def path5():
    g = build_graph(GraphSpec("path", n=5))
    return GlobalProblem(g, PotentialSpec.table({"v2": -0.5}, default=2.0))


def test_config_invariants():
    for bad in (dict(tol_residual=0), dict(max_iter=0), dict(path_points=2), dict(method="x")):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_newton_f1(p3_local):
    s = solve_newton(p3_local, VertexFunction.delta("v1"))
    assert s.converged and s.residual_norm <= 1e-10
    assert abs(s.u("v1") - E32) <= 1e-10
    assert abs(s.energy - HALF_E3) <= 1e-9
    t = solve_newton(p3_local, VertexFunction.delta("v1", -1.0))
    assert abs(t.u("v1") + E32) <= 1e-10


def test_newton_z1_ball_against_scipy_root():
    p = z1_ball(3)
    x0 = default_start(p)
    s = solve_newton(p, x0)
    led = constants_ledger(p)
    assert s.converged and s.residual_norm <= 1e-10
    assert certify(p, s, led).passed
    # independent dense residual; scipy stays at the root when started there
    order = np.argsort(p.unknowns)
    A = oracles.dirichlet_path_laplacian(p.n)
    u = s.values[order]
    F = oracles.lse_residual(A, np.ones(p.n))
    assert np.max(np.abs(F(u))) <= 1e-10
    ref = root(F, u, method="hybr", tol=1e-14).x
    assert np.max(np.abs(ref - u)) <= 1e-9


def test_newton_reports_failure():
    p = z1_ball(4)
    x0 = np.random.default_rng(2).standard_normal(p.n)
    s = solve_newton(p, x0, SolverConfig(max_iter=1))
    assert not s.converged
    assert s.residual_norm > 1e-10


def test_singular_linear_system():
    with pytest.raises(SingularJacobian):
        _solve_linear(np.zeros((2, 2)), np.ones(2))


def test_nehari_f1_and_scale_invariance(p3_local):
    s = solve_nehari(p3_local, VertexFunction.delta("v1"))
    assert abs(s.u("v1") - E32) <= 1e-10
    p = z1_ball(3)
    x0 = np.random.default_rng(0).uniform(0.1, 1.0, p.n)
    a, b = solve_nehari(p, x0), solve_nehari(p, 3 * x0)
    assert np.allclose(a.values, b.values, rtol=0, atol=1e-12)


def test_nehari_not_above_newton():
    p = z1_ball(3)
    x0 = default_start(p)
    assert solve_nehari(p, x0).energy <= solve_newton(p, x0).energy + 1e-12


def test_mountain_pass_f1(p3_local):
    e = VertexFunction.delta("v1", 10.0)
    assert p3_local.energy_vec(p3_local.to_array(e)) == pytest.approx(200 - 100 * math.log(10), rel=1e-14)
    s = solve_mountain_pass(p3_local, e)
    assert abs(abs(s.u("v1")) - E32) <= 1e-10
    assert abs(s.energy - HALF_E3) <= 1e-9
    assert s.energy >= constants_ledger(p3_local).mp_level_floor


def test_mountain_pass_matches_nehari_on_small_ball():
    p = z1_ball(2)
    mp = solve_mountain_pass(p, negative_endpoint(p, p.spike()))
    ne = solve_nehari(p, p.spike())
    assert abs(mp.energy - ne.energy) <= 1e-8
    assert mp.energy <= mp.initial_path_max
    assert mp.energy >= constants_ledger(p).mp_level_floor


def test_mountain_pass_needs_negative_endpoint(p3_local):
    with pytest.raises(ValueError):
        solve_mountain_pass(p3_local, VertexFunction.delta("v1"))


def test_certify_f1(p3_local):
    led = constants_ledger(p3_local)
    s = solve_newton(p3_local, VertexFunction.delta("v1"))
    c = certify(p3_local, s, led)
    assert c.residual_ok and c.nontriviality_ok and c.mp_floor_ok
    assert c.energy_identity_gap <= 1e-10 and c.nehari_gap <= 1e-10
    zero = Solution(VertexFunction(), 0.0, 0.0, 0, "newton", p3_local.fingerprint, values=np.zeros(1))
    assert not certify(p3_local, zero, led).nontriviality_ok
    bumped = Solution(s.u + VertexFunction.delta("v1", 0.1), 0, 0, 0, "newton", p3_local.fingerprint)
    assert not certify(p3_local, bumped, led).residual_ok
    c = certify(p3_local, s, led)
    assert all(v >= 0 for v in (c.energy_identity_gap, c.nehari_gap, c.residual_norm))


@pytest.mark.parametrize("k", [2, 3, 5])
@pytest.mark.parametrize("method", ["newton", "nehari", "mountain-pass"])
def test_local_solution_invariants(k, method):
    from graphlog.solvers import solve

    p = z1_ball(k, PotentialSpec.quadratic(1.0, 1.0))
    s = solve(p, SolverConfig(method=method))
    assert s.converged
    nu = math.sqrt(p.l2sq(s.values))
    assert abs(s.energy - 0.5 * p.l2sq(s.values)) <= 10 * s.tol * (1 + nu)
    c = certify(p, s, constants_ledger(p))
    assert c.nontriviality_ok and c.sup_abs > 1


def test_sign_symmetry_bitwise():
    p = z1_ball(4, PotentialSpec.quadratic(1.0, 1.0))
    rng = np.random.default_rng(5)
    for _ in range(5):
        x0 = rng.standard_normal(p.n) * 3
        a, b = solve_newton(p, x0), solve_newton(p, -x0)
        assert np.array_equal(a.values, -b.values)
        assert a.iterations == b.iterations


def test_determinism(path5):
    cfg = SolverConfig(method="deflated", n_starts=24, seed=3)
    a, b = solve_deflated(path5, [], cfg), solve_deflated(path5, [], cfg)
    assert np.array_equal(a.values, b.values) and a.energy == b.energy


def test_sign_normalize_tie():
    x = np.array([3.0, 0.0, -3.0 * (1 + 1e-12)])
    assert sign_normalize(x)[0] > 0
    assert np.array_equal(sign_normalize(-x), sign_normalize(x))


def test_deflated_first_is_ground_state(path5):
    s = solve_deflated(path5, [], SolverConfig(method="deflated", n_starts=48))
    assert s.energy == pytest.approx(PATH5_LEVELS[0], rel=1e-12)
    assert np.max(np.abs(s.values - PATH5_GROUND)) <= 1e-9
    ne = solve_nehari(path5, np.ones(path5.n))
    assert ne.energy == pytest.approx(s.energy, rel=1e-12)


def test_repeated_deflated_calls_increase(path5):
    cfg = SolverConfig(method="deflated", n_starts=48)
    known = []
    for _ in range(5):
        known.append(solve_deflated(path5, known, cfg))
    energies = [s.energy for s in known]
    assert all(b >= a - 1e-9 * abs(a) for a, b in zip(energies, energies[1:]))
    levels = sorted({round(e, 8) for e in energies})
    assert len(levels) >= 3
    for s in known:
        assert s.residual_norm <= 1e-10
        assert min(abs(s.energy - L) for L in PATH5_LEVELS) <= 1e-9 * s.energy


def test_deflated_exhausts_two_vertex_graph():
    g = build_graph(GraphSpec("path", n=2))
    # h = (1, 2) keeps every solution nondegenerate; h = 1 has a singular
    # Jacobian at the constant solution
    p = GlobalProblem(g, PotentialSpec.table({"v0": 1.0, "v1": 2.0}))
    A = oracles.path_laplacian(2)
    sols = oracles.multistart(A, np.array([1.0, 2.0]), n_starts=2000, seed=1)
    assert len(sols) >= 2
    with pytest.raises(NoNewSolution):
        solve_deflated(p, [p.to_function(u) for u in sols], SolverConfig(method="deflated", n_starts=100))
    found = find_solutions(p, SolverConfig(method="deflated", n_starts=100))
    assert len(found) == len(sols)


def test_mountain_pass_from_far_sign_changing_endpoints():
    # large random endpoints put the pass inside the first path segment
    p = z1_ball(5, PotentialSpec.quadratic(1.0, 1.0))
    ground = solve_nehari(p, p.spike()).energy
    rng = np.random.default_rng(8)
    for _ in range(8):
        e = negative_endpoint(p, rng.standard_normal(p.n) * 3)
        s = solve_mountain_pass(p, e)
        assert s.converged
        assert s.energy == pytest.approx(ground, rel=1e-10)
        assert s.energy <= s.initial_path_max
