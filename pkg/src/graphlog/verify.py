"""Quick invariant suite behind ``graphlog verify``.

Each check is small enough to run in a few seconds and uses the fixture
directory (``GRAPHLOG_FIXTURES`` or the bundled one).
"""

from __future__ import annotations

import math

import numpy as np

from .functionals import GlobalProblem, LocalProblem, c_eps, constants_ledger
from .graph_core import Graph, Lattice, VertexFunction, ball, gradient_pair, laplacian, make_domain


def random_connected_graph(rng: np.random.Generator, n: int, extra: float = 1.5) -> Graph:
    """Random spanning tree plus about ``extra * n`` chords; w in (0, 2], mu in [0.5, 2]."""
    order = rng.permutation(n)
    edges = {}
    for i in range(1, n):
        a, b = int(order[i]), int(order[rng.integers(0, i)])
        edges[(min(a, b), max(a, b))] = None
    for _ in range(int(extra * n)):
        a, b = (int(t) for t in rng.integers(0, n, 2))
        if a != b:
            edges[(min(a, b), max(a, b))] = None
    w = 2.0 - rng.uniform(0.0, 2.0, len(edges))  # (0, 2]
    mu = rng.uniform(0.5, 2.0, n)
    return Graph(list(range(n)), {i: float(mu[i]) for i in range(n)},
                 [(a, b, float(wi)) for (a, b), wi in zip(edges, w)])


def green_gaps(g: Graph, u, v, interior=None) -> tuple[float, float]:
    """Relative gaps of the two Green identities.

    Without ``interior``: ``sum_V mu grad u . grad v`` against ``-sum_V mu (Delta u) v``.
    With ``interior`` (``u`` vanishing off it, ``v`` supported in it): the
    left side runs over the closure and the right side over the interior.
    """
    if interior is None:
        lhs_set = rhs_set = g.vertices
    else:
        d = make_domain(g, interior)
        lhs_set, rhs_set = d.closure, d.interior
    lhs = math.fsum(g.mu(x) * gradient_pair(g, u, v, x) for x in lhs_set)
    rhs = -math.fsum(g.mu(x) * laplacian(g, u, x) * v.get(x, 0.0) for x in rhs_set)
    sym = math.fsum(g.mu(x) * (laplacian(g, u, x) * v.get(x, 0.0)
                               - u.get(x, 0.0) * laplacian(g, v, x)) for x in g.vertices)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return abs(lhs - rhs) / scale, abs(sym) / scale


def _check(name, passed, **detail):
    return {"name": name, "passed": bool(passed), **detail}


def run_checks(cfg) -> list[dict]:
    from .cli_io import resolve_graph, resolve_potential
    from .exhaustion import run_exhaustion
    from .solvers import SolverConfig, certify, find_solutions, solve, solve_newton

    rng = np.random.default_rng(cfg.seed)
    out = []

    # closed form on the three-vertex path
    g3 = resolve_graph("p3.json")
    p = LocalProblem(g3, make_domain(g3, ["v1"], "v1"), resolve_potential("h1.json"))
    exact = math.exp(1.5)
    errs = []
    for m in ("newton", "nehari", "mountain-pass"):
        s = solve(p, SolverConfig(method=m))
        errs.append(max(abs(abs(s.u("v1")) - exact), abs(s.energy - 0.5 * math.e**3)))
    out.append(_check("closed_form_p3", max(errs) <= 1e-9, max_error=max(errs)))

    # Green identities
    worst = 0.0
    for _ in range(5):
        g = random_connected_graph(rng, 200)
        u = VertexFunction.from_array(g.vertices, rng.standard_normal(len(g)))
        v = VertexFunction.from_array(g.vertices, rng.standard_normal(len(g)))
        worst = max(worst, *green_gaps(g, u, v))
    out.append(_check("green_identities", worst <= 1e-12, max_rel_gap=worst))

    # C_eps against its definition and envelope
    t = np.logspace(-8, 8, 20001)
    ok = True
    for eps in np.arange(1, 10) / 10:
        ce = c_eps(eps)
        ratio = t * t * np.abs(np.log(t * t)) / (t ** (2 - eps) + t ** (2 + eps))
        ok &= bool(ratio.max() <= ce <= 2 / (math.e * eps))
    out.append(_check("c_eps_envelope", ok))

    # mountain-pass geometry on a Z^1 ball
    lat = Lattice(1)
    gz = lat.materialize(0, 5)
    pz = LocalProblem(gz, ball(gz, 0, 4), resolve_potential("z1_quadratic.json"))
    led = constants_ledger(pz)
    lows = []
    for _ in range(100):
        x = rng.standard_normal(pz.n)
        x *= led.mp_radius / math.sqrt(pz.norm_sq(x))
        lows.append(pz.energy_vec(x) - led.mp_level_floor)
    far = pz.energy_vec(1e3 * pz.spike())
    out.append(_check("mountain_pass_geometry", min(lows) >= 0 and far < 0,
                      min_margin=min(lows), far_energy=far))

    # exhaustion on Z^1
    trace, cand = run_exhaustion(lat, resolve_potential("z1_quadratic.json"), 0, 3, 8, 3)
    out.append(_check("exhaustion_z1", trace.converged_at is not None and cand.nontrivial,
                      converged_at=trace.converged_at))

    # sign symmetry
    x0 = rng.standard_normal(pz.n)
    a, b = solve_newton(pz, x0), solve_newton(pz, -x0)
    out.append(_check("sign_symmetry", np.array_equal(a.values, -b.values)))

    # several solutions on the five-vertex path
    g5 = resolve_graph("path5.json")
    p5 = GlobalProblem(g5, resolve_potential("path5_well.json"))
    sols = find_solutions(p5, SolverConfig(method="deflated", seed=cfg.seed), limit=4)
    led5 = constants_ledger(p5)
    energies = [s.energy for s in sols]
    ok = (len({round(e, 8) for e in energies}) >= 3
          and all(e2 >= e1 for e1, e2 in zip(energies, energies[1:]))
          and all(certify(p5, s, led5).residual_ok for s in sols))
    out.append(_check("multiplicity_path5", ok, energies=energies))
    return out
