"""Solve on growing balls and watch the solutions settle on a fixed window.

For ``k = k_from .. k_to`` the Dirichlet problem on ``B_k`` is solved by
mountain pass, warm-started from ``u_{k-1}`` (extended by zero).  The run
records norms, energies and the restriction to the window
``A = B_{window_radius}``, and reports the first ``k`` at which the window
restriction moved by at most ``tol_conv``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CollapseToZero,
    InvalidEpsilon,
    LocalSolveFailed,
    NoConvergenceInRange,
    PathCollapse,
    SingularJacobian,
)
from .functionals import ConstantsLedger, LocalProblem, c_eps, constants_ledger
from .graph_core import Graph, Lattice, VertexFunction, ball, vertex_key
from .spaces import PotentialSpec, embedding_constant
from .solvers import (
    SolverConfig,
    certify,
    negative_endpoint,
    sign_normalize,
    solve_mountain_pass,
)

RETRIES = 3


def uniform_bound(c_k: float, epsilon: float, ledger: ConstantsLedger | None,
                  h0: float, mu_min: float) -> float:
    """Upper bound for ``||u||_H^2`` of a critical point at level ``c_k``.

    Combines ``||u||_2^2 = 2 c_k`` with the interpolation estimate of the
    log term through ``C_eps`` and the embedding constant ``C_1`` at
    ``q = 2 (1 + eps)``:

        (1 - eps) C_eps C_1 (2 c_k)^(1/(1-eps)) / (1 - (1 + eps)/2).
    """
    if not 0.0 < epsilon < 1.0:
        raise InvalidEpsilon(f"epsilon = {epsilon} must lie in (0, 1)")
    ce = ledger.C_eps if ledger is not None and ledger.epsilon == epsilon else c_eps(epsilon)
    if not c_k > 0:
        raise ValueError("the critical level must be positive")
    c1 = embedding_constant(h0, mu_min, 2.0 * (1.0 + epsilon))
    return float((1.0 - epsilon) * ce * c1 * (2.0 * c_k) ** (1.0 / (1.0 - epsilon))
                 / (1.0 - 0.5 * (1.0 + epsilon)))


def spike_level(g: Graph, center, h: PotentialSpec) -> float:
    """``max_t I(t delta_center) = mu/2 exp(q/mu)``, ``q = sum_y w + h mu``.

    The segment to a large multiple of the spike lies in every ball around
    the center, so this value bounds the pass level of all of them.
    """
    mu = g.mu(center)
    q = sum(w for _, w in g.neighbors(center)) + h.at(g, center) * mu
    return 0.5 * mu * math.exp(q / mu)


@dataclass
class TraceRow:
    k: int
    norm_H: float
    energy: float
    sup_window: float
    window: dict
    step: float | None  # sup_A |u_k - u_{k-1}|
    converged: bool
    residual_norm: float
    identity_gap: float  # |I_k(u_k) - 1/2 ||u_k||_2^2|
    certificate_ok: bool


@dataclass
class ExhaustionTrace:
    window: tuple
    uniform_bound_used: float
    rows: list[TraceRow] = field(default_factory=list)
    converged_at: int | None = None

    def to_json(self) -> dict:
        return {
            "window": [vertex_key(x) for x in self.window],
            "uniform_bound_used": self.uniform_bound_used,
            "converged_at": self.converged_at,
            "rows": [
                {
                    "k": r.k, "norm_H": r.norm_H, "energy": r.energy,
                    "sup_window": r.sup_window, "step": r.step,
                    "converged": r.converged, "residual_norm": r.residual_norm,
                    "identity_gap": r.identity_gap,
                    "certificate_ok": r.certificate_ok,
                    "window_values": {vertex_key(x): v for x, v in r.window.items()},
                }
                for r in self.rows
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "norm_H", "energy", "sup_window", "converged"])
        for r in self.rows:
            w.writerow([r.k, f"{r.norm_H:.16e}", f"{r.energy:.16e}",
                        f"{r.sup_window:.16e}", int(r.converged)])
        return buf.getvalue()


@dataclass
class GlobalCandidate:
    u_star: VertexFunction
    k: int
    residual_norm: float  # over B_{k-1}
    boundary_layer_residual: float  # on the closure of B_k outside B_{k-1}
    log_mass: float
    nontrivial: bool

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "residual_norm": self.residual_norm,
            "boundary_layer_residual": self.boundary_layer_residual,
            "log_mass": self.log_mass,
            "nontrivial": self.nontrivial,
            "u_star": {vertex_key(x): v for x, v in self.u_star.items()},
        }


def nontriviality_check(candidate: GlobalCandidate, ledger: ConstantsLedger) -> bool:
    """Partial log-mass at least theta and some ``|u*(x)| > 1``."""
    u = candidate.u_star
    big = any(abs(v) > 1.0 for v in u.values())
    return bool(candidate.log_mass >= ledger.nontriviality_theta and big)


def _global_residual(g: Graph, h: PotentialSpec, u: VertexFunction, vertices) -> float:
    from .functionals import log_nonlinearity

    worst = 0.0
    for x in vertices:
        ux = u(x)
        lap = sum(w * (u(y) - ux) for y, w in g.neighbors(x)) / g.mu(x)
        r = -lap + h.at(g, x) * ux - log_nonlinearity(ux)
        worst = max(worst, g.mu(x) * abs(r))
    return worst


def _local_solve(p: LocalProblem, start: np.ndarray, cfg: SolverConfig, ledger, k: int):
    try:
        s = solve_mountain_pass(p, negative_endpoint(p, start), cfg)
    except (PathCollapse, CollapseToZero, SingularJacobian):
        return None
    if not s.converged or not certify(p, s, ledger).nontriviality_ok:
        return None
    return s


def run_exhaustion(gen: Graph | Lattice, h: PotentialSpec, center, k_from: int, k_to: int,
                   window_radius: int, cfg: SolverConfig | None = None,
                   tol_conv: float = 1e-8, epsilon: float = 0.5):
    """Run the ball sequence ``B_{k_from} .. B_{k_to}``.

    Returns ``(trace, candidate)``.  Every ``k`` is solved; ``converged_at``
    is the first ``k`` whose window step is ``<= tol_conv``.  Raises
    :class:`NoConvergenceInRange` (carrying the trace) when no step
    qualifies and :class:`LocalSolveFailed` when a ball yields no nontrivial
    solution after the warm start and ``RETRIES`` seeded random starts.
    """
    cfg = cfg or SolverConfig(method="mountain-pass")
    if window_radius < 1 or k_from < window_radius:
        # B_r is contained in B_k exactly when r <= k
        raise ValueError("need 1 <= window_radius <= k_from")
    if k_to < k_from:
        raise ValueError("k_to must be >= k_from")
    g_big = gen.materialize(center, k_to + 1)
    window = tuple(ball(g_big, center, window_radius).interior)
    ledger = exhaustion_ledger(gen, h, center, k_to, epsilon)
    trace = ExhaustionTrace(window, ledger.uniform_bound)
    prev: VertexFunction | None = None
    rng = np.random.default_rng(cfg.seed)
    last = None
    for k in range(k_from, k_to + 1):
        gk = gen.materialize(center, k + 1)
        dom = ball(gk, center, k)
        p = LocalProblem(gk, dom, h, epsilon)
        start = p.spike() if prev is None else p.to_array(prev)
        s = _local_solve(p, start, cfg, ledger, k)
        tries = 0
        while s is None and tries < RETRIES:
            tries += 1
            x0 = rng.standard_normal(p.n)
            s = _local_solve(p, x0, cfg, ledger, k)
        if s is None:
            raise LocalSolveFailed(k, "no nontrivial mountain-pass solution")
        x = sign_normalize(s.values)
        u = p.to_function(x)
        cert = certify(p, s, ledger)
        win = {a: u(a) for a in window}
        step = None if prev is None else max(abs(u(a) - prev(a)) for a in window)
        conv = step is not None and step <= tol_conv
        if conv and trace.converged_at is None:
            trace.converged_at = k
        trace.rows.append(TraceRow(
            k=k, norm_H=math.sqrt(p.norm_sq(x)), energy=p.energy_vec(x),
            sup_window=max(abs(v) for v in win.values()), window=win, step=step,
            converged=conv, residual_norm=s.residual_norm,
            identity_gap=cert.energy_identity_gap, certificate_ok=cert.passed,
        ))
        prev = u
        last = (gk, dom, p, x, u)
    gk, dom, p, x, u = last
    k = k_to
    inner = ball(gk, center, k - 1).interior if k > 1 else ()
    layer = [y for y in dom.closure if y not in set(inner)]
    cand = GlobalCandidate(
        u_star=u, k=k,
        residual_norm=_global_residual(gk, h, u, inner),
        boundary_layer_residual=_global_residual(gk, h, u, layer),
        log_mass=p.logmass(x), nontrivial=False,
    )
    cand.nontrivial = nontriviality_check(cand, ledger)
    if trace.converged_at is None:
        raise NoConvergenceInRange(
            f"window never settled below {tol_conv} for k in [{k_from}, {k_to}]", trace)
    return trace, cand


def exhaustion_ledger(gen, h: PotentialSpec, center, k_max: int,
                      epsilon: float = 0.5) -> ConstantsLedger:
    """Ledger shared by every ball up to ``B_{k_max}``, with its uniform bound.

    ``h0`` and ``mu_min`` are taken over the largest ball, so the constants
    are valid on all smaller ones.
    """
    gk = gen.materialize(center, k_max + 1)
    p = LocalProblem(gk, ball(gk, center, k_max), h, epsilon)
    led = constants_ledger(p)
    level = spike_level(gk, center, h)
    return led.with_uniform_bound(uniform_bound(level, epsilon, led, p.coercive_min(), p.mu_min))
