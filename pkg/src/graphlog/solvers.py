"""Critical-point solvers and post-solve certificates.

All solvers work on coordinate arrays in the order of ``problem.unknowns``
and return a :class:`Solution` holding both the array and the vertex
function.  Randomness (starts of the deflated search) comes only from
``numpy.random.default_rng(cfg.seed)``, i.e. PCG64 seeded by the config.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from .errors import (
    CollapseToZero,
    NoNewSolution,
    PathCollapse,
    SingularJacobian,
    ZeroFunction,
)
from .functionals import ConstantsLedger, LocalProblem, _Problem, _u2logu2, log_nonlinearity
from .graph_core import VertexFunction

METHODS = ("newton", "nehari", "mountain-pass", "deflated")
DISTINCT_RTOL = 1e-6
START_LOG10 = (-3.0, 1.5)  # log10 range of random start magnitudes
_DENSE_LIMIT = 400
_DEFLATED_HALVINGS = 12
_STALL_LIMIT = 25  # Newton iterations without a new best residual
_MP_RESTARTS = 8  # shorter-path restarts when the pass is under-resolved


@dataclass(frozen=True)
class SolverConfig:
    method: str = "newton"
    tol_residual: float = 1e-10
    max_iter: int = 100
    damping: float = 1.0
    backtrack: float = 0.5
    max_halvings: int = 60
    seed: int = 0
    path_points: int = 41
    deflation_power: float = 2.0
    deflation_shift: float = 1.0
    mp_step: float = 0.05
    mp_sweeps: int = 2000
    n_starts: int = 500
    descent_max_iter: int = 5000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.path_points < 3:
            raise ValueError("path_points must be >= 3")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")


@dataclass
class Solution:
    u: VertexFunction
    energy: float
    residual_norm: float
    iterations: int
    method: str
    fingerprint: str
    converged: bool = True
    tol: float = 1e-10
    values: np.ndarray = field(default=None, repr=False)

    def to_json(self) -> dict:
        from .graph_core import vertex_key

        return {
            "method": self.method,
            "converged": self.converged,
            "energy": self.energy,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "tol": self.tol,
            "fingerprint": self.fingerprint,
            "u": {vertex_key(x): v for x, v in self.u.items()},
        }


@dataclass
class Certificate:
    residual_ok: bool
    residual_norm: float
    energy_identity_gap: float
    nontriviality_ok: bool
    norm_sq: float
    mp_floor_ok: bool
    nehari_gap: float
    sup_abs: float
    uniform_bound_ok: bool | None = None

    @property
    def passed(self) -> bool:
        checks = [self.residual_ok, self.nontriviality_ok, self.mp_floor_ok]
        if self.uniform_bound_ok is not None:
            checks.append(self.uniform_bound_ok)
        return all(checks)

    def to_json(self) -> dict:
        return dict(self.__dict__)


# -- helpers ---------------------------------------------------------------------

def _as_array(p: _Problem, u) -> np.ndarray:
    if isinstance(u, Mapping):
        return p.to_array(u)
    arr = np.array(u, dtype=float)
    if arr.shape != (p.n,):
        raise ValueError(f"expected {p.n} coordinates, got shape {arr.shape}")
    return arr


def _solution(p, x, iterations, method, converged, cfg) -> Solution:
    x = np.array(x, dtype=float)
    return Solution(
        u=p.to_function(x),
        energy=p.energy_vec(x),
        residual_norm=p.residual_norm(x),
        iterations=iterations,
        method=method,
        fingerprint=p.fingerprint,
        converged=converged,
        tol=cfg.tol_residual,
        values=x,
    )


def _jacobian(p: _Problem, x):
    return p.jacobian_dense(x) if p.n <= _DENSE_LIMIT else p.jacobian_vec(x)


def _solve_linear(J, rhs):
    if isinstance(J, np.ndarray):
        try:
            d = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from None
    else:
        try:
            d = spla.splu(J.tocsc()).solve(rhs)
        except RuntimeError as exc:
            raise SingularJacobian(str(exc)) from None
    if not np.all(np.isfinite(d)):
        raise SingularJacobian("Newton direction is not finite")
    return d


def sign_normalize(x: np.ndarray) -> np.ndarray:
    """Flip ``x`` so that its first entry of (numerically) maximal modulus is positive."""
    a = np.abs(x)
    if a.size == 0 or a.max() == 0:
        return x.copy()
    i = int(np.flatnonzero(a >= a.max() * (1 - 1e-9))[0])
    return -x if x[i] < 0 else x.copy()


class _Deflation:
    """``M(u) = prod_j (||u - u_j||_2^-p + shift)`` with the mu-weighted L2 norm."""

    def __init__(self, roots, mu, power, shift):
        self.roots = np.array(roots, dtype=float).reshape(len(roots), len(mu))
        self.mu = mu
        self.power = power
        self.shift = shift

    def log(self, x) -> float:
        diff = x - self.roots
        d2 = (diff * diff) @ self.mu
        if d2.min() == 0:
            return math.inf
        return float(np.sum(np.log(d2 ** (-0.5 * self.power) + self.shift)))

    def log_and_grad(self, x):
        diff = x[None, :] - self.roots
        d2 = diff * diff @ self.mu
        if np.any(d2 == 0):
            return math.inf, np.zeros_like(x)
        inv = d2 ** (-0.5 * self.power)
        f = inv + self.shift
        dfac = -self.power * inv / d2 / f  # gradient of log f_j is dfac_j mu (u - u_j)
        eta = (dfac[:, None] * diff).sum(axis=0) * self.mu
        return float(np.sum(np.log(f))), eta


def _newton(p: _Problem, x0, cfg: SolverConfig, deflation: _Deflation | None = None):
    """Damped Newton on R (or on M R).  Returns ``(x, iterations, converged)``.

    A step is accepted when the merit (sup-norm of mu R, times M when
    deflating) decreases.  After ``max_halvings`` rejected halvings one
    normalized gradient step on ``|mu R|^2 / 2`` is taken instead.
    """
    x = np.array(x0, dtype=float)

    def merit(z):
        rn = p.residual_norm(z)
        if deflation is None:
            return rn, rn
        logm = deflation.log(z)
        return rn, (logm + math.log(rn) if rn > 0 else -math.inf)

    rn, m = merit(x)
    best_x, best_rn = x.copy(), rn
    since_best = 0
    for it in range(1, cfg.max_iter + 1):
        if rn <= cfg.tol_residual:
            return x, it - 1, True
        r = p.residual_vec(x)
        J = _jacobian(p, x)
        d = _solve_linear(J, -r)
        if deflation is not None:
            _, eta = deflation.log_and_grad(x)
            denom = 1.0 - float(eta @ d)
            if abs(denom) > 1e-12:
                d = d / denom
        step = cfg.damping
        for _ in range(cfg.max_halvings + 1):
            xt = x + step * d
            rt, mt = merit(xt)
            if mt < m:
                break
            step *= cfg.backtrack
        else:
            g = J.T @ (p.mu * p.mu * r)
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            xt = x - 0.05 * max(np.max(np.abs(x)), 1.0) * g / gn
            rt, mt = merit(xt)
        x, rn, m = xt, rt, mt
        if rn < best_rn:
            best_x, best_rn = x.copy(), rn
            since_best = 0
        else:
            since_best += 1
            if since_best >= _STALL_LIMIT:
                break
    if rn <= cfg.tol_residual:
        return x, cfg.max_iter, True
    return best_x, cfg.max_iter, False


# -- public solvers --------------------------------------------------------------

def default_start(p: _Problem) -> np.ndarray:
    """Spike at the domain center scaled onto the Nehari set."""
    x = p.spike()
    return p.nehari_scale(x) * x


def solve_newton(p: _Problem, u0, cfg: SolverConfig | None = None) -> Solution:
    """Damped Newton from ``u0``; a non-converged run returns the best iterate
    with ``converged=False``.

    A nonzero start is first rescaled onto the Nehari set along its own ray.
    Without this, starts of small amplitude such as ``delta_x`` are pulled
    into the trivial solution, which attracts everything below the Nehari
    scale because the log term dominates there.
    """
    cfg = cfg or SolverConfig()
    x = _as_array(p, u0)
    if p.l2sq(x) > 0:
        x = p.nehari_scale(x) * x
    x, it, ok = _newton(p, x, cfg)
    return _solution(p, x, it, "newton", ok, cfg)


def solve_nehari(p: _Problem, u0, cfg: SolverConfig | None = None) -> Solution:
    """Minimize the energy on the Nehari set, then polish with Newton.

    Each step moves along the Riesz gradient for ``K + mu (h + 1)`` and maps
    the result back with the closed-form projection.  On the Nehari set the
    energy equals half the squared L2 norm.
    """
    cfg = cfg or SolverConfig()
    x = _as_array(p, u0)
    if p.l2sq(x) == 0:
        raise ZeroFunction("solve_nehari needs a nonzero start")
    x = p.nehari_scale(x) * x
    E = p.energy_vec(x)
    tau = 1.0
    scale = max(1.0, float(np.max(np.abs(x))))
    it = 0
    for it in range(1, cfg.descent_max_iter + 1):
        r = p.residual_vec(x)
        if p.residual_norm(x) <= 1e-8 * scale:
            break
        g = p.riesz_solve(p.mu * r)
        slope = float(np.dot(p.mu * r, g))
        tau = min(2.0 * tau, 1.0)
        while True:
            xt = x - tau * g
            if p.l2sq(xt) > 0:
                xt = p.nehari_scale(xt) * xt
                Et = p.energy_vec(xt)
                if Et <= E - 1e-4 * tau * slope:
                    break
            tau *= 0.5
            if tau < 1e-16:
                xt, Et = x, E
                break
        if p.l2sq(xt) < 1e-24:
            raise CollapseToZero("Nehari descent collapsed to zero")
        stalled = abs(E - Et) <= 1e-15 * abs(E)
        x, E = xt, Et
        scale = max(1.0, float(np.max(np.abs(x))))
        if stalled:
            break
    x, polish, ok = _newton(p, x, cfg)
    return _solution(p, x, it + polish, "nehari", ok, cfg)


def _energies(p: _Problem, U: np.ndarray) -> np.ndarray:
    KU = (p.K @ U.T).T
    quad = np.sum(U * KU, axis=1) + (U * U) @ (p.mu * p.h)
    return 0.5 * (quad + (U * U) @ p.mu - _u2logu2(U) @ p.mu)


def _reparametrize(U: np.ndarray, mu: np.ndarray) -> np.ndarray:
    seg = np.sqrt(((np.diff(U, axis=0) ** 2) @ mu))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return U
    target = np.linspace(0.0, s[-1], len(U))
    j = np.clip(np.searchsorted(s, target, side="right") - 1, 0, len(U) - 2)
    span = s[j + 1] - s[j]
    w = np.where(span > 0, (target - s[j]) / np.where(span > 0, span, 1.0), 0.0)
    out = U[j] * (1 - w)[:, None] + U[j + 1] * w[:, None]
    out[0], out[-1] = U[0], U[-1]
    return out


def _deform_path(p: _Problem, e: np.ndarray, cfg: SolverConfig):
    """String-method descent of the discretized segment ``[0, e]``."""
    P = cfg.path_points
    U = np.linspace(0.0, 1.0, P)[:, None] * e[None, :]
    E = _energies(p, U)
    best = float(E.max())
    step = cfg.mp_step
    stall = 0
    sweeps = 0
    for sweeps in range(1, cfg.mp_sweeps + 1):
        inner = U[1:-1]
        R = (p.L @ inner.T).T + inner * p.h - log_nonlinearity(inner)
        G = p.riesz_solve((R * p.mu).T).T
        gnorm = np.sqrt(np.maximum(np.sum(R * p.mu * G, axis=1), 0.0))
        KI = (p.K @ inner.T).T
        node = np.sqrt(np.maximum(np.sum(inner * KI, axis=1) + (inner * inner) @ (p.mu * p.h), 0.0))
        move = np.where(gnorm > 0, step * node / np.where(gnorm > 0, gnorm, 1.0), 0.0)
        U[1:-1] = inner - move[:, None] * G
        U = _reparametrize(U, p.mu)
        E = _energies(p, U)
        top = float(E.max())
        if top < best - 1e-13 * abs(best):
            best = top
            stall = 0
        else:
            stall += 1
            if stall >= 3:
                step *= 0.5
                stall = 0
        if step < 1e-5:
            break
    return U, E, sweeps


def solve_mountain_pass(p: _Problem, e, cfg: SolverConfig | None = None) -> Solution:
    """Mountain-pass critical point over paths from 0 to ``e`` (``E(e) < 0``).

    The segment ``[0, e]`` is discretized into ``cfg.path_points`` nodes.
    Interior nodes take normalized steps of length ``mp_step * ||node||``
    along the Riesz gradient, followed by equal-arclength reparametrization
    (a string method).  The step halves whenever the path maximum stops
    decreasing.  The highest node is projected onto the Nehari set and
    polished with Newton.
    """
    cfg = cfg or SolverConfig()
    e = _as_array(p, e)
    if not p.energy_vec(e) < 0:
        raise ValueError("mountain-pass endpoint must have negative energy")
    initial_max = float(np.max(_energies(p, np.linspace(0.0, 1.0, cfg.path_points)[:, None]
                                          * e[None, :])))
    total = 0
    for _ in range(_MP_RESTARTS):
        U, E, sweeps = _deform_path(p, e, cfg)
        total += sweeps
        i = int(np.argmax(E))
        j = int(np.argmax(E < 0))  # first node below zero
        if j <= 2:
            # the pass is resolved by at most one node; any node below zero
            # is itself an admissible endpoint, so restart on the shorter path
            e = U[j].copy()
            continue
        break
    x = U[i]
    if i in (0, len(U) - 1) or E[i] <= 0 or p.l2sq(x) == 0:
        raise PathCollapse("path maximum is not an interior node with positive energy")
    x = p.nehari_scale(x) * x
    x, polish, ok = _newton(p, x, cfg)
    sol = _solution(p, x, total + polish, "mountain-pass", ok, cfg)
    sol.initial_path_max = initial_max
    return sol


def negative_endpoint(p: _Problem, u) -> np.ndarray:
    """Scale ``u`` so that ``E(t u) < 0``: ``log t^2 = 2 E(u)/||u||_2^2 + 2``."""
    x = _as_array(p, u)
    m = p.l2sq(x)
    if m == 0:
        raise ZeroFunction("cannot scale the zero function")
    logt2 = max(2.0 * p.energy_vec(x) / m, 0.0) + 2.0
    return math.exp(0.5 * logt2) * x


def _random_start(rng: np.random.Generator, n: int) -> np.ndarray:
    mag = 10.0 ** rng.uniform(START_LOG10[0], START_LOG10[1], n)
    sign = rng.choice(np.array([-1.0, 1.0]), n)
    return sign * mag


def _distinct(x, others, mu) -> bool:
    nx = math.sqrt(float(mu @ (x * x)))
    thresh = DISTINCT_RTOL * (1.0 + nx)
    for y in others:
        dm = math.sqrt(float(mu @ ((x - y) ** 2)))
        dp = math.sqrt(float(mu @ ((x + y) ** 2)))
        if min(dm, dp) <= thresh:
            return False
    return True


def _harvest(p: _Problem, known_x: list, cfg: SolverConfig) -> tuple[list, int]:
    """New sign-normalized roots reached from ``cfg.n_starts`` seeded starts.

    Each start is re-solved with every newly found root deflated until it
    fails, so one start can yield several solutions.
    """
    inner = replace(cfg, max_halvings=min(cfg.max_halvings, _DEFLATED_HALVINGS))
    rng = np.random.default_rng(cfg.seed)
    found: list[np.ndarray] = []
    total_it = 0
    for _ in range(cfg.n_starts):
        x0 = _random_start(rng, p.n)
        x0 = p.nehari_scale(x0) * x0
        while True:
            pool = known_x + found
            roots = [np.zeros(p.n)] + pool + [-y for y in pool]
            defl = _Deflation(roots, p.mu, cfg.deflation_power, cfg.deflation_shift)
            try:
                x, it, ok = _newton(p, x0, inner, defl)
            except SingularJacobian:
                break
            total_it += it
            if not ok or p.l2sq(x) < 1e-20:
                break
            x = sign_normalize(x)
            if not _distinct(x, pool, p.mu):
                break
            found.append(x)
    found.sort(key=lambda y: (p.energy_vec(y), tuple(y)))
    return found, total_it


def solve_deflated(p: _Problem, known: list, cfg: SolverConfig | None = None) -> Solution:
    """A converged nontrivial solution distinct (up to sign) from every known one.

    ``cfg.n_starts`` random starts (scaled onto the Nehari set) are run
    through Newton on the deflated residual ``M(u) R(u)``, where the zero
    function, all known solutions and their negatives are deflated.  After a
    start converges to a new solution it is deflated too and the same start
    is tried again.  Of all new solutions the one of lowest energy is
    returned, sign-normalized.
    """
    cfg = cfg or SolverConfig(method="deflated")
    known_x = [sign_normalize(_as_array(p, s.u if isinstance(s, Solution) else s)) for s in known]
    found, total_it = _harvest(p, known_x, cfg)
    if not found:
        raise NoNewSolution(f"no new solution from {cfg.n_starts} deflated starts")
    return _solution(p, found[0], total_it, "deflated", True, cfg)


def find_solutions(p: _Problem, cfg: SolverConfig | None = None, limit: int | None = None) -> list[Solution]:
    """Every solution one deflated sweep finds, in increasing energy.

    Equivalent to repeated :func:`solve_deflated` calls whenever one sweep
    reaches the lower solutions first, but costs a single sweep.
    """
    cfg = cfg or SolverConfig(method="deflated")
    found, total_it = _harvest(p, [], cfg)
    if limit is not None:
        found = found[:limit]
    return [_solution(p, x, total_it, "deflated", True, cfg) for x in found]


def solve(p: _Problem, cfg: SolverConfig, u0=None, known=()) -> Solution:
    """Dispatch on ``cfg.method`` with the default spike start."""
    if cfg.method == "deflated":
        return solve_deflated(p, list(known), cfg)
    x0 = default_start(p) if u0 is None else _as_array(p, u0)
    if cfg.method == "newton":
        return solve_newton(p, x0, cfg)
    if cfg.method == "nehari":
        return solve_nehari(p, x0, cfg)
    return solve_mountain_pass(p, negative_endpoint(p, x0), cfg)


def certify(p: _Problem, s: Solution, ledger: ConstantsLedger) -> Certificate:
    """Recheck a solution against the critical-point identities and ledger floors."""
    x = s.values if s.values is not None else p.to_array(s.u)
    E = p.energy_vec(x)
    rn = p.residual_norm(x)
    nsq = p.norm_sq(x)
    ub = None if ledger.uniform_bound is None else bool(nsq <= ledger.uniform_bound)
    return Certificate(
        residual_ok=bool(rn <= s.tol),
        residual_norm=rn,
        energy_identity_gap=abs(E - 0.5 * p.l2sq(x)),
        nontriviality_ok=bool(nsq >= ledger.nontriviality_theta),
        norm_sq=nsq,
        mp_floor_ok=bool(E >= ledger.mp_level_floor),
        nehari_gap=p.nehari_gap_vec(x),
        sup_abs=float(np.max(np.abs(x))) if x.size else 0.0,
        uniform_bound_ok=ub,
    )


__all__ = [
    "SolverConfig", "Solution", "Certificate", "solve_newton", "solve_nehari",
    "solve_mountain_pass", "solve_deflated", "find_solutions", "certify", "solve",
    "default_start", "negative_endpoint", "sign_normalize", "LocalProblem",
]
