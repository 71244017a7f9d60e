"""Energies of the logarithmic Schrodinger equation and their derivatives.

Both the Dirichlet problem on a ball and the (truncated) global problem
share one energy,

    E(u) = 1/2 int |grad u|^2 + 1/2 int (h + 1) u^2 - 1/2 int u^2 log u^2,

and one residual ``R(u) = -Delta u + h u - u log u^2``; they differ in the
admissible potentials (``h > 0`` versus ``h > -1``) and in the norm used by
the certificates (``H`` versus ``W``).  Values ``u^2 log u^2`` and
``u log u^2`` are taken to be 0 at ``u = 0``.  E and R are continuous
there, but R is not differentiable at ``u(x) = 0``.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Mapping
from dataclasses import asdict, dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg  # noqa: F401  (sp.linalg)

from .errors import (
    InvalidEpsilon,
    NonpositivePotential,
    NonzeroBoundary,
    PotentialBelowMinusOne,
    SupportOutsideTruncation,
    ZeroFunction,
    GraphError,
)
from .graph_core import Domain, Graph, VertexFunction, vertex_key
from .spaces import PotentialSpec, embedding_constant

U_FLOOR = 1e-150
_DENSE_LIMIT = 64  # below this size dense products beat sparse ones
DEFAULT_EPSILON = 0.5


def log_nonlinearity(t):
    """``t log t^2`` with the value 0 at ``t = 0``; works elementwise on arrays."""
    t = np.asarray(t, dtype=float)
    out = t * _log_sq(t)
    return out if out.ndim else float(out)


def _log_sq(x):
    """``log x^2`` with 0 where ``x == 0``."""
    a = np.abs(x)
    lg = np.zeros_like(a)
    np.log(a, out=lg, where=a > 0)
    return 2.0 * lg


def _u2logu2(x):
    x = np.asarray(x, dtype=float)
    return x * x * _log_sq(x)


def _ratio_in_log(s: float, eps: float) -> float:
    # t^2 |log t^2| / (t^(2-eps) + t^(2+eps)) with t = e^s
    return 2.0 * abs(s) / (math.exp(-eps * s) + math.exp(eps * s))


def c_eps(epsilon: float) -> float:
    """Certified upper bound for ``sup_t t^2|log t^2| / (|t|^(2-eps) + |t|^(2+eps))``.

    In ``s = log t`` the ratio is ``|s| / cosh(eps s)``; each half-line has one
    interior maximizer where ``eps s tanh(eps s) = 1``.  Both are bracketed by
    bisection on the sign of the derivative, starting from ``[0, 2/eps]``.
    The returned value adds the first-order slack of the final bracket and a
    few ulps, so it is >= the true supremum and within 1e-12 of it.
    """
    eps = float(epsilon)
    if not (0.0 < eps <= 1.0):
        raise InvalidEpsilon(f"epsilon = {epsilon} must lie in (0, 1]")
    envelope = 2.0 / (math.e * eps)

    def slope_sign(s):  # sign of d/ds of the ratio on the half-line of s
        a = abs(s)
        return 1.0 - eps * a * math.tanh(eps * a)

    best = 0.0
    for side in (-1.0, 1.0):
        lo, hi = 0.0, 2.0 / eps
        while hi - lo > 4 * math.ulp(hi):
            mid = 0.5 * (lo + hi)
            if slope_sign(mid) > 0:
                lo = mid
            else:
                hi = mid
        vals = [_ratio_in_log(side * lo, eps), _ratio_in_log(side * hi, eps)]
        # the ratio is 1-Lipschitz in s
        slack = hi - lo
        best = max(best, max(vals) + slack)
    bound = best * (1.0 + 8 * np.finfo(float).eps)
    if not bound <= envelope:
        raise ArithmeticError("C_eps exceeded its analytic envelope 2/(e eps)")
    return bound


class _Problem:
    """Shared array machinery.  ``unknowns`` fixes the coordinate order."""

    kind = "abstract"

    def __init__(self, graph: Graph, potential: PotentialSpec, unknowns, epsilon: float):
        if not (0.0 < float(epsilon) < 1.0):
            raise InvalidEpsilon(f"epsilon = {epsilon} must lie in (0, 1)")
        self.graph = graph
        self.potential = potential
        self.epsilon = float(epsilon)
        self.unknowns = tuple(unknowns)
        self._pos = {x: i for i, x in enumerate(self.unknowns)}
        self.mu = np.array([graph.mu(x) for x in self.unknowns])
        self.h = potential.evaluate(graph, self.unknowns)
        self.K = graph.stiffness(self.unknowns)
        self.L = sp.diags(1.0 / self.mu) @ self.K  # -Delta on the unknowns
        self.L = self.L.tocsr()
        self._lu = None
        self._L_dense = None
        self._fingerprint = None

    # -- coordinates ---------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.unknowns)

    def to_array(self, u: Mapping) -> np.ndarray:
        for x, v in u.items():
            if v != 0.0 and x not in self._pos:
                self._outside(x, v)
        return np.array([u.get(x, 0.0) for x in self.unknowns], dtype=float)

    def _outside(self, x, v):
        raise NonzeroBoundary(f"u({x!r}) = {v} outside the unknowns")

    def to_function(self, arr) -> VertexFunction:
        return VertexFunction.from_array(self.unknowns, arr)

    def spike(self, x=None, value: float = 1.0) -> np.ndarray:
        """Indicator of one vertex (the center by default) as a coordinate array."""
        x = self.center if x is None else x
        out = np.zeros(self.n)
        out[self._pos[x]] = value
        return out

    @property
    def center(self):
        return self.unknowns[0]

    # -- energies ------------------------------------------------------------
    def quad(self, x) -> float:
        """``int |grad u|^2 + int h u^2`` (may be negative when h is)."""
        return float(x @ (self.K @ x) + np.dot(self.mu * self.h, x * x))

    def l2sq(self, x) -> float:
        return float(np.dot(self.mu, x * x))

    def logmass(self, x) -> float:
        """``int u^2 log u^2``."""
        return float(np.dot(self.mu, _u2logu2(x)))

    def energy_vec(self, x) -> float:
        return 0.5 * (self.quad(x) + self.l2sq(x) - self.logmass(x))

    def norm_sq(self, x) -> float:
        """Squared certificate norm (``H`` for local, ``W`` for global problems)."""
        raise NotImplementedError

    def residual_vec(self, x) -> np.ndarray:
        if self.n <= _DENSE_LIMIT:
            if self._L_dense is None:
                self._L_dense = self.L.toarray()
            Lx = self._L_dense @ x
        else:
            Lx = self.L @ x
        return Lx + self.h * x - log_nonlinearity(x)

    def residual_norm(self, x) -> float:
        """``sup_x mu(x) |R(u)(x)|``."""
        if self.n == 0:
            return 0.0
        return float(np.max(self.mu * np.abs(self.residual_vec(x))))

    def nehari_gap_vec(self, x) -> float:
        """``|<E'(u), u>|`` = ``|quad(u) - int u^2 log u^2|``."""
        return abs(self.quad(x) - self.logmass(x))

    def jacobian_vec(self, x) -> sp.csr_matrix:
        a = np.maximum(np.abs(x), U_FLOOR)
        diag = self.h - (2.0 * np.log(a) + 2.0)
        return (self.L + sp.diags(diag)).tocsr()

    def jacobian_dense(self, x) -> np.ndarray:
        """Dense copy of :meth:`jacobian_vec` (cached operator part)."""
        if self._L_dense is None:
            self._L_dense = self.L.toarray()
        a = np.maximum(np.abs(x), U_FLOOR)
        J = self._L_dense.copy()
        J[np.diag_indices_from(J)] += self.h - (2.0 * np.log(a) + 2.0)
        return J

    def nehari_scale(self, x) -> float:
        """t > 0 with ``<E'(t u), t u> = 0``."""
        m = self.l2sq(x)
        if not m > 0:
            raise ZeroFunction("the zero function has no Nehari projection")
        return math.exp(0.5 * (self.quad(x) - self.logmass(x)) / m)

    def riesz_solve(self, rhs) -> np.ndarray:
        """Solve ``(K + diag(mu (h + 1))) g = rhs``; rhs may be (n,) or (n, m)."""
        if self._lu is None:
            A = (self.K + sp.diags(self.mu * (self.h + 1.0))).tocsc()
            self._lu = sp.linalg.splu(A)
        return self._lu.solve(np.asarray(rhs, dtype=float))

    def coercive_min(self) -> float:
        raise NotImplementedError

    @property
    def mu_min(self) -> float:
        return float(self.mu.min())

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            sha = hashlib.sha256()
            sha.update(self.kind.encode())
            sha.update("\x1f".join(vertex_key(x) for x in self.unknowns).encode())
            K = self.K.tocoo()
            for arr in (self.mu, self.h, K.row, K.col, K.data):
                sha.update(np.ascontiguousarray(arr).tobytes())
            self._fingerprint = sha.hexdigest()[:16]
        return self._fingerprint


class LocalProblem(_Problem):
    """Dirichlet problem ``-Delta u + h u = u log u^2`` in a domain, ``u = 0`` on its boundary."""

    kind = "local"

    def __init__(self, graph: Graph, domain: Domain, potential: PotentialSpec,
                 epsilon: float = DEFAULT_EPSILON):
        if set(domain.closure) & graph.incomplete:
            raise GraphError("domain closure reaches the materialization rim")
        super().__init__(graph, potential, domain.interior, epsilon)
        self.domain = domain
        if np.any(self.h <= 0):
            i = int(np.argmin(self.h))
            raise NonpositivePotential(f"h({self.unknowns[i]!r}) = {self.h[i]} <= 0 on the domain")

    @property
    def center(self):
        c = self.domain.center
        return c if c in self._pos else self.unknowns[0]

    def norm_sq(self, x) -> float:
        return self.quad(x)

    def coercive_min(self) -> float:
        return float(self.h.min())


class GlobalProblem(_Problem):
    """``-Delta u + h u = u log u^2`` on a finite graph or on a stated truncation.

    With ``truncation=None`` the unknowns are all vertices of a finite graph.
    Otherwise functions are supported in ``truncation.interior`` and vanish
    elsewhere.
    """

    kind = "global"

    def __init__(self, graph: Graph, potential: PotentialSpec, truncation: Domain | None = None,
                 epsilon: float = DEFAULT_EPSILON):
        if truncation is None:
            if graph.incomplete:
                raise GraphError("a materialized graph needs an explicit truncation")
            unknowns = graph.vertices
        else:
            if set(truncation.closure) & graph.incomplete:
                raise GraphError("truncation closure reaches the materialization rim")
            unknowns = truncation.interior
        super().__init__(graph, potential, unknowns, epsilon)
        self.truncation = truncation
        if np.any(self.h <= -1):
            i = int(np.argmin(self.h))
            raise PotentialBelowMinusOne(f"h({self.unknowns[i]!r}) = {self.h[i]} <= -1")

    @property
    def center(self):
        if self.truncation is not None and self.truncation.center in self._pos:
            return self.truncation.center
        return self.graph.origin if self.graph.origin in self._pos else self.unknowns[0]

    def _outside(self, x, v):
        raise SupportOutsideTruncation(f"u({x!r}) = {v} outside the truncation")

    def norm_sq(self, x) -> float:
        return self.quad(x) + self.l2sq(x)

    def coercive_min(self) -> float:
        return float((self.h + 1.0).min())


# -- public operations on vertex functions --------------------------------------

def energy_local(p: LocalProblem, u: Mapping) -> float:
    """``1/2 ||u||_H^2 + 1/2 int u^2 - 1/2 int u^2 log u^2`` on the ball."""
    return p.energy_vec(p.to_array(u))


def energy_global(p: GlobalProblem, u: Mapping) -> float:
    return p.energy_vec(p.to_array(u))


def energy(p: _Problem, u: Mapping) -> float:
    return p.energy_vec(p.to_array(u))


def residual(p: _Problem, u: Mapping) -> VertexFunction:
    """``-Delta u + h u - u log u^2`` at every unknown vertex."""
    return p.to_function(p.residual_vec(p.to_array(u)))


def energy_gradient_pairing(p: _Problem, u: Mapping, v: Mapping) -> float:
    """``<E'(u), v> = int R(u) v dmu`` for ``v`` supported in the unknowns."""
    r = p.residual_vec(p.to_array(u))
    return math.fsum(p.mu * r * p.to_array(v))


def jacobian(p: _Problem, u: Mapping) -> sp.csr_matrix:
    """Derivative of the residual in the order of ``p.unknowns``.

    Off-diagonal ``-w_xy / mu(x)``; diagonal ``sum_y w_xy / mu(x) + h(x) -
    (log u(x)^2 + 2)`` with ``|u(x)|`` floored at ``U_FLOOR`` inside the log.
    The operator is self-adjoint for the mu-weighted inner product.
    """
    return p.jacobian_vec(p.to_array(u))


def nehari_projection(p: _Problem, u: Mapping) -> float:
    """The t* > 0 placing ``t* u`` on the Nehari set:
    ``log t*^2 = (||u||^2 - int u^2 log u^2) / ||u||_2^2``."""
    return p.nehari_scale(p.to_array(u))


@dataclass(frozen=True)
class ConstantsLedger:
    """Explicit constants behind the runtime certificates.

    ``mp_radius = (1 / (2 C_eps C_embed_2plus))^(1/eps)``,
    ``mp_level_floor = mp_radius^2 / 4`` and ``nontriviality_theta =
    (C_eps C_embed_2plus)^(-2/eps) / 2``.  ``h0`` is the positive lower bound
    of the coercive weight (h for local problems, h + 1 for global ones).
    """

    epsilon: float
    C_eps: float
    C_embed_2plus: float
    mp_radius: float
    mp_level_floor: float
    nontriviality_theta: float
    uniform_bound: float | None
    h0: float
    mu_min: float
    norm: str

    def with_uniform_bound(self, value: float) -> "ConstantsLedger":
        return replace(self, uniform_bound=float(value))

    def to_json(self) -> dict:
        return asdict(self)


def make_ledger(epsilon: float, h0: float, mu_min: float, norm: str = "H") -> ConstantsLedger:
    ce = c_eps(epsilon)
    cm = embedding_constant(h0, mu_min, 2.0 + epsilon)
    r = (1.0 / (2.0 * ce * cm)) ** (1.0 / epsilon)
    theta = 0.5 * (ce * cm) ** (-2.0 / epsilon)
    return ConstantsLedger(
        epsilon=float(epsilon), C_eps=float(ce), C_embed_2plus=float(cm), mp_radius=float(r),
        mp_level_floor=float(r * r / 4.0), nontriviality_theta=float(theta), uniform_bound=None,
        h0=float(h0), mu_min=float(mu_min), norm=norm,
    )


def constants_ledger(p: _Problem) -> ConstantsLedger:
    """Constants for ``p`` at its epsilon; never shared between problems."""
    return make_ledger(p.epsilon, p.coercive_min(), p.mu_min,
                       "H" if isinstance(p, LocalProblem) else "W")
