"""Norms, the H(Omega) -> L^q embedding constant and potential hypotheses."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .errors import (
    GraphError,
    InvalidExponent,
    MalformedFile,
    MissingAlpha,
    NonpositivePotential,
    NonzeroBoundary,
    PotentialBelowMinusOne,
    UnknownVertex,
)
from .graph_core import Domain, Graph, Lattice, gradient_pair, vertex_key

POSITIVE = "positive"
SIGN_CHANGING = "sign-changing"

HOLDS = "holds"
HOLDS_ON_TRUNCATION = "holds-on-truncation"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"

_FORMULA_DEFAULTS = {
    "constant": {"value": 1.0},
    "quadratic": {"a": 1.0, "c": 1.0},
    "well": {"inside": -0.5, "radius": 0, "a": 1.0, "p": 2.0, "c": 0.0},
}


@dataclass(frozen=True)
class PotentialSpec:
    """A potential h: V -> R, either tabulated or a named radial formula.

    Formula families, with rho the edge distance to ``params['center']``
    (default: the graph origin):

    * ``constant``  -- ``value``
    * ``quadratic`` -- ``a * rho^2 + c``
    * ``well``      -- ``inside`` for ``rho <= radius``, else ``a * rho^p + c``
    """

    kind: str
    name: str = ""
    params: Mapping[str, Any] = field(default_factory=dict)
    values: Mapping[Any, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("table", "formula"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "formula" and self.name not in _FORMULA_DEFAULTS:
            raise ValueError(f"unknown potential formula {self.name!r}")

    @classmethod
    def constant(cls, value: float) -> "PotentialSpec":
        return cls("formula", "constant", {"value": float(value)})

    @classmethod
    def quadratic(cls, a: float = 1.0, c: float = 1.0, center=None) -> "PotentialSpec":
        params = {"a": a, "c": c}
        if center is not None:
            params["center"] = center
        return cls("formula", "quadratic", params)

    @classmethod
    def well(cls, inside: float, radius: int, a=1.0, p=2.0, c=0.0, center=None) -> "PotentialSpec":
        params = {"inside": inside, "radius": radius, "a": a, "p": p, "c": c}
        if center is not None:
            params["center"] = center
        return cls("formula", "well", params)

    @classmethod
    def table(cls, values: Mapping, default: float | None = None) -> "PotentialSpec":
        params = {} if default is None else {"default": float(default)}
        return cls("table", "table", params, dict(values))

    def evaluate(self, g: Graph, vertices: Iterable) -> np.ndarray:
        """h at each of ``vertices`` (all must belong to ``g``)."""
        vertices = list(vertices)
        if self.kind == "table":
            default = self.params.get("default")
            out = []
            for x in vertices:
                g.index(x)
                if x in self.values:
                    out.append(float(self.values[x]))
                elif vertex_key(x) in self.values:
                    out.append(float(self.values[vertex_key(x)]))
                elif default is not None:
                    out.append(default)
                else:
                    raise UnknownVertex(f"potential table has no value for {x!r}")
            return np.array(out, dtype=float)
        p = dict(_FORMULA_DEFAULTS[self.name])
        p.update(self.params)
        if self.name == "constant":
            for x in vertices:
                g.index(x)
            return np.full(len(vertices), float(p["value"]))
        center = p.get("center", g.origin)
        dist = g.distances(_resolve(g, center))
        for x in vertices:
            g.index(x)
        rho = np.array([dist[x] for x in vertices], dtype=float)
        if self.name == "quadratic":
            return p["a"] * rho**2 + p["c"]
        outside = p["a"] * rho ** p["p"] + p["c"]
        return np.where(rho <= p["radius"], float(p["inside"]), outside)

    def at(self, g: Graph, x) -> float:
        return float(self.evaluate(g, [x])[0])

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "params": {k: (vertex_key(v) if k == "center" else v) for k, v in self.params.items()},
            "values": {vertex_key(x): float(v) for x, v in self.values.items()},
        }

    @classmethod
    def from_json(cls, doc: Any, source: str = "<potential>") -> "PotentialSpec":
        if not isinstance(doc, dict):
            raise MalformedFile(f"{source}: top level must be an object")
        kind = doc.get("kind")
        if kind not in ("table", "formula"):
            raise MalformedFile(f"{source}: field 'kind' must be 'table' or 'formula'")
        params = doc.get("params", {}) or {}
        values = doc.get("values", {}) or {}
        if not isinstance(params, dict) or not isinstance(values, dict):
            raise MalformedFile(f"{source}: 'params' and 'values' must be objects")
        for key, v in values.items():
            if not isinstance(v, (int, float)):
                raise MalformedFile(f"{source}: values[{key!r}] must be a number")
        name = doc.get("name", "table" if kind == "table" else "")
        try:
            return cls(kind, name, dict(params), {str(k): float(v) for k, v in values.items()})
        except ValueError as exc:
            raise MalformedFile(f"{source}: field 'name': {exc}") from None

    @classmethod
    def parse(cls, text: str) -> "PotentialSpec":
        """Inline form ``name:key=val,...``; ``table:v0=1,v1=2`` for tables."""
        name, _, rest = text.partition(":")
        kv = {}
        for item in filter(None, rest.split(",")):
            key, eq, val = item.partition("=")
            if not eq:
                if name == "constant" and not kv:
                    kv["value"] = float(key)
                    continue
                raise ValueError(f"cannot parse potential spec {text!r}")
            kv[key.strip()] = val.strip()
        if name == "table":
            default = kv.pop("default", None)
            return cls.table({k: float(v) for k, v in kv.items()},
                             None if default is None else float(default))
        params = {}
        for k, v in kv.items():
            params[k] = v if k == "center" else float(v)
        return cls("formula", name, params)


def _resolve(g: Graph, center):
    if center in g:
        return center
    for x in g.vertices:
        if vertex_key(x) == str(center):
            return x
    raise UnknownVertex(f"potential center {center!r} is not a vertex")


def norm_Lq(g: Graph, u: Mapping, q: float) -> float:
    """``(sum mu |u|^q)^(1/q)``, or ``sup |u|`` for ``q = inf``."""
    q = _exponent(q, 1.0)
    if math.isinf(q):
        return max((abs(v) for v in u.values()), default=0.0)
    s = math.fsum(g.mu(x) * abs(v) ** q for x, v in u.items())
    return s ** (1.0 / q)


def _exponent(q, lowest):
    if isinstance(q, str) and q.lower() in ("inf", "infinity"):
        return math.inf
    q = float(q)
    if math.isnan(q) or q < lowest:
        raise InvalidExponent(f"exponent {q} must be >= {lowest} or inf")
    return q


def _vanishes_off(u: Mapping, inside: Iterable, what: str):
    inside = set(inside)
    for x, v in u.items():
        if v != 0.0 and x not in inside:
            raise NonzeroBoundary(f"u({x!r}) = {v} but u must vanish outside {what}")


def norm_H_domain(g: Graph, d: Domain, u: Mapping, h: PotentialSpec) -> float:
    """``(int_{closure} |grad u|^2 + int_{interior} h u^2)^(1/2)``.

    ``u`` must vanish off the interior of ``d`` and ``h`` must be positive there.
    """
    _vanishes_off(u, d.interior, "the domain interior")
    hv = h.evaluate(g, d.interior)
    if np.any(hv <= 0):
        x = d.interior[int(np.argmin(hv))]
        raise NonpositivePotential(f"h({x!r}) = {hv.min()} <= 0 on the domain")
    grad = math.fsum(g.mu(x) * gradient_pair(g, u, u, x) for x in d.closure)
    pot = math.fsum(g.mu(x) * hx * u.get(x, 0.0) ** 2 for x, hx in zip(d.interior, hv))
    return math.sqrt(grad + pot)


def norm_W(g: Graph, u: Mapping, h: PotentialSpec) -> float:
    """``(int |grad u|^2 + (h + 1) u^2)^(1/2)`` for finitely supported ``u``.

    The gradient term is summed over the support and its neighbors, which is
    everything that contributes.
    """
    support = [x for x, v in u.items() if v != 0.0]
    region = dict.fromkeys(support)
    for x in support:
        for y, _ in g.neighbors(x):
            region.setdefault(y)
    region = list(region)
    if set(region) & g.incomplete:
        raise GraphError("support of u reaches the materialization rim")
    hv = h.evaluate(g, support)
    if np.any(hv <= -1):
        x = support[int(np.argmin(hv))]
        raise PotentialBelowMinusOne(f"h({x!r}) = {hv.min()} <= -1")
    grad = math.fsum(g.mu(x) * gradient_pair(g, u, u, x) for x in region)
    pot = math.fsum(g.mu(x) * (hx + 1.0) * u[x] ** 2 for x, hx in zip(support, hv))
    return math.sqrt(grad + pot)


def embedding_constant(h0: float, mu_min: float, q: float) -> float:
    """C with ``||u||_{q,Omega} <= C ||u||_{H(Omega)}`` when ``h >= h0``, ``mu >= mu_min``.

    ``h0^(-1/2) mu_min^((2-q)/(2q))`` for finite q >= 2, ``(h0 mu_min)^(-1/2)`` for q = inf.
    """
    q = _exponent(q, 2.0)
    if not (h0 > 0 and mu_min > 0):
        raise ValueError("h0 and mu_min must be positive")
    if math.isinf(q):
        return (h0 * mu_min) ** -0.5
    return h0**-0.5 * mu_min ** ((2.0 - q) / (2.0 * q))


@dataclass
class HypothesisReport:
    mode: str
    h0_or_h1: float
    inverse_integral: float
    V_alpha_volume: float
    radius_checked: int
    verdicts: dict
    witnesses: dict = field(default_factory=dict)
    alpha: float | None = None
    tail_exponent: float | None = None

    @property
    def violated(self) -> bool:
        return VIOLATED in self.verdicts.values()

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "h0_or_h1": self.h0_or_h1,
            "inverse_integral": None if math.isnan(self.inverse_integral) else self.inverse_integral,
            "V_alpha_volume": self.V_alpha_volume,
            "radius_checked": self.radius_checked,
            "alpha": self.alpha,
            "tail_exponent": self.tail_exponent,
            "verdicts": dict(self.verdicts),
            "witnesses": {k: vertex_key(v) for k, v in self.witnesses.items()},
        }


def _tail_exponent(layers: list[tuple[int, float]]) -> float | None:
    """Decay exponent p of the last two radial layer sums, ``c_rho ~ rho^(-p)``."""
    pts = [(r, c) for r, c in layers if r > 0]
    if len(pts) < 2:
        return None
    (r1, c1), (r2, c2) = pts[-2], pts[-1]
    if c2 <= 0:
        return math.inf
    if c1 <= 0:
        return -math.inf
    return -math.log(c2 / c1) / math.log(r2 / r1)


def check_hypotheses(
    gen: Graph | Lattice,
    h: PotentialSpec,
    mode: str,
    radius: int,
    alpha: float | None = None,
    center=None,
) -> HypothesisReport:
    """Evaluate the potential hypotheses on the ball ``{rho < radius}``.

    Positive mode checks ``h >= h0 > 0`` (``h1``) and integrability of 1/h
    (``h2``).  Sign-changing mode checks ``inf h > -1`` (``h1_prime``) and
    integrability of 1/h off ``V_alpha = {h <= alpha}`` together with the
    volume of ``V_alpha`` (``h2_prime``).

    On an infinite generator integrability can only be observed on the
    truncation: the verdict is ``holds-on-truncation`` when the radial layer
    sums decay faster than ``rho^-1.05`` and ``inconclusive`` otherwise.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if mode not in (POSITIVE, SIGN_CHANGING):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == SIGN_CHANGING and alpha is None:
        raise MissingAlpha("sign-changing mode needs alpha > 0")
    if alpha is not None and not alpha > 0:
        raise MissingAlpha("alpha must be positive")

    g = gen.materialize(center, radius)
    center = g.origin if center is None else center
    dist = g.distances(center)
    verts = [x for x in g.vertices if dist.get(x, radius) < radius]
    covers_all = len(verts) == len(g) and not g.incomplete
    hv = h.evaluate(g, verts)
    mu = np.array([g.mu(x) for x in verts])
    imin = int(np.argmin(hv))
    hmin = float(hv[imin])
    full = HOLDS if covers_all else HOLDS_ON_TRUNCATION

    verdicts, witnesses = {}, {}
    if hmin > -1:
        verdicts["above_minus_one"] = full
    else:
        verdicts["above_minus_one"] = VIOLATED
        witnesses["above_minus_one"] = verts[imin]

    if mode == POSITIVE:
        mask = np.ones(len(verts), dtype=bool)
        if hmin > 0:
            verdicts["h1"] = full
        else:
            verdicts["h1"] = VIOLATED
            witnesses["h1"] = verts[imin]
        key = "h2"
        vol = 0.0
    else:
        if hmin > -1:
            verdicts["h1_prime"] = full
        else:
            verdicts["h1_prime"] = VIOLATED
            witnesses["h1_prime"] = verts[imin]
        in_alpha = hv <= alpha
        mask = ~in_alpha
        vol = math.fsum(mu[in_alpha])
        key = "h2_prime"

    with np.errstate(divide="ignore"):
        inv = np.where(mask, mu / np.where(hv == 0, np.nan, hv), 0.0)
    bad = mask & (hv <= 0)
    if np.any(bad):
        inverse_integral = math.nan
        verdicts[key] = VIOLATED
        witnesses[key] = verts[int(np.flatnonzero(bad)[0])]
        tail = None
    else:
        inverse_integral = math.fsum(inv)
        by_layer: dict[int, float] = {}
        for x, c in zip(verts, inv):
            by_layer[dist[x]] = by_layer.get(dist[x], 0.0) + float(c)
        tail = _tail_exponent(sorted(by_layer.items()))
        if covers_all:
            verdicts[key] = HOLDS
        else:
            decays = tail is not None and tail > 1.05
            rim_in_alpha = False
            if mode == SIGN_CHANGING:
                rim = [i for i, x in enumerate(verts) if dist[x] == radius - 1]
                rim_in_alpha = bool(np.any(in_alpha[rim]))
            verdicts[key] = HOLDS_ON_TRUNCATION if decays and not rim_in_alpha else INCONCLUSIVE

    return HypothesisReport(
        mode=mode,
        h0_or_h1=hmin,
        inverse_integral=inverse_integral,
        V_alpha_volume=vol,
        radius_checked=radius,
        verdicts=verdicts,
        witnesses=witnesses,
        alpha=alpha,
        tail_exponent=tail,
    )
