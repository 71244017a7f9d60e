"""Weighted measured graphs and their discrete calculus.

A :class:`Graph` is finite, connected and immutable.  Infinite lattices are
handled by :class:`Lattice`, a lazy generator that materializes finite balls
on demand; every computation in the package runs on such a materialization.

Vertex ids are opaque hashables.  The iteration order of a graph is the order
in which vertices were supplied, so all sums are reproducible bit for bit.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    AsymmetricWeight,
    DisconnectedGraph,
    GraphError,
    InsufficientMaterialization,
    MalformedFile,
    NonpositiveMeasure,
    NonpositiveWeight,
    SelfLoop,
    UnknownVertex,
)

Vertex = Hashable

__all__ = [
    "Graph",
    "GraphSpec",
    "Lattice",
    "VertexFunction",
    "Domain",
    "build_graph",
    "make_domain",
    "laplacian",
    "gradient_pair",
    "gradient_length",
    "integrate",
    "ball",
    "distance",
    "vertex_key",
    "load_graph",
    "graph_to_json",
]


def vertex_key(x: Vertex) -> str:
    """String form of a vertex id, as used in JSON files."""
    if isinstance(x, tuple):
        return ",".join(str(c) for c in x)
    return str(x)


class Graph:
    """Connected, locally finite graph with symmetric weights and a vertex measure.

    Parameters
    ----------
    vertices : sequence of hashable
        Vertex ids, in the iteration order to use.
    measure : mapping or float
        ``mu(x) > 0`` per vertex, or one value for all vertices.
    edges : iterable of (a, b, w)
        Each undirected edge once.  Listing both orientations is allowed only
        if the weights agree.
    incomplete : iterable, optional
        Vertices whose neighbor lists were cut off by a finite
        materialization of a larger graph.
    origin : vertex, optional
        Default center for balls and radial potentials (first vertex if
        omitted).
    """

    def __init__(
        self,
        vertices: Sequence[Vertex],
        measure: Mapping[Vertex, float] | float,
        edges: Iterable[tuple[Vertex, Vertex, float]],
        *,
        incomplete: Iterable[Vertex] = (),
        origin: Vertex | None = None,
    ):
        self._vertices = tuple(vertices)
        if not self._vertices:
            raise GraphError("graph has no vertices")
        self._index = {x: i for i, x in enumerate(self._vertices)}
        if len(self._index) != len(self._vertices):
            raise GraphError("duplicate vertex ids")

        if isinstance(measure, Mapping):
            mu = []
            for x in self._vertices:
                if x not in measure:
                    raise NonpositiveMeasure(f"no measure given for vertex {x!r}")
                mu.append(float(measure[x]))
        else:
            mu = [float(measure)] * len(self._vertices)
        for x, m in zip(self._vertices, mu):
            if not (m > 0 and math.isfinite(m)):
                raise NonpositiveMeasure(f"mu({x!r}) = {m} is not positive")
        self._mu = np.array(mu)
        self._mu.setflags(write=False)

        weights: dict[tuple[Vertex, Vertex], float] = {}
        adj: dict[Vertex, list[tuple[Vertex, float]]] = {x: [] for x in self._vertices}
        for a, b, w in edges:
            for v in (a, b):
                if v not in self._index:
                    raise UnknownVertex(f"edge endpoint {v!r} is not a vertex")
            if a == b:
                raise SelfLoop(f"self-loop at {a!r}")
            w = float(w)
            if not (w > 0 and math.isfinite(w)):
                raise NonpositiveWeight(f"weight of edge {a!r}-{b!r} is {w}")
            if (a, b) in weights:
                if weights[(a, b)] != w:
                    raise AsymmetricWeight(
                        f"w({a!r},{b!r}) = {weights[(a, b)]} but w({b!r},{a!r}) = {w}"
                    )
                continue
            weights[(a, b)] = weights[(b, a)] = w
            adj[a].append((b, w))
            adj[b].append((a, w))
        self._weights = weights
        self._adj = {x: tuple(nb) for x, nb in adj.items()}
        self.incomplete = frozenset(incomplete)
        self.origin = self._vertices[0] if origin is None else origin
        if self.origin not in self._index:
            raise UnknownVertex(f"origin {self.origin!r} is not a vertex")
        self._dist_cache: dict[Vertex, dict[Vertex, int]] = {}

        if len(self.distances(self._vertices[0])) != len(self._vertices):
            raise DisconnectedGraph("graph is not connected")

    # -- structure -----------------------------------------------------------
    is_finite = True

    @property
    def vertices(self) -> tuple:
        return self._vertices

    def __len__(self):
        return len(self._vertices)

    def __contains__(self, x):
        return x in self._index

    def __repr__(self):
        return f"Graph(|V|={len(self)}, |E|={self.n_edges})"

    @property
    def n_edges(self) -> int:
        return len(self._weights) // 2

    @property
    def mu_min(self) -> float:
        return float(self._mu.min())

    @property
    def mu_array(self) -> np.ndarray:
        return self._mu

    def index(self, x: Vertex) -> int:
        try:
            return self._index[x]
        except (KeyError, TypeError):
            raise UnknownVertex(f"unknown vertex {x!r}") from None

    def mu(self, x: Vertex) -> float:
        return float(self._mu[self.index(x)])

    def neighbors(self, x: Vertex) -> tuple[tuple[Vertex, float], ...]:
        """``((y, w_xy), ...)`` for all ``y ~ x``."""
        try:
            return self._adj[x]
        except (KeyError, TypeError):
            raise UnknownVertex(f"unknown vertex {x!r}") from None

    def weight(self, x: Vertex, y: Vertex) -> float:
        """``w_xy``, zero when x and y are not adjacent."""
        self.index(x)
        self.index(y)
        return self._weights.get((x, y), 0.0)

    def edges(self):
        """Each undirected edge once, as ``(a, b, w)``."""
        seen = set()
        for x in self._vertices:
            for y, w in self._adj[x]:
                if (y, x) not in seen:
                    seen.add((x, y))
                    yield x, y, w

    def distances(self, center: Vertex) -> dict[Vertex, int]:
        """Breadth-first edge distance from ``center`` to every vertex (memoized)."""
        self.index(center)
        cached = self._dist_cache.get(center)
        if cached is not None:
            return cached
        dist = {center: 0}
        queue = deque([center])
        while queue:
            x = queue.popleft()
            for y, _ in self._adj[x]:
                if y not in dist:
                    dist[y] = dist[x] + 1
                    queue.append(y)
        self._dist_cache[center] = dist
        return dist

    def materialize(self, center: Vertex | None = None, radius: int | None = None) -> "Graph":
        """A finite graph is its own materialization."""
        return self

    def stiffness(self, unknowns: Sequence[Vertex]) -> sp.csr_matrix:
        """Matrix of ``u -> sum_edges w (u(y)-u(x))^2`` restricted to ``unknowns``.

        Vertices outside ``unknowns`` are held at zero, so edges leaving the
        set still contribute to the diagonal.  ``(K u)_x / mu(x) = -Delta u(x)``.
        """
        pos = {x: i for i, x in enumerate(unknowns)}
        rows, cols, vals = [], [], []
        for i, x in enumerate(unknowns):
            diag = 0.0
            for y, w in self.neighbors(x):
                diag += w
                j = pos.get(y)
                if j is not None:
                    rows.append(i)
                    cols.append(j)
                    vals.append(-w)
            rows.append(i)
            cols.append(i)
            vals.append(diag)
        n = len(unknowns)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class Lattice:
    """Lazy unit-weight, unit-measure lattice Z^d.

    Vertex ids are ints for ``dim == 1`` and int tuples otherwise.
    """

    is_finite = False

    def __init__(self, dim: int = 1):
        if dim < 1:
            raise GraphError("lattice dimension must be >= 1")
        self.dim = dim

    def __repr__(self):
        return f"Lattice(dim={self.dim})"

    @property
    def origin(self):
        return 0 if self.dim == 1 else (0,) * self.dim

    def _coords(self, x) -> tuple:
        if self.dim == 1:
            if not isinstance(x, (int, np.integer)):
                raise UnknownVertex(f"{x!r} is not a vertex of Z^1")
            return (int(x),)
        if not (isinstance(x, tuple) and len(x) == self.dim):
            raise UnknownVertex(f"{x!r} is not a vertex of Z^{self.dim}")
        return tuple(int(c) for c in x)

    def _vid(self, c: tuple):
        return c[0] if self.dim == 1 else c

    def materialize(self, center=None, radius: int = 1) -> Graph:
        """All vertices within edge distance ``radius`` of ``center``.

        Vertices at exactly ``radius`` have truncated neighborhoods and are
        recorded in ``Graph.incomplete``.
        """
        center = self.origin if center is None else center
        c0 = self._coords(center)
        offsets = sorted(
            (o for o in itertools.product(range(-radius, radius + 1), repeat=self.dim)
             if sum(abs(t) for t in o) <= radius),
            key=lambda o: (sum(abs(t) for t in o), o),
        )
        coords = [tuple(a + b for a, b in zip(c0, o)) for o in offsets]
        present = set(coords)
        edges = []
        for c in coords:
            for axis in range(self.dim):
                nb = c[:axis] + (c[axis] + 1,) + c[axis + 1:]
                if nb in present:
                    edges.append((self._vid(c), self._vid(nb), 1.0))
        rim = [self._vid(c) for c, o in zip(coords, offsets) if sum(abs(t) for t in o) == radius]
        return Graph([self._vid(c) for c in coords], 1.0, edges,
                     incomplete=rim, origin=self._vid(c0))


@dataclass(frozen=True)
class GraphSpec:
    """Description of a graph to build.

    ``kind`` is one of ``explicit``, ``path``, ``cycle``, ``lattice`` (finite
    box ``[-radius, radius]^dim``) or ``Z`` (lazy infinite lattice).
    """

    kind: str
    n: int = 0
    dim: int = 1
    radius: int = 0
    weight: float = 1.0
    mu_default: float = 1.0
    vertices: tuple = ()
    measure: Mapping | None = None
    edges: tuple = ()
    origin: Any = None

    @classmethod
    def parse(cls, text: str) -> "GraphSpec":
        """Parse ``path:N``, ``cycle:N``, ``lattice:D:R`` or ``Z:D``."""
        parts = text.split(":")
        try:
            if parts[0] in ("path", "cycle") and len(parts) == 2:
                return cls(kind=parts[0], n=int(parts[1]))
            if parts[0] == "lattice" and len(parts) == 3:
                return cls(kind="lattice", dim=int(parts[1]), radius=int(parts[2]))
            if parts[0] == "Z" and len(parts) in (1, 2):
                return cls(kind="Z", dim=int(parts[1]) if len(parts) == 2 else 1)
        except ValueError:
            pass
        raise GraphError(f"cannot parse graph spec {text!r}")


def build_graph(spec: GraphSpec) -> Graph:
    """Build and validate a finite graph from ``spec``."""
    w, m = spec.weight, spec.mu_default
    if spec.kind == "path":
        if spec.n < 1:
            raise GraphError("path needs n >= 1")
        vs = [f"v{i}" for i in range(spec.n)]
        return Graph(vs, m, [(vs[i], vs[i + 1], w) for i in range(spec.n - 1)])
    if spec.kind == "cycle":
        if spec.n < 3:
            raise GraphError("cycle needs n >= 3")
        vs = [f"v{i}" for i in range(spec.n)]
        return Graph(vs, m, [(vs[i], vs[(i + 1) % spec.n], w) for i in range(spec.n)])
    if spec.kind == "lattice":
        d, r = spec.dim, spec.radius
        coords = list(itertools.product(range(-r, r + 1), repeat=d))
        vid = (lambda c: c[0]) if d == 1 else (lambda c: c)
        edges = []
        for c in coords:
            for axis in range(d):
                if c[axis] < r:
                    nb = c[:axis] + (c[axis] + 1,) + c[axis + 1:]
                    edges.append((vid(c), vid(nb), w))
        return Graph([vid(c) for c in coords], m, edges, origin=vid((0,) * d))
    if spec.kind == "explicit":
        measure = dict(spec.measure or {})
        mu = {x: measure.get(x, m) for x in spec.vertices}
        return Graph(spec.vertices, mu, spec.edges, origin=spec.origin)
    if spec.kind == "Z":
        raise GraphError("Z^d is infinite; use make_generator()")
    raise GraphError(f"unknown graph kind {spec.kind!r}")


def make_generator(spec: GraphSpec) -> Graph | Lattice:
    """A lazy :class:`Lattice` for ``kind == 'Z'``, otherwise the finite graph."""
    if spec.kind == "Z":
        return Lattice(spec.dim)
    return build_graph(spec)


class VertexFunction(Mapping):
    """Real function on vertices, stored on a finite support and zero elsewhere.

    Lookups of vertices outside the stored support return ``0.0``; iteration
    and ``len`` cover only the stored entries.
    """

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[Vertex, float] | Iterable = ()):
        self._values = {x: float(v) for x, v in dict(values).items()}

    @classmethod
    def from_array(cls, vertices: Sequence[Vertex], arr) -> "VertexFunction":
        return cls(zip(vertices, np.asarray(arr, dtype=float).tolist()))

    @classmethod
    def delta(cls, x: Vertex, value: float = 1.0) -> "VertexFunction":
        return cls({x: value})

    @classmethod
    def constant(cls, vertices: Iterable[Vertex], value: float) -> "VertexFunction":
        return cls({x: value for x in vertices})

    def __getitem__(self, x):
        return self._values.get(x, 0.0)

    def __call__(self, x):
        return self._values.get(x, 0.0)

    def __contains__(self, x):
        return x in self._values

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def __repr__(self):
        return f"VertexFunction({self._values!r})"

    def __eq__(self, other):
        if not isinstance(other, Mapping):
            return NotImplemented
        keys = set(self) | set(other)
        return all(self[x] == other.get(x, 0.0) for x in keys)

    __hash__ = None

    @property
    def support(self) -> tuple:
        return tuple(x for x, v in self._values.items() if v != 0.0)

    def to_array(self, vertices: Sequence[Vertex]) -> np.ndarray:
        return np.array([self._values.get(x, 0.0) for x in vertices], dtype=float)

    def restrict(self, vertices: Iterable[Vertex]) -> "VertexFunction":
        return VertexFunction({x: self[x] for x in vertices})

    def sup(self) -> float:
        return max((abs(v) for v in self._values.values()), default=0.0)

    def _combine(self, other, op):
        keys = list(self._values) + [x for x in other if x not in self._values]
        return VertexFunction({x: op(self[x], other[x]) for x in keys})

    def __add__(self, other):
        return self._combine(other, float.__add__)

    def __sub__(self, other):
        return self._combine(other, float.__sub__)

    def __mul__(self, c):
        c = float(c)
        return VertexFunction({x: c * v for x, v in self._values.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return VertexFunction({x: -v for x, v in self._values.items()})


@dataclass(frozen=True)
class Domain:
    """Finite connected vertex set with its vertex boundary.

    ``boundary`` is exactly ``{y not in interior : y ~ x for some x in interior}``.
    """

    interior: tuple
    boundary: tuple
    center: Any = field(default=None, compare=False)

    @property
    def closure(self) -> tuple:
        return self.interior + self.boundary

    def __contains__(self, x):
        return x in set(self.interior)


def make_domain(g: Graph, interior: Iterable[Vertex], center: Vertex | None = None) -> Domain:
    """Domain on ``interior`` with boundary computed from the adjacency of ``g``."""
    order = {x: g.index(x) for x in interior}
    if not order:
        raise GraphError("domain interior is empty")
    inner = tuple(sorted(order, key=order.get))
    inset = set(inner)
    if inset & g.incomplete:
        raise InsufficientMaterialization("domain touches the materialization rim")
    bd = {}
    for x in inner:
        for y, _ in g.neighbors(x):
            if y not in inset:
                bd[y] = g.index(y)
    # connectivity of the induced subgraph
    seen = {inner[0]}
    queue = deque([inner[0]])
    while queue:
        x = queue.popleft()
        for y, _ in g.neighbors(x):
            if y in inset and y not in seen:
                seen.add(y)
                queue.append(y)
    if len(seen) != len(inner):
        raise DisconnectedGraph("domain interior is not connected")
    return Domain(inner, tuple(sorted(bd, key=bd.get)), center)


def ball(g: Graph | Lattice, center: Vertex, k: int) -> Domain:
    """``B_k = {rho < k}`` with boundary ``{rho == k}``, rho the edge distance to center.

    For a lazy :class:`Lattice` a radius ``k + 1`` materialization is created;
    for a materialized graph every vertex with ``rho <= k`` must have its full
    neighborhood, otherwise :class:`InsufficientMaterialization` is raised.
    """
    if k < 1:
        raise GraphError("ball radius must be a positive integer")
    if isinstance(g, Lattice):
        g = g.materialize(center, k + 1)
    dist = g.distances(center)
    closure = [x for x in g.vertices if dist.get(x, k + 1) <= k]
    if any(x in g.incomplete for x in closure):
        raise InsufficientMaterialization(
            f"graph is not materialized beyond radius {k} around {center!r}"
        )
    interior = tuple(x for x in closure if dist[x] < k)
    boundary = tuple(x for x in closure if dist[x] == k)
    return Domain(interior, boundary, center)


def distance(g: Graph, x: Vertex, y: Vertex) -> int:
    g.index(y)
    return g.distances(x)[y]


def laplacian(g: Graph, u: Mapping, x: Vertex) -> float:
    """``(1/mu(x)) sum_{y~x} w_xy (u(y) - u(x))``."""
    ux = u.get(x, 0.0)
    s = math.fsum(w * (u.get(y, 0.0) - ux) for y, w in g.neighbors(x))
    return s / g.mu(x)


def gradient_pair(g: Graph, u: Mapping, v: Mapping, x: Vertex) -> float:
    """``(1/(2 mu(x))) sum_{y~x} w_xy (u(y)-u(x)) (v(y)-v(x))``."""
    ux, vx = u.get(x, 0.0), v.get(x, 0.0)
    s = math.fsum(w * (u.get(y, 0.0) - ux) * (v.get(y, 0.0) - vx) for y, w in g.neighbors(x))
    return s / (2.0 * g.mu(x))


def gradient_length(g: Graph, u: Mapping, x: Vertex) -> float:
    return math.sqrt(gradient_pair(g, u, u, x))


def integrate(g: Graph, u: Mapping, over: Iterable[Vertex] | None = None) -> float:
    """``sum_x mu(x) u(x)`` over the stored entries of ``u`` (or over ``over``)."""
    keys = u.keys() if over is None else over
    return math.fsum(g.mu(x) * u.get(x, 0.0) for x in keys)


# -- graph file format ---------------------------------------------------------

def graph_to_json(g: Graph) -> dict:
    """``{"mu_default", "vertices": [{"id","mu"}], "edges": [{"a","b","w"}]}``."""
    return {
        "mu_default": 1.0,
        "vertices": [{"id": vertex_key(x), "mu": g.mu(x)} for x in g.vertices],
        "edges": [{"a": vertex_key(a), "b": vertex_key(b), "w": w} for a, b, w in g.edges()],
    }


def graph_from_json(doc: Any, source: str = "<graph>") -> Graph:
    def bad(msg):
        raise MalformedFile(f"{source}: {msg}")

    if not isinstance(doc, dict):
        bad("top level must be an object")
    mu_default = doc.get("mu_default", 1.0)
    if not isinstance(mu_default, (int, float)):
        bad("field 'mu_default' must be a number")
    verts, measure = [], {}
    for i, item in enumerate(doc.get("vertices", [])):
        if not isinstance(item, dict) or "id" not in item:
            bad(f"vertices[{i}] must be an object with an 'id'")
        vid = str(item["id"])
        verts.append(vid)
        mu = item.get("mu", mu_default)
        if not isinstance(mu, (int, float)):
            bad(f"vertices[{i}].mu must be a number")
        measure[vid] = float(mu)
    edges = []
    for i, item in enumerate(doc.get("edges", [])):
        if not isinstance(item, dict) or not {"a", "b"} <= item.keys():
            bad(f"edges[{i}] must be an object with 'a' and 'b'")
        w = item.get("w", 1.0)
        if not isinstance(w, (int, float)):
            bad(f"edges[{i}].w must be a number")
        edges.append((str(item["a"]), str(item["b"]), float(w)))
    if not verts:
        bad("no vertices")
    origin = doc.get("origin")
    return Graph(verts, measure, edges, origin=None if origin is None else str(origin))


def load_graph(path) -> Graph:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return graph_from_json(doc, str(path))
