"""Lazily generated locally finite graphs.

A graph is given by an oracle: a neighbor function, a degree bound and a
root.  Vertices are canonical hashable keys (integer tuples for the built-in
families) admitting a total order; "smallest" always means smallest key.
All computation is confined to finite balls, with an explicit size cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional


class BallCapExceeded(Exception):
    """A ball enumeration grew past the configured vertex cap."""


DEFAULT_BALL_CAP = 2_000_000


def edge_key(a, b):
    """Canonical unordered edge: endpoints stored sorted."""
    if a == b:
        raise ValueError(f"self-loop at {a!r}")
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class GraphOracle:
    """Locally finite graph given by a neighbor oracle.

    `neighbors` must return a deterministically ordered list and be
    symmetric; `degree_bound` bounds its length.  `root_distance`, when
    present, gives the exact graph distance from the root in O(1) and is
    used by the Monte Carlo samplers to avoid BFS distance maps.
    """

    name: str
    neighbors: Callable
    degree_bound: int
    root: object
    root_distance: Optional[Callable] = None
    finite: bool = False

    def __repr__(self):
        return f"GraphOracle({self.name})"


@dataclass
class FiniteBall:
    """All vertices within `radius` of `center`, with exact distances."""

    center: object
    radius: int
    dist: dict = field(default_factory=dict)
    edges: set = field(default_factory=set)

    @property
    def vertices(self):
        return set(self.dist)


def ball(g: GraphOracle, x, r: int, cap: int = DEFAULT_BALL_CAP) -> FiniteBall:
    """BFS ball of radius r around x, including internal edges."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    dist = {x: 0}
    frontier = [x]
    for d in range(1, r + 1):
        nxt = []
        for v in frontier:
            for w in g.neighbors(v):
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
                    if len(dist) > cap:
                        raise BallCapExceeded(
                            f"ball({g.name}, {x!r}, {r}) exceeds cap {cap}")
        frontier = nxt
    edges = set()
    for v in dist:
        for w in g.neighbors(v):
            if w in dist:
                edges.add(edge_key(v, w))
    return FiniteBall(center=x, radius=r, dist=dist, edges=edges)


def sphere(g: GraphOracle, x, r: int, cap: int = DEFAULT_BALL_CAP) -> set:
    """Vertices at distance exactly r from x."""
    b = ball(g, x, r, cap=cap)
    return {v for v, d in b.dist.items() if d == r}


def edge_sphere(g: GraphOracle, x, r: int, cap: int = DEFAULT_BALL_CAP) -> set:
    """Edges with one endpoint at distance r and the other at r + 1."""
    b = ball(g, x, r + 1, cap=cap)
    out = set()
    for v, d in b.dist.items():
        if d != r:
            continue
        for w in g.neighbors(v):
            if b.dist.get(w) == r + 1:
                out.add(edge_key(v, w))
    return out


def graph_distance(g: GraphOracle, x, y, cap: int):
    """Exact BFS distance if <= cap, else None."""
    if cap < 0:
        raise ValueError("cap must be >= 0")
    if x == y:
        return 0
    dist = {x: 0}
    frontier = [x]
    for d in range(1, cap + 1):
        nxt = []
        for v in frontier:
            for w in g.neighbors(v):
                if w == y:
                    return d
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
        if not frontier:
            return None
    return None


# ---------------------------------------------------------------------------
# Built-in families.  Vertices are integer tuples (or pairs of tuples for
# products) so that lexicographic comparison gives the required well-order.
# ---------------------------------------------------------------------------

def hypercubic(d: int) -> GraphOracle:
    """The lattice Z^d; vertices are d-tuples of integers."""
    if d < 1:
        raise ValueError("dimension must be >= 1")

    def neighbors(v):
        out = []
        for i in range(d):
            for step in (-1, 1):
                out.append(v[:i] + (v[i] + step,) + v[i + 1:])
        out.sort()
        return out

    root = (0,) * d
    return GraphOracle(
        name=f"hypercubic({d})",
        neighbors=neighbors,
        degree_bound=2 * d,
        root=root,
        root_distance=lambda v: sum(abs(c) for c in v),
    )


def regular_tree(d: int) -> GraphOracle:
    """The d-regular tree; vertices are reduced words over d letters.

    A vertex is a tuple over {0..d-1} with no two equal consecutive letters
    (Cayley graph of the free product of d copies of Z/2).
    """
    if d < 2:
        raise ValueError("degree must be >= 2")

    def neighbors(v):
        out = []
        last = v[-1] if v else None
        for c in range(d):
            if c == last:
                out.append(v[:-1])
            else:
                out.append(v + (c,))
        out.sort()
        return out

    return GraphOracle(
        name=f"regular_tree({d})",
        neighbors=neighbors,
        degree_bound=d,
        root=(),
        root_distance=len,
    )


def cycle(n: int) -> GraphOracle:
    """The n-cycle; vertices are 1-tuples (i,) with 0 <= i < n."""
    if n < 3:
        raise ValueError("cycle needs n >= 3")

    def neighbors(v):
        i = v[0]
        return sorted({((i - 1) % n,), ((i + 1) % n,)})

    return GraphOracle(
        name=f"cycle({n})",
        neighbors=neighbors,
        degree_bound=2,
        root=(0,),
        root_distance=lambda v: min(v[0] % n, (-v[0]) % n),
        finite=True,
    )


def product(g1: GraphOracle, g2: GraphOracle) -> GraphOracle:
    """Cartesian product; vertices are pairs (v1, v2)."""

    def neighbors(v):
        a, b = v
        out = [(x, b) for x in g1.neighbors(a)] + [(a, y) for y in g2.neighbors(b)]
        out.sort()
        return out

    rd = None
    if g1.root_distance and g2.root_distance:
        rd = lambda v: g1.root_distance(v[0]) + g2.root_distance(v[1])
    return GraphOracle(
        name=f"product({g1.name},{g2.name})",
        neighbors=neighbors,
        degree_bound=g1.degree_bound + g2.degree_bound,
        root=(g1.root, g2.root),
        root_distance=rd,
        finite=g1.finite and g2.finite,
    )


def finite_graph(edges: Iterable, root=None, name: str = "finite") -> GraphOracle:
    """Oracle for an explicit finite simple graph given by its edge list."""
    adj = {}
    for a, b in edges:
        if a == b:
            raise ValueError(f"self-loop at {a!r}")
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    if not adj:
        raise ValueError("empty graph")
    table = {v: sorted(ws) for v, ws in adj.items()}
    if root is None:
        root = min(table)
    elif root not in table:
        raise ValueError(f"root {root!r} not a vertex")
    return GraphOracle(
        name=name,
        neighbors=lambda v: table[v],
        degree_bound=max(len(ws) for ws in table.values()),
        root=root,
        finite=True,
    )


def path_graph(n: int) -> GraphOracle:
    """Path on n vertices 0..n-1 (finite, for oracle instances)."""
    if n < 2:
        raise ValueError("path needs n >= 2")
    return finite_graph([(i, i + 1) for i in range(n - 1)], root=0,
                        name=f"path({n})")


def resolve_graph(spec: str) -> GraphOracle:
    """Resolve a family spec string like "hypercubic:3" or "tree:4".

    Known forms: hypercubic:d, tree:d, cycle:n, path:n,
    product:<spec>*<spec>.
    """
    fam, _, arg = spec.partition(":")
    fam = fam.strip().lower()
    if fam in ("hypercubic", "lattice", "z"):
        return hypercubic(int(arg))
    if fam in ("tree", "regular_tree"):
        return regular_tree(int(arg))
    if fam == "cycle":
        return cycle(int(arg))
    if fam == "path":
        return path_graph(int(arg))
    if fam == "product":
        left, _, right = arg.partition("*")
        return product(resolve_graph(left), resolve_graph(right))
    raise ValueError(f"unknown graph family {spec!r}")
