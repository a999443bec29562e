"""Finite indexed arenas: the shared engine for cluster growth.

An arena is a finite ball of an oracle graph with vertices and edges
re-indexed as small integers, so that edge/vertex configurations become
bitmasks and the enhanced growth process becomes bit arithmetic.  The
exact-enumeration oracle, the pivotal surgery campaigns and the public
`grow_cluster` all run on arenas.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .graphs import GraphOracle, edge_key


def iter_bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class Arena:
    """Finite ball of a graph with integer-indexed vertices and edges.

    Vertex indices follow canonical key order, so "smallest vertex" is
    "lowest index".  A vertex is *interior* when all its graph neighbors
    are present; enhancement balls and spheres are only trusted (and only
    precomputed) around vertices whose whole r+1 neighborhood is interior.
    """

    def __init__(self, graph: GraphOracle, centers, radius: int, r: int,
                 cap: int = 2_000_000):
        self.graph = graph
        self.centers = tuple(centers)
        self.radius = radius
        self.r = r

        dist = {c: 0 for c in self.centers}
        frontier = list(self.centers)
        for d in range(1, radius + 1):
            nxt = []
            for v in frontier:
                for w in graph.neighbors(v):
                    if w not in dist:
                        dist[w] = d
                        nxt.append(w)
                        if len(dist) > cap:
                            raise MemoryError(f"arena exceeds cap {cap}")
            frontier = nxt

        self.verts = sorted(dist)
        self.vid = {v: i for i, v in enumerate(self.verts)}
        self.dist_center = [dist[v] for v in self.verts]

        edges = set()
        interior = []
        for v in self.verts:
            nbrs = graph.neighbors(v)
            inside = True
            for w in nbrs:
                if w in self.vid:
                    edges.add(edge_key(v, w))
                else:
                    inside = False
            interior.append(inside)
        self.interior = interior
        self.edges = sorted(edges)
        self.eid = {e: i for i, e in enumerate(self.edges)}
        self.adj = [[] for _ in self.verts]
        for ei, (a, b) in enumerate(self.edges):
            ia, ib = self.vid[a], self.vid[b]
            self.adj[ia].append((ib, ei))
            self.adj[ib].append((ia, ei))

        self.n_verts = len(self.verts)
        self.n_edges = len(self.edges)
        self.all_verts_mask = (1 << self.n_verts) - 1
        self.all_edges_mask = (1 << self.n_edges) - 1

        # per-vertex enhancement geometry, exact only where trustworthy
        self.ball_edges = [0] * self.n_verts     # edges of B_r(u)
        self.sphere_next = [0] * self.n_verts    # vertices at distance r+1
        self.ball_ok = [False] * self.n_verts    # geometry is exact here
        self._sphere_cache = {}
        for u in range(self.n_verts):
            self._local_geometry(u)
        self.ok_mask = 0
        for u in range(self.n_verts):
            if self.ball_ok[u]:
                self.ok_mask |= 1 << u

    def _local_geometry(self, u: int):
        r = self.r
        dist = {u: 0}
        frontier = [u]
        complete = True
        for d in range(1, r + 2):
            nxt = []
            for v in frontier:
                if not self.interior[v]:
                    if dist[v] <= r:
                        complete = False
                    continue
                for w, _ in self.adj[v]:
                    if w not in dist:
                        dist[w] = d
                        nxt.append(w)
            frontier = nxt
        emask = 0
        for e, (a, b) in enumerate(self.edges):
            da = dist.get(self.vid[a])
            db = dist.get(self.vid[b])
            if da is not None and db is not None and da <= r and db <= r:
                emask |= 1 << e
        smask = 0
        for v, d in dist.items():
            if d == r + 1:
                smask |= 1 << v
        self.ball_edges[u] = emask
        self.sphere_next[u] = smask
        self.ball_ok[u] = complete

    # -- masks ---------------------------------------------------------

    def vmask(self, vertices) -> int:
        m = 0
        for v in vertices:
            m |= 1 << self.vid[v]
        return m

    def emask(self, edges) -> int:
        m = 0
        for e in edges:
            m |= 1 << self.eid[edge_key(*e)]
        return m

    def vset(self, mask: int):
        return {self.verts[i] for i in iter_bits(mask)}

    def sphere_at(self, L: int) -> int:
        """Vertices at distance exactly L from the arena centers."""
        if L not in self._sphere_cache:
            m = 0
            for i, d in enumerate(self.dist_center):
                if d == L:
                    m |= 1 << i
            self._sphere_cache[L] = m
        return self._sphere_cache[L]

    def ball_at(self, L: int) -> int:
        m = 0
        for i, d in enumerate(self.dist_center):
            if d <= L:
                m |= 1 << i
        return m

    def ball_around(self, u: int, radius: int) -> int:
        """Vertex mask of the arena-local ball around a vertex index."""
        dist = {u: 0}
        frontier = [u]
        for d in range(1, radius + 1):
            nxt = []
            for v in frontier:
                for w, _ in self.adj[v]:
                    if w not in dist:
                        dist[w] = d
                        nxt.append(w)
            frontier = nxt
        m = 0
        for v in dist:
            m |= 1 << v
        return m

    def edges_inside(self, vmask: int) -> int:
        """Edge mask of edges with both endpoints in a vertex mask."""
        m = 0
        for e, (a, b) in enumerate(self.edges):
            if vmask >> self.vid[a] & 1 and vmask >> self.vid[b] & 1:
                m |= 1 << e
        return m

    # -- growth --------------------------------------------------------

    def closure(self, seed: int, omega: int) -> int:
        """Union of omega-clusters of the seed vertices."""
        seen = seed
        stack = list(iter_bits(seed))
        while stack:
            v = stack.pop()
            for w, e in self.adj[v]:
                if omega >> e & 1 and not seen >> w & 1:
                    seen |= 1 << w
                    stack.append(w)
        return seen

    def grow(self, omega: int, alpha: int, roots: int) -> int:
        """Enhanced cluster of the root set: final vertex mask.

        Odd steps take the omega-closure; even steps add the distance-(r+1)
        sphere of every cluster vertex u whose r-ball is fully open and
        whose mark is set.
        """
        cur = roots
        while True:
            cur = self.closure(cur, omega)
            add = 0
            for u in iter_bits(cur & alpha & self.ok_mask):
                if self.ball_edges[u] & ~omega == 0:
                    add |= self.sphere_next[u]
            nxt = cur | add
            if nxt == cur:
                return cur
            cur = nxt

    def grow_trace(self, omega: int, alpha: int, roots: int):
        """As `grow`, also returning level masks and per-vertex provenance.

        Provenance maps a vertex index to (level index, rule, trigger):
        rule "root", "omega" (odd growth) or "mark" (even rule, trigger is
        the vertex whose ball fired).
        """
        prov = {v: (0, "root", None) for v in iter_bits(roots)}
        levels = [roots]
        cur = roots
        while True:
            grown = self.closure(cur, omega)
            for v in iter_bits(grown & ~cur):
                prov[v] = (len(levels), "omega", None)
            levels.append(grown)
            cur = grown
            add = 0
            for u in iter_bits(cur & alpha & self.ok_mask):
                if self.ball_edges[u] & ~omega == 0:
                    new = self.sphere_next[u] & ~cur & ~add
                    for v in iter_bits(new):
                        prov[v] = (len(levels), "mark", u)
                    add |= self.sphere_next[u]
            nxt = cur | add
            levels.append(nxt)
            if nxt == cur:
                return cur, levels, prov
            cur = nxt


def measure(arena: Arena, p, s, predicate, edge_mask: int = None,
            vertex_mask: int = None, exact: bool = False):
    """Probability of a configuration predicate under the product measure.

    Enumerates every configuration of the supports (all arena edges and
    vertices by default); `predicate(omega, alpha)` consumes bitmasks.
    With `exact=True`, p and s are treated as exact rationals and the
    result is a Fraction.
    """
    if edge_mask is None:
        edge_mask = arena.all_edges_mask
    if vertex_mask is None:
        vertex_mask = arena.all_verts_mask
    e_ids = list(iter_bits(edge_mask))
    v_ids = list(iter_bits(vertex_mask))
    n_bits = len(e_ids) + len(v_ids)
    if n_bits > 24:
        raise ValueError(f"enumeration bound exceeded: {n_bits} > 24 bits")

    if exact:
        p = Fraction(p).limit_denominator(10**9)
        s = Fraction(s).limit_denominator(10**9)
        one = Fraction(1)
    else:
        p = float(p)
        s = float(s)
        one = 1.0
    pw = [one] * (len(e_ids) + 1)
    qw = [one] * (len(e_ids) + 1)
    sw = [one] * (len(v_ids) + 1)
    tw = [one] * (len(v_ids) + 1)
    for i in range(len(e_ids)):
        pw[i + 1] = pw[i] * p
        qw[i + 1] = qw[i] * (1 - p)
    for i in range(len(v_ids)):
        sw[i + 1] = sw[i] * s
        tw[i + 1] = tw[i] * (1 - s)

    if s == 0:
        alpha_subsets = [0]
    elif s == 1:
        alpha_subsets = [sum(1 << v for v in v_ids)]
    else:
        alpha_subsets = None

    total = one * 0
    ne, nv = len(e_ids), len(v_ids)
    for esel in range(1 << ne):
        omega = 0
        m = esel
        while m:
            low = m & -m
            omega |= 1 << e_ids[low.bit_length() - 1]
            m ^= low
        eo = esel.bit_count()
        wedge = pw[eo] * qw[ne - eo]
        if alpha_subsets is not None:
            for alpha in alpha_subsets:
                if predicate(omega, alpha):
                    total += wedge
            continue
        for vsel in range(1 << nv):
            alpha = 0
            m = vsel
            while m:
                low = m & -m
                alpha |= 1 << v_ids[low.bit_length() - 1]
                m ^= low
            if predicate(omega, alpha):
                vo = vsel.bit_count()
                total += wedge * sw[vo] * tw[nv - vo]
    return total
