"""The (p, s) exploratory enhancement percolation model.

A configuration is a pair (omega, alpha) of edge and vertex bits on
declared finite supports; everything outside a support is closed.  The
cluster of a root set grows in alternating steps: odd steps take the
omega-closure, even steps let every cluster vertex u with a fully open
r-ball and mark alpha_u = 1 adopt all vertices at distance r + 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .arena import Arena, iter_bits, measure
from .graphs import GraphOracle, ball, edge_key


class SupportError(Exception):
    """The declared supports do not cover the region the growth depends on."""


@dataclass(frozen=True)
class Configuration:
    """Edge and vertex bits over declared finite supports."""

    open_edges: frozenset
    marked: frozenset
    edge_support: frozenset
    vertex_support: frozenset

    def __post_init__(self):
        if not self.open_edges <= self.edge_support:
            raise ValueError("open edge outside edge support")
        if not self.marked <= self.vertex_support:
            raise ValueError("marked vertex outside vertex support")

    def omega(self, e) -> int:
        return 1 if edge_key(*e) in self.open_edges else 0

    def alpha(self, v) -> int:
        return 1 if v in self.marked else 0

    def to_lines(self):
        """Line-delimited "edge-key bit" / "vertex-key bit" records."""
        out = []
        for e in sorted(self.edge_support):
            out.append(f"edge\t{e!r}\t{1 if e in self.open_edges else 0}")
        for v in sorted(self.vertex_support):
            out.append(f"vertex\t{v!r}\t{1 if v in self.marked else 0}")
        return out

    @classmethod
    def from_lines(cls, lines):
        import ast
        open_edges, marked, es, vs = set(), set(), set(), set()
        for line in lines:
            line = line.strip()
            if not line:
                continue
            kind, key, bit = line.split("\t")
            obj = ast.literal_eval(key)
            if kind == "edge":
                e = edge_key(*obj)
                es.add(e)
                if bit == "1":
                    open_edges.add(e)
            elif kind == "vertex":
                vs.add(obj)
                if bit == "1":
                    marked.add(obj)
            else:
                raise ValueError(f"bad record kind {kind!r}")
        return cls(frozenset(open_edges), frozenset(marked),
                   frozenset(es), frozenset(vs))


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the (p, s) model with enhancement range r."""

    p: float
    s: float
    r: int
    L: int

    def __post_init__(self):
        if not (0 <= self.p <= 1 and 0 <= self.s <= 1):
            raise ValueError("p and s must be probabilities")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.L < 1:
            raise ValueError("L must be >= 1")


@dataclass
class EnhancedCluster:
    """The monotone level sequence of the growth process and its union."""

    graph: GraphOracle
    roots: frozenset
    r: int
    levels: list
    union: frozenset
    provenance: dict = field(default_factory=dict)
    exited_horizon: Optional[bool] = None
    configuration: Optional[Configuration] = None


def _growth_arena(h: GraphOracle, roots, r: int, horizon: int) -> Arena:
    return Arena(h, sorted(roots), horizon + r + 1, r)


def grow_cluster(h: GraphOracle, roots, cfg: Configuration, r: int,
                 horizon: int, strict: bool = True,
                 arena: Optional[Arena] = None) -> EnhancedCluster:
    """Deterministic enhanced cluster of a root set under a configuration.

    With `strict`, the supports must cover the ball of radius
    horizon + r + 1 around the roots, so the result cannot depend on
    unset bits.
    """
    roots = frozenset(roots)
    if not roots:
        raise ValueError("root set must be non-empty")
    a = arena if arena is not None else _growth_arena(h, roots, r, horizon)
    if strict:
        missing_v = [v for v in a.verts if v not in cfg.vertex_support]
        missing_e = [e for e in a.edges if e not in cfg.edge_support]
        if missing_v or missing_e:
            raise SupportError(
                f"supports too small: {len(missing_v)} vertices and "
                f"{len(missing_e)} edges of the dependence ball unset")
    omega = 0
    for e in cfg.open_edges:
        i = a.eid.get(e)
        if i is not None:
            omega |= 1 << i
    alpha = 0
    for v in cfg.marked:
        i = a.vid.get(v)
        if i is not None:
            alpha |= 1 << i
    roots_mask = a.vmask(roots)
    final, levels, prov = a.grow_trace(omega, alpha, roots_mask)
    union = frozenset(a.vset(final))
    exited = any(a.dist_center[i] > horizon for i in iter_bits(final))
    prov_v = {a.verts[i]: (step, rule,
                           a.verts[trig] if trig is not None else None)
              for i, (step, rule, trig) in prov.items()}
    return EnhancedCluster(graph=h, roots=roots, r=r,
                           levels=[frozenset(a.vset(m)) for m in levels],
                           union=union, provenance=prov_v,
                           exited_horizon=exited, configuration=cfg)


def sample_cluster(h: GraphOracle, roots, params: ModelParams,
                   rng: np.random.Generator,
                   horizon: Optional[int] = None) -> EnhancedCluster:
    """Random enhanced cluster: each bit drawn lazily, exactly once.

    The realized bits are returned on the cluster as a Configuration whose
    supports are the inspected coordinates.
    """
    roots = frozenset(roots)
    if horizon is None:
        horizon = params.L + params.r + 1
    a = _growth_arena(h, roots, params.r, horizon)
    omega_bits = {}
    alpha_bits = {}
    omega = 0
    alpha = 0

    def edge_bit(e_idx: int) -> int:
        nonlocal omega
        if e_idx not in omega_bits:
            bit = 1 if rng.random() < params.p else 0
            omega_bits[e_idx] = bit
            if bit:
                omega |= 1 << e_idx
        return omega_bits[e_idx]

    def vertex_bit(v_idx: int) -> int:
        nonlocal alpha
        if v_idx not in alpha_bits:
            bit = 1 if rng.random() < params.s else 0
            alpha_bits[v_idx] = bit
            if bit:
                alpha |= 1 << v_idx
        return alpha_bits[v_idx]

    cur = a.vmask(roots)
    while True:
        # odd step: omega-closure, drawing edges on first inspection
        stack = list(iter_bits(cur))
        seen = cur
        while stack:
            v = stack.pop()
            for w, e in a.adj[v]:
                if not seen >> w & 1 and edge_bit(e):
                    seen |= 1 << w
                    stack.append(w)
        cur = seen
        add = 0
        for u in iter_bits(cur & a.ok_mask):
            if all(edge_bit(e) for e in iter_bits(a.ball_edges[u])) \
                    and vertex_bit(u):
                add |= a.sphere_next[u]
        nxt = cur | add
        if nxt == cur:
            break
        cur = nxt

    cfg = Configuration(
        open_edges=frozenset(a.edges[e] for e, b in omega_bits.items() if b),
        marked=frozenset(a.verts[v] for v, b in alpha_bits.items() if b),
        edge_support=frozenset(a.edges[e] for e in omega_bits),
        vertex_support=frozenset(a.verts[v] for v in alpha_bits),
    )
    union = frozenset(a.vset(cur))
    exited = any(a.dist_center[i] > horizon for i in iter_bits(cur))
    return EnhancedCluster(graph=h, roots=roots, r=params.r, levels=[union],
                           union=union, exited_horizon=exited,
                           configuration=cfg)


def event_EL(c: EnhancedCluster, o, L: int) -> int:
    """Whether the cluster meets the sphere of radius L around o."""
    g = c.graph
    if g.root_distance is not None and o == g.root:
        return int(any(g.root_distance(v) == L for v in c.union))
    dist = ball(g, o, L).dist
    return int(any(dist.get(v) == L for v in c.union))


def leadsto(c: EnhancedCluster, target) -> int:
    """Whether the cluster of the root set meets the target set."""
    return int(bool(c.union & frozenset(target)))


def r_nice(h: GraphOracle, B, r: int, cap: int):
    """Whether every outside vertex near B sits in an r-ball avoiding B.

    The defining property is checked exhaustively for vertices within
    distance `cap` of B; for the homogeneous built-in families this
    certifies the predicate everywhere, since vertices further out admit
    the ball around themselves.  Returns (bit, witness map).
    """
    B = frozenset(B)
    if not B:
        return 0, {}
    near = set()
    for b in B:
        near |= set(ball(h, b, cap).dist)
    witnesses = {}
    for u in sorted(near - B):
        found = None
        for v in sorted(ball(h, u, r).dist):
            bv = set(ball(h, v, r).dist)
            if u in bv and not (bv & B):
                found = v
                break
        if found is None:
            return 0, {}
        witnesses[u] = found
    return 1, witnesses


def exact_event_prob(h: GraphOracle, roots, params: ModelParams, predicate,
                     horizon: Optional[int] = None, exact: bool = False,
                     arena: Optional[Arena] = None):
    """Exact probability of a cluster predicate by full enumeration.

    `predicate(cluster_vertices)` receives the grown cluster as a set.
    The enumerated supports are all edges and vertices of the growth
    arena; at most 24 binary coordinates.
    """
    roots = frozenset(roots)
    if horizon is None:
        horizon = params.L + params.r + 1
    a = arena if arena is not None else _growth_arena(h, roots, params.r, horizon)
    rmask = a.vmask(roots)

    def pred(omega, alpha):
        return predicate(a.vset(a.grow(omega, alpha, rmask)))

    return measure(a, params.p, params.s, pred, exact=exact)


def exact_theta(h: GraphOracle, roots, params: ModelParams,
                o=None, exact: bool = False):
    """Exact probability that the cluster reaches the sphere of radius L.

    Ground truth for the Monte Carlo estimators; enumeration bound
    |E| + |V| <= 24.
    """
    roots = frozenset(roots)
    if o is None:
        if len(roots) != 1:
            raise ValueError("need a designated origin for a set-rooted event")
        o = next(iter(roots))
    a = _growth_arena(h, roots, params.r, params.L + params.r + 1)
    if o in a.centers and len(a.centers) == 1:
        dist = {v: a.dist_center[i] for i, v in enumerate(a.verts)}
    else:
        dist = ball(h, o, params.L).dist
    target = {v for v, d in dist.items() if d == params.L}
    if not target:
        raise ValueError(f"no vertex at distance {params.L} from {o!r}")
    return exact_event_prob(h, roots, params,
                            lambda cluster: bool(cluster & target),
                            exact=exact, arena=a)
