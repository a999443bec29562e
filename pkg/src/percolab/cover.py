"""Group actions, quotient graphs and covering-map machinery.

Quotient vertices are canonical orbit representatives, so a quotient is an
ordinary :class:`~percolab.graphs.GraphOracle`.  All structural checks are
ball-local spot-checks: the graphs are infinite and the hypotheses are
trusted inputs, the checks exist to catch configuration mistakes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .graphs import (FiniteBall, GraphOracle, ball, edge_key, sphere)


class ActionError(Exception):
    """A group action failed a structural spot-check."""


class LiftError(Exception):
    """Tree lifting failed (weak lifting property violated)."""


class FreenessViolation(Exception):
    """Two supposedly disjoint lifts met: the freeness assumption is false."""


class SearchExhausted(Exception):
    """A bounded search (group element, tame radius) hit its cap."""


@dataclass(frozen=True)
class GroupAction:
    """Generators acting by graph automorphisms, plus an orbit canonical form.

    Each generator is a (forward, inverse) pair of vertex bijections.
    `canonicalize` must be constant on orbits and idempotent; it doubles as
    the quotient projection.
    """

    name: str
    generators: tuple
    canonicalize: Callable
    free: bool = True
    moduli: Optional[dict] = None  # axis -> modulus, for lattice translations


def translation_action(vectors) -> GroupAction:
    """Action on Z^d generated by axis-aligned integer translations.

    Each vector must have exactly one nonzero entry; the canonical form
    reduces the corresponding coordinate modulo that entry.
    """
    vectors = [tuple(v) for v in vectors]
    if not vectors:
        raise ValueError("need at least one translation vector")
    moduli = {}
    for vec in vectors:
        nz = [(i, c) for i, c in enumerate(vec) if c != 0]
        if len(nz) != 1:
            raise ValueError(f"translation {vec} is not axis-aligned")
        axis, step = nz[0]
        if axis in moduli:
            raise ValueError(f"two translations along axis {axis}")
        moduli[axis] = abs(step)

    def shift(vec, sign):
        def f(v):
            return tuple(c + sign * s for c, s in zip(v, vec))
        return f

    gens = tuple((shift(vec, +1), shift(vec, -1)) for vec in vectors)

    def canonicalize(v):
        return tuple(c % moduli[i] if i in moduli else c for i, c in enumerate(v))

    name = "translate(" + ";".join(",".join(map(str, v)) for v in vectors) + ")"
    return GroupAction(name=name, generators=gens, canonicalize=canonicalize,
                      free=True, moduli=moduli)


def resolve_action(spec: str) -> GroupAction:
    """Resolve an action spec like "translate:3,0" or "translate:0,0,2;2,0,0"."""
    kind, _, arg = spec.partition(":")
    if kind.strip().lower() != "translate":
        raise ValueError(f"unknown action kind {spec!r}")
    vectors = [tuple(int(c) for c in part.split(",")) for part in arg.split(";")]
    return translation_action(vectors)


@dataclass(frozen=True)
class CoveringMap:
    """Vertex projection from `source` onto `target`."""

    project: Callable
    source: GraphOracle
    target: GraphOracle
    action: Optional[GroupAction] = None


@dataclass
class CheckReport:
    """Outcome of a ball-local structural spot-check."""

    name: str
    passed: bool
    checked: int
    failures: list = field(default_factory=list)

    def lines(self):
        status = "PASS" if self.passed else "FAIL"
        out = [f"{self.name} {status} checked={self.checked}"]
        out.extend(f"{self.name} witness {w}" for w in self.failures[:10])
        return out


def _spot_check_action(g: GraphOracle, a: GroupAction, radius: int = 2):
    b = ball(g, g.root, radius)
    for v in b.dist:
        for f, finv in a.generators:
            if finv(f(v)) != v:
                raise ActionError(f"generator inverse fails at {v!r}")
            fv = f(v)
            image_nbrs = set(g.neighbors(fv))
            for w in g.neighbors(v):
                if f(w) not in image_nbrs:
                    raise ActionError(
                        f"generator is not an automorphism at edge {v!r}-{w!r}")
        c = a.canonicalize(v)
        if a.canonicalize(c) != c:
            raise ActionError(f"canonicalize not idempotent at {v!r}")
    if a.free:
        for v in list(b.dist)[:16]:
            for f, _ in a.generators:
                if f(v) == v:
                    raise ActionError(f"fixed point {v!r}: action is not free")


def quotient(g: GraphOracle, a: GroupAction, check_radius: int = 2):
    """Quotient graph of g by a, plus the projection as a covering map.

    Vertices of the quotient are canonical orbit representatives; two
    distinct orbits are adjacent iff some edge of g joins them (self-loops
    dropped, multiplicities collapsed).
    """
    _spot_check_action(g, a, radius=check_radius)

    b = ball(g, g.root, check_radius)
    if all(a.canonicalize(v) == v for v in b.dist):
        raise ActionError("action looks trivial: projection injective on "
                          "sampled ball, not a proper quotient")

    canon = a.canonicalize

    def neighbors(u):
        out = {canon(w) for w in g.neighbors(u)}
        out.discard(u)
        return sorted(out)

    rd = None
    if a.moduli is not None and g.root_distance is not None:
        moduli = a.moduli

        def rd(v):
            total = 0
            for i, c in enumerate(v):
                if i in moduli:
                    m = moduli[i]
                    total += min(c % m, (-c) % m)
                else:
                    total += abs(c)
            return total

    h = GraphOracle(
        name=f"{g.name}/{a.name}",
        neighbors=neighbors,
        degree_bound=g.degree_bound,
        root=canon(g.root),
        root_distance=rd,
        finite=g.finite or (a.moduli is not None and g.root_distance is not None
                            and all(i in a.moduli
                                    for i in range(len(g.root)))),
    )
    return h, CoveringMap(project=canon, source=g, target=h, action=a)


def is_weak_covering(m: CoveringMap, sample_radius: int) -> CheckReport:
    """Check 1-Lipschitz continuity and the weak lifting property on a ball."""
    return _check_covering(m, sample_radius, strong=False)


def is_strong_covering(m: CoveringMap, sample_radius: int) -> CheckReport:
    """As the weak check, but the lifting neighbor must be unique."""
    return _check_covering(m, sample_radius, strong=True)


def _check_covering(m: CoveringMap, sample_radius: int, strong: bool) -> CheckReport:
    g, h, pi = m.source, m.target, m.project
    name = "strong-covering" if strong else "weak-covering"
    rep = CheckReport(name=name, passed=True, checked=0)
    b = ball(g, g.root, sample_radius)
    for x in sorted(b.dist):
        px = pi(x)
        h_nbrs = set(h.neighbors(px))
        # edges map to edges or collapse: this gives 1-Lipschitz globally
        for y in g.neighbors(x):
            py = pi(y)
            rep.checked += 1
            if py != px and py not in h_nbrs:
                rep.passed = False
                rep.failures.append(
                    ("lipschitz", x, y, px, py))
        for u in h_nbrs:
            lifts = [y for y in g.neighbors(x) if pi(y) == u]
            rep.checked += 1
            if not lifts:
                rep.passed = False
                rep.failures.append(("no-lift", x, u))
            elif strong and len(lifts) > 1:
                rep.passed = False
                rep.failures.append(("non-unique-lift", x, u, lifts[:4]))
    return rep


# ---------------------------------------------------------------------------
# Trees and lifting
# ---------------------------------------------------------------------------

def bfs_tree(g: GraphOracle, center, radius: int):
    """Layered BFS spanning tree of a ball, smallest-key tie-breaking.

    Returns (vertices, edges) with vertices added distance layer by layer.
    """
    verts = {center}
    edges = set()
    frontier = [center]
    for _ in range(radius):
        nxt = []
        for v in frontier:
            for w in g.neighbors(v):
                if w not in verts:
                    verts.add(w)
                    edges.add(edge_key(v, w))
                    nxt.append(w)
        nxt.sort()
        frontier = nxt
    return frozenset(verts), frozenset(edges)


def _validate_subtree(verts, edges):
    verts, edges = frozenset(verts), frozenset(edges)
    if not verts:
        raise ValueError("empty tree")
    if len(edges) != len(verts) - 1:
        raise ValueError("not a tree: |E| != |V| - 1")
    adj = {v: [] for v in verts}
    for a, b in edges:
        if a not in adj or b not in adj:
            raise ValueError("tree edge endpoint outside vertex set")
        adj[a].append(b)
        adj[b].append(a)
    seen = {next(iter(verts))}
    stack = [next(iter(verts))]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if seen != verts:
        raise ValueError("not a tree: disconnected")
    return verts, edges, adj


@dataclass
class LiftedTree:
    """A lift of a target-graph subtree through a covering map."""

    base: object                  # the source vertex the lift goes through
    vertices: frozenset
    edges: frozenset
    image_vertices: frozenset
    image_edges: frozenset
    mapping: dict                 # tree vertex -> lifted vertex


def lift_tree(m: CoveringMap, tree, x) -> LiftedTree:
    """Lift a subtree of the target through x, smallest-key choices.

    `tree` is a (vertices, edges) pair in the target graph; requires
    project(x) to be a tree vertex.
    """
    verts, edges, adj = _validate_subtree(*tree)
    pi = m.project
    px = pi(x)
    if px not in verts:
        raise ValueError(f"project({x!r}) = {px!r} is not a tree vertex")
    mapping = {px: x}
    frontier = [px]
    while frontier:
        frontier.sort()
        u = frontier.pop(0)
        xu = mapping[u]
        for w in adj[u]:
            if w in mapping:
                continue
            cands = sorted(y for y in m.source.neighbors(xu) if pi(y) == w)
            if not cands:
                raise LiftError(f"no lift of edge {u!r}-{w!r} at {xu!r}")
            mapping[w] = cands[0]
            frontier.append(w)
    lifted_vs = frozenset(mapping.values())
    if len(lifted_vs) != len(verts):
        raise LiftError("lift is not injective on tree vertices")
    lifted_es = frozenset(edge_key(mapping[a], mapping[b]) for a, b in edges)
    return LiftedTree(base=x, vertices=lifted_vs, edges=lifted_es,
                      image_vertices=verts, image_edges=edges, mapping=mapping)


def _find_group_element(a: GroupAction, x, y, word_cap: int):
    """BFS over generator words for an element mapping x to y."""
    moves = []
    for f, finv in a.generators:
        moves.append(f)
        moves.append(finv)
    seen = {x: ()}
    frontier = [x]
    for _ in range(word_cap):
        nxt = []
        for v in frontier:
            for i, f in enumerate(moves):
                w = f(v)
                if w not in seen:
                    seen[w] = seen[v] + (i,)
                    if w == y:
                        word = seen[w]
                        def apply(z, word=word, moves=moves):
                            for j in word:
                                z = moves[j](z)
                            return z
                        return apply
                    nxt.append(w)
        frontier = nxt
    raise SearchExhausted(
        f"no group element mapping {x!r} to {y!r} within word length {word_cap}")


def disjoint_lifts(m: CoveringMap, tree, x, y, word_cap: int = 12):
    """Two vertex-disjoint lifts of a subtree through x and through y.

    With a free action, the second lift is the group translate of the first;
    a non-empty intersection falsifies freeness and is a hard error.
    Without an action (strong covering maps), two independent lifts are
    taken and disjointness is still asserted.
    """
    if x == y:
        raise ValueError("need two distinct vertices in the same fibre")
    pi = m.project
    if pi(x) != pi(y):
        raise ValueError("vertices are not in the same fibre")
    verts, _, _ = _validate_subtree(*tree)
    if pi(x) not in verts:
        raise ValueError("fibre image is not a tree vertex")

    t_x = lift_tree(m, tree, x)
    if m.action is not None:
        g_elem = _find_group_element(m.action, x, y, word_cap)
        mapping_y = {u: g_elem(v) for u, v in t_x.mapping.items()}
        t_y = LiftedTree(
            base=y,
            vertices=frozenset(mapping_y.values()),
            edges=frozenset(edge_key(mapping_y[a], mapping_y[b])
                            for a, b in t_x.image_edges),
            image_vertices=t_x.image_vertices,
            image_edges=t_x.image_edges,
            mapping=mapping_y,
        )
        for u, v in mapping_y.items():
            if pi(v) != u:
                raise LiftError("group translate is not a lift")
    else:
        t_y = lift_tree(m, tree, y)
    meet = t_x.vertices & t_y.vertices
    if meet:
        raise FreenessViolation(
            f"lifts through {x!r} and {y!r} meet at {sorted(meet)[:4]!r}")
    return t_x, t_y


# ---------------------------------------------------------------------------
# Tame fibres and pattern sets
# ---------------------------------------------------------------------------

def tame_radius(m: CoveringMap, search_cap: int, sample_radius: int = 2):
    """Smallest R such that every sampled vertex has a same-fibre partner
    within distance R.  Returns None if some vertex has none within the cap
    (the map is then reported non-tame up to the cap)."""
    g, pi = m.source, m.project
    sample = sorted(ball(g, g.root, sample_radius).dist)
    best = 0
    for x in sample:
        px = pi(x)
        found = None
        for radius in range(1, search_cap + 1):
            if any(pi(y) == px for y in sphere(g, x, radius)):
                found = radius
                break
        if found is None:
            return None
        best = max(best, found)
    return best


@dataclass
class PatternSet:
    """Connected fibre pattern around a source vertex.

    The set is the component of `center` in the preimage of the radius-r
    target ball, intersected with the radius-3r source ball.  `ok` records
    whether every target vertex at distance r+1 has at least two fibre
    representatives adjacent to the set.
    """

    center: object
    r: int
    vertices: frozenset
    ok: bool
    failures: list


def pattern_set(m: CoveringMap, x, r: int, verify: bool = True) -> PatternSet:
    if r < 1:
        raise ValueError("r must be >= 1")
    g, h, pi = m.source, m.target, m.project
    px = pi(x)
    target_ball = set(ball(h, px, r).dist)
    allowed = {v for v in ball(g, x, 3 * r).dist if pi(v) in target_ball}
    comp = {x}
    stack = [x]
    while stack:
        v = stack.pop()
        for w in g.neighbors(v):
            if w in allowed and w not in comp:
                comp.add(w)
                stack.append(w)
    failures = []
    if verify:
        adjacent = {}
        for z in comp:
            for w in g.neighbors(z):
                if w not in comp:
                    adjacent.setdefault(pi(w), set()).add(w)
        for u in sorted(sphere(h, px, r + 1)):
            if len(adjacent.get(u, ())) < 2:
                failures.append(u)
    return PatternSet(center=x, r=r, vertices=frozenset(comp),
                      ok=not failures, failures=failures)


def choose_r(m: CoveringMap, cap: int, sample_radius: int = 2) -> int:
    """r = ceil(R/2) from the tame radius, verified on sampled centers."""
    big_r = tame_radius(m, cap, sample_radius=sample_radius)
    if big_r is None:
        raise SearchExhausted(f"no tame radius within cap {cap}")
    r = math.ceil(big_r / 2)
    for x in sorted(ball(m.source, m.source.root, 1).dist):
        ps = pattern_set(m, x, r)
        if not ps.ok:
            raise LiftError(
                f"pattern set verification failed at {x!r}: {ps.failures[:4]}")
    return r


def fibre(m: CoveringMap, u, within: FiniteBall) -> set:
    """All vertices of a source ball projecting to u."""
    return {v for v in within.dist if m.project(v) == u}
