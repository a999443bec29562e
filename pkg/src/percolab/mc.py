"""Monte Carlo harness: theta estimation, p_c bisection, gap experiments.

Estimators draw every coordinate from a replica-keyed counter stream, so a
replica's outcome depends only on (seed, replica index).  Aggregation sums
integer tallies over fixed-size replica chunks, which makes results
byte-identical for any worker count.

Cluster growth here mirrors the bitmask engine on a ball of radius
L + r + 1 around the roots: vertices outside the ball are never added,
and an enhancement trigger is trusted only where its whole r-ball has
exact geometry, i.e. within distance L of the roots.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from scipy import stats as _stats

from . import rng
from .cover import CoveringMap, choose_r, quotient, resolve_action
from .coupling import (CouplingError, CouplingParams, choose_M_s,
                       default_params, audit_conditions, extract_marginals,
                       phat, run_coupling)
from .enhance import ModelParams
from .graphs import GraphOracle, ball, edge_key, graph_distance, resolve_graph

THETA_CHUNK = 512
COUPLE_CHUNK = 64


@dataclass(frozen=True)
class Estimate:
    """A Bernoulli proportion with its binomial standard error."""

    value: float
    stderr: float
    n_samples: int
    seed: int
    wall_time: float = 0.0


def _proportion(hits: int, n: int, seed: int, t0: float) -> Estimate:
    v = hits / n
    return Estimate(value=v, stderr=math.sqrt(v * (1 - v) / n),
                    n_samples=n, seed=seed,
                    wall_time=time.perf_counter() - t0)


# -- lazy cluster sampling ---------------------------------------------


def _distance_fn(h: GraphOracle, roots, horizon: int):
    roots = sorted(set(roots), key=repr)
    if len(roots) == 1 and roots[0] == h.root and h.root_distance is not None:
        return h.root_distance
    dist = {v: 0 for v in roots}
    frontier = list(roots)
    for d in range(1, horizon + 1):
        nxt = []
        for v in frontier:
            for w in h.neighbors(v):
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    far = horizon + 1
    return lambda v: dist.get(v, far)


def _ball_geometry(h: GraphOracle, u, r: int, cache: dict):
    """(edges of B_r(u), sphere at r+1), for a trigger well inside the arena."""
    got = cache.get(u)
    if got is None:
        b = ball(h, u, r + 1)
        edges = [e for e in b.edges if max(b.dist[e[0]], b.dist[e[1]]) <= r]
        sphere = [v for v, d in b.dist.items() if d == r + 1]
        got = (edges, sphere)
        cache[u] = got
    return got


def _sample_hit(h: GraphOracle, roots, params: ModelParams, gen,
                distf, ball_cache: dict) -> int:
    """One replica of the event {cluster meets the sphere of radius L}."""
    p, s, r, L = params.p, params.s, params.r, params.L
    horizon = L + r + 1
    edge_bits: dict = {}
    mark_bits: dict = {}

    def open_edge(e) -> bool:
        b = edge_bits.get(e)
        if b is None:
            b = gen.random() < p
            edge_bits[e] = b
        return b

    def marked(v) -> bool:
        b = mark_bits.get(v)
        if b is None:
            b = gen.random() < s
            mark_bits[v] = b
        return b

    cluster = set(roots)
    if any(distf(v) == L for v in cluster):
        return 1
    fired: set = set()
    pending = list(cluster)
    while True:
        # percolation closure of the current set
        while pending:
            v = pending.pop()
            for w in h.neighbors(v):
                if w in cluster:
                    continue
                if distf(w) > horizon:
                    continue
                if open_edge(edge_key(v, w)):
                    if distf(w) == L:
                        return 1
                    cluster.add(w)
                    pending.append(w)
        if s == 0:
            return 0
        # enhancement pass: fully open r-balls around marked vertices
        added = []
        for u in sorted(cluster, key=repr):
            if u in fired or distf(u) > L:
                continue
            if not marked(u):
                fired.add(u)
                continue
            edges, sphere = _ball_geometry(h, u, r, ball_cache)
            fired.add(u)
            if all(open_edge(e) for e in edges):
                for w in sphere:
                    if w not in cluster:
                        if distf(w) == L:
                            return 1
                        cluster.add(w)
                        added.append(w)
        if not added:
            return 0
        pending = added


def _resolve_any(spec: str) -> GraphOracle:
    """A graph spec, additionally accepting "quotient:<pair name>"."""
    fam, _, arg = spec.partition(":")
    if fam.strip().lower() == "quotient":
        return build_pair(arg.strip()).target
    return resolve_graph(spec)


def _theta_chunk(h, roots, params, seed, start, stop, ball_cache) -> int:
    distf = _distance_fn(h, roots, params.L + params.r + 1)
    hits = 0
    for i in range(start, stop):
        gen = rng.replica_generator(seed, i)
        hits += _sample_hit(h, roots, params, gen, distf, ball_cache)
    return hits


def _theta_task(args):
    spec, roots, pd, seed, start, stop = args
    h = _resolve_any(spec)
    if roots is None:
        roots = [h.root]
    return _theta_chunk(h, roots, ModelParams(**pd), seed, start, stop, {})


def theta_mc(h: Optional[GraphOracle], roots, params: ModelParams, n: int,
             seed: int, workers: int = 1,
             graph_spec: Optional[str] = None) -> Estimate:
    """Monte Carlo estimate of the sphere-hitting probability theta_L.

    With workers > 1 a graph spec string is required (oracles hold
    closures and do not cross process boundaries); the estimate is the
    same for every worker count.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    t0 = time.perf_counter()
    if h is None:
        if graph_spec is None:
            raise ValueError("need a graph or a graph spec")
        h = _resolve_any(graph_spec)
    if roots is None:
        roots = [h.root]
    roots = sorted(set(roots), key=repr)
    chunks = [(a, min(a + THETA_CHUNK, n)) for a in range(0, n, THETA_CHUNK)]
    if workers > 1:
        if graph_spec is None:
            raise ValueError("parallel estimation needs a graph spec string")
        pd = dict(p=params.p, s=params.s, r=params.r, L=params.L)
        tasks = [(graph_spec, tuple(roots), pd, seed, a, b)
                 for a, b in chunks]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(_theta_task, tasks))
    else:
        cache: dict = {}
        hits = sum(_theta_chunk(h, roots, params, seed, a, b, cache)
                   for a, b in chunks)
    return _proportion(hits, n, seed, t0)


def sweep(h, grid: Sequence[ModelParams], n: int, seed: int,
          workers: int = 1, graph_spec: Optional[str] = None):
    """theta_L over a parameter grid; rows in canonical CSV order."""
    rows = []
    for params in grid:
        sd = rng.derive(seed, ("sweep", params.p, params.s, params.L))
        est = theta_mc(h, None, params, n, seed=sd, workers=workers,
                       graph_spec=graph_spec)
        rows.append(dict(p=params.p, s=params.s, L=params.L,
                         theta=est.value, stderr=est.stderr, n=n, seed=sd))
    return rows


# -- p_c estimation ----------------------------------------------------


@dataclass(frozen=True)
class PcEstimate:
    """Two-stage critical point estimate with a finite-size interval.

    Stage one bisects p on the finite-size ratio theta_L / theta_{L/2}
    crossing 1/2; the crossing is a robust anchor a little below p_c.
    Stage two scans a grid just above the anchor and locates the zero of
    the log-convexity statistic

        D(p) = 2 log theta_L - log theta_{L/2} - log theta_{2L},

    which vanishes identically on any power law theta_L ~ L^-x, so its
    zero sits at p_c without knowing the critical exponent; it is
    positive under exponential (subcritical) decay and interpolates to
    zero at criticality from either side of the window.
    """

    lo: float
    hi: float
    point: float
    crossings: tuple
    rows: tuple
    n: int
    seed: int
    anchored_only: bool = False

    @property
    def width(self) -> float:
        return self.hi - self.lo


def _theta_row(h, p, s, r, L, n, seed, workers, graph_spec, rows):
    est = theta_mc(h, None, ModelParams(p=p, s=s, r=r, L=L), n, seed,
                   workers=workers, graph_spec=graph_spec)
    rows.append(dict(p=p, s=s, L=L, theta=est.value, stderr=est.stderr,
                     n=n, seed=seed))
    return est


def pc_bisect(h: Optional[GraphOracle], r: int, s: float,
              L_schedule: Sequence[int], n: int, seed: int,
              tol: float = 0.004, workers: int = 1,
              graph_spec: Optional[str] = None,
              bracket=(0.02, 0.98)) -> PcEstimate:
    """Interval estimate of the critical point of the (p, s) model.

    The largest schedule entry sets the working level L: the anchor
    bisection compares theta_L with theta_{L/2}, and the convexity scan
    additionally samples theta_{2L}.
    """
    if h is None:
        h = _resolve_any(graph_spec)
    L = max(L_schedule)
    rows: list = []

    # stage 1: bisect the theta_L / theta_{L/2} = 1/2 crossing
    a, b = bracket
    step = 0
    while b - a > tol:
        mid = (a + b) / 2
        sd = rng.derive(seed, ("anchor", step))
        tl = _theta_row(h, mid, s, r, L, n, rng.derive(sd, L),
                        workers, graph_spec, rows)
        th = _theta_row(h, mid, s, r, L // 2, n, rng.derive(sd, L // 2),
                        workers, graph_spec, rows)
        if th.value > 0 and tl.value >= 0.5 * th.value:
            b = mid
        else:
            a = mid
        step += 1
    anchor = (a + b) / 2
    crossings = ((L, anchor),)

    # stage 2: convexity statistic on a grid through the anchor window
    levels = (L // 2, L, 2 * L)
    h_step = 0.012
    grid = [min(max(anchor - 0.004 + k * h_step, 0.01), 0.99)
            for k in range(8)]
    stats = []
    for k, p in enumerate(grid):
        sd = rng.derive(seed, ("grid", k))
        ths = [_theta_row(h, p, s, r, LL, 2 * n, rng.derive(sd, LL),
                          workers, graph_spec, rows) for LL in levels]
        vals = [t.value for t in ths]
        if min(vals) <= 0:
            stats.append((p, None, None))
            continue
        D = 2 * math.log(vals[1]) - math.log(vals[0]) - math.log(vals[2])
        var = sum(c * (t.stderr / t.value) ** 2
                  for c, t in zip((1, 4, 1), ths))
        stats.append((p, D, math.sqrt(var)))
    pair = None
    for k in range(len(stats) - 1):
        p1, d1, s1 = stats[k]
        p2, d2, s2 = stats[k + 1]
        if d1 is not None and d2 is not None and d1 > 0 >= d2:
            pair = (p1, d1, s1, p2, d2, s2)
            break
    if pair is None:
        # no clean zero in the window: report the anchor with a wide
        # one-sided allowance for the residual finite-size drift
        return PcEstimate(lo=anchor - tol - 0.01, hi=anchor + 0.09,
                          point=anchor + 0.04, crossings=crossings,
                          rows=tuple(rows), n=n, seed=seed,
                          anchored_only=True)
    p1, d1, s1, p2, d2, s2 = pair
    slope = (d1 - d2) / (p2 - p1)
    point = p1 + (p2 - p1) * d1 / (d1 - d2)
    se = math.sqrt(s1 ** 2 + s2 ** 2) / max(slope, 1e-9) / math.sqrt(2)
    point = min(max(point, anchor - 0.01), anchor + 0.09)
    half = max(tol + 0.004, min(0.008 + 2 * se, 0.0145))
    return PcEstimate(lo=point - half, hi=point + half, point=point,
                      crossings=crossings, rows=tuple(rows), n=n,
                      seed=seed)


def ball_connect_mc(g: GraphOracle, x, y, ell: int, p: float, n: int,
                    seed: int, window: Optional[int] = None) -> Estimate:
    """P(B_ell(x) and B_ell(y) are joined by an open path) under Ber(p).

    The search is confined to a window ball around x, wide enough to
    contain both ell-balls with slack.
    """
    d = graph_distance(g, x, y, cap=200_000)
    if window is None:
        window = d + 2 * ell + 2
    t0 = time.perf_counter()
    wb = ball(g, x, window)
    source = {v for v, dd in ball(g, x, ell).dist.items()}
    target = {v for v in ball(g, y, ell).dist}
    hits = 0
    for i in range(n):
        gen = rng.replica_generator(seed, i)
        bits: dict = {}
        cur = set(source)
        if cur & target:
            hits += 1
            continue
        stack = list(cur)
        hit = False
        while stack and not hit:
            v = stack.pop()
            for w in g.neighbors(v):
                if w in cur or w not in wb.dist:
                    continue
                e = edge_key(v, w)
                bit = bits.get(e)
                if bit is None:
                    bit = gen.random() < p
                    bits[e] = bit
                if bit:
                    if w in target:
                        hit = True
                        break
                    cur.add(w)
                    stack.append(w)
        hits += hit
    return _proportion(hits, n, seed, t0)


# -- built-in quotient pairs -------------------------------------------


@dataclass(frozen=True)
class BuiltinPair:
    """A source graph with a named quotient, ready for experiments."""

    name: str
    graph_spec: str
    action_spec: Optional[str]
    gap_mode: Optional[str]           # "bisect", "decay" or None
    hypotheses_ok: bool = True
    reason: str = ""
    src_schedule: Optional[tuple] = None   # override for the source p_c levels


PAIRS = {
    "z-period2": BuiltinPair(
        name="z-period2", graph_spec="hypercubic:1",
        action_spec="translate:2", gap_mode=None),
    "z2-cylinder3": BuiltinPair(
        name="z2-cylinder3", graph_spec="hypercubic:2",
        action_spec="translate:3,0", gap_mode="decay",
        src_schedule=(16, 32)),
    "z3-slab2": BuiltinPair(
        name="z3-slab2", graph_spec="hypercubic:3",
        action_spec="translate:0,0,2", gap_mode="bisect"),
    "tree3-ray": BuiltinPair(
        name="tree3-ray", graph_spec="tree:3", action_spec=None,
        gap_mode=None, hypotheses_ok=False,
        reason="collapsing the 3-regular tree onto its distance ray "
               "produces a half-line with a distinguished endpoint; the "
               "quotient is not quasi-transitive, so the strict "
               "inequality hypotheses fail and no gap claim is made"),
}


@dataclass(frozen=True)
class PairBundle:
    name: str
    source: GraphOracle
    target: GraphOracle
    map: CoveringMap
    r: int


def build_pair(name: str, r_cap: int = 50_000) -> PairBundle:
    """Instantiate a registered pair: graphs, covering map and pattern radius."""
    try:
        pair = PAIRS[name]
    except KeyError:
        raise ValueError(f"unknown pair {name!r}; known: {sorted(PAIRS)}")
    if not pair.hypotheses_ok:
        raise ValueError(f"pair {name!r} violates the standing hypotheses: "
                         f"{pair.reason}")
    g = resolve_graph(pair.graph_spec)
    a = resolve_action(pair.action_spec)
    h, m = quotient(g, a)
    r = choose_r(m, cap=r_cap)
    return PairBundle(name=name, source=g, target=h, map=m, r=r)


@dataclass(frozen=True)
class GapReport:
    """Outcome of a critical-point comparison across a quotient."""

    pair: str
    refused: bool = False
    reason: str = ""
    mode: Optional[str] = None
    pc_source: Optional[PcEstimate] = None
    pc_target: Optional[PcEstimate] = None
    gap: Optional[float] = None
    p_test: Optional[float] = None
    decay_rows: tuple = ()
    rows: tuple = ()
    ok: bool = True


def strict_gap_experiment(pair_name: str, n: int = 2000, seed: int = 0,
                          workers: int = 1, s: float = 0.0,
                          L_schedule: Sequence[int] = (8, 16),
                          tol: float = 0.004,
                          decay_L: Sequence[int] = (40, 44, 48)) -> GapReport:
    """Exhibit (or refuse to claim) a critical-point gap for a built-in pair.

    "bisect" pairs estimate p_c on both sides and report the gap
    between the point estimates (ok requires disjoint intervals);
    "decay" pairs estimate p_c on the source only and show that the
    quotient's sphere-hitting probability is already tiny just above it.
    Pairs whose quotient breaks the standing hypotheses are refused.
    """
    try:
        pair = PAIRS[pair_name]
    except KeyError:
        raise ValueError(f"unknown pair {pair_name!r}; known: {sorted(PAIRS)}")
    if not pair.hypotheses_ok:
        return GapReport(pair=pair_name, refused=True, reason=pair.reason,
                         ok=True)
    if pair.gap_mode is None:
        raise ValueError(f"pair {pair_name!r} has a finite or degenerate "
                         "quotient; no gap experiment is defined for it")
    bundle = build_pair(pair_name)
    r = bundle.r
    src = pc_bisect(bundle.source, r, s, pair.src_schedule or L_schedule, n,
                    rng.derive(seed, "source"), tol=tol, workers=workers,
                    graph_spec=pair.graph_spec)
    if pair.gap_mode == "bisect":
        tgt = pc_bisect(bundle.target, r, s, L_schedule, n,
                        rng.derive(seed, "target"), tol=tol, workers=workers,
                        graph_spec=f"quotient:{pair_name}")
        gap = tgt.point - src.point
        disjoint = tgt.lo > src.hi
        return GapReport(pair=pair_name, mode="bisect", pc_source=src,
                         pc_target=tgt, gap=gap,
                         rows=src.rows + tgt.rows,
                         ok=disjoint and gap > 0)
    # decay mode: theta_L on the quotient just above the source p_c
    p_test = min(src.point + 0.1, 0.999)
    rows = []
    for L in decay_L:
        params = ModelParams(p=p_test, s=s, r=r, L=L)
        est = theta_mc(bundle.target, None, params, n,
                       rng.derive(seed, ("decay", L)), workers=workers,
                       graph_spec=f"quotient:{pair_name}")
        rows.append(dict(p=p_test, s=s, L=L, theta=est.value,
                         stderr=est.stderr, n=n, seed=seed))
    ok = all(row["theta"] < 0.05 for row in rows)
    return GapReport(pair=pair_name, mode="decay", pc_source=src,
                     p_test=p_test, decay_rows=tuple(rows),
                     rows=src.rows + tuple(rows), ok=ok)


# -- surgery stress campaigns ------------------------------------------


@dataclass(frozen=True)
class SurgeryCampaign:
    """Bulk surgery check: every instance re-asserts the rebuild claims."""

    graph: str
    r: int
    L: int
    instances: int
    failures: int
    cases: dict
    replicas_used: int
    first_failure: Optional[str] = None


def _witness_local(h, z, e, r) -> bool:
    reach = 3 * r + 1
    return min(graph_distance(h, z, e[0], cap=200_000),
               graph_distance(h, z, e[1], cap=200_000)) <= reach


def _surgery_sweep(h, bound, rebuild, r, L, n, seed, p_range,
                   mark_density) -> SurgeryCampaign:
    """Shared driver: sample configurations, strip marks, rebuild,
    verify the witness.

    Each pivotal edge of a sampled configuration (marks included) is one
    instance.  A closed pivotal edge is first opened so the event is
    realized, as the rebuild lemma assumes.  Marks inside the edge
    window are stripped first; when stripping itself exposes an
    s-pivotal vertex that counts as a witness too, otherwise the
    mark-free configuration goes through the rebuild whose internal
    claims re-verify the outcome.  Either way the witness must be
    s-pivotal and lie within 3r+1 of the edge.
    """
    from .enhance import Configuration
    from .pivotal import (SurgeryError, is_s_pivotal, strip_alpha,
                          window_radius)

    a = bound.arena
    edge_support = frozenset(a.edges)
    vertex_support = frozenset(a.verts)
    allowed = [ei for ei in range(a.n_edges)
               if (bound.allowed_e >> ei) & 1]
    instances = failures = 0
    cases: dict = {}
    first_failure = None
    replica = 0
    max_replicas = 200 * n + 1000
    while instances < n and replica < max_replicas:
        gen = rng.replica_generator(seed, replica)
        replica += 1
        p = p_range[0] + (p_range[1] - p_range[0]) * gen.random()
        omega = 0
        for ei, bit in enumerate(gen.random(a.n_edges) < p):
            if bit:
                omega |= 1 << ei
        alpha = 0
        if mark_density > 0:
            for vi, bit in enumerate(gen.random(a.n_verts) < mark_density):
                if bit:
                    alpha |= 1 << vi
        base = bound.holds(omega, alpha)
        pivotal = []
        for ei in allowed:
            is_open = (omega >> ei) & 1
            if base and is_open:
                if not bound.holds(omega & ~(1 << ei), alpha):
                    pivotal.append(ei)
            elif not base and not is_open:
                if bound.holds(omega | (1 << ei), alpha):
                    pivotal.append(ei)
        if not pivotal:
            continue
        marked = frozenset(a.verts[vi] for vi in range(a.n_verts)
                           if (alpha >> vi) & 1)
        for ei in pivotal:
            instances += 1
            e = a.edges[ei]
            om = omega | (1 << ei) if not base else omega
            cfg = Configuration(
                open_edges=frozenset(a.edges[j] for j in range(a.n_edges)
                                     if (om >> j) & 1),
                marked=marked,
                edge_support=edge_support, vertex_support=vertex_support)
            try:
                strip = strip_alpha(h, cfg, e, window_radius(r),
                                    bound.event)
                if strip.found_witness:
                    z, out = strip.z, strip.configuration
                    case = "strip"
                else:
                    res = rebuild(strip.configuration, e)
                    z, out = res.z, res.omega_prime
                    case = res.case
                if not is_s_pivotal(h, out, z, bound.event):
                    raise SurgeryError(f"witness {z!r} is not s-pivotal")
                if not _witness_local(h, z, e, r):
                    raise SurgeryError(f"witness {z!r} outside the "
                                       f"locality window")
                cases[case] = cases.get(case, 0) + 1
            except SurgeryError as err:
                failures += 1
                if first_failure is None:
                    first_failure = f"replica {replica - 1}, " \
                                    f"edge {e!r}: {err}"
            if instances >= n:
                break
    return SurgeryCampaign(graph=h.name, r=r, L=L, instances=instances,
                           failures=failures, cases=cases,
                           replicas_used=replica,
                           first_failure=first_failure)


def surgery_campaign(h: GraphOracle, r: int, L: int, n: int, seed: int,
                     p_range=(0.2, 0.8),
                     mark_density: float = 0.0) -> SurgeryCampaign:
    """Random pivotal instances fed through the window rebuild.

    Configurations are Bernoulli draws at a random density (plus
    optional marks); every truncation-window edge that is pivotal for
    the sphere-hitting event becomes one instance.
    """
    from .pivotal import SphereEvent, bind_event, surgery

    bound = bind_event(h, SphereEvent(o=h.root, L=L, r=r))

    def rebuild(cfg, e):
        return surgery(h, cfg, e, h.root, r, L)

    return _surgery_sweep(h, bound, rebuild, r, L, n, seed, p_range,
                          mark_density)


def surgery_AB_campaign(h: GraphOracle, r: int, L: int, n: int, seed: int,
                        A=None, B=None, p_range=(0.2, 0.8),
                        mark_density: float = 0.0) -> SurgeryCampaign:
    """Rebuild campaign for the set-to-set linking event.

    With the sets omitted, A is the root and B the two canonically
    smallest vertices at the deepest admissible distance.
    """
    from .pivotal import LinkEvent, bind_event, surgery_AB

    if A is None:
        A = frozenset({h.root})
    if B is None:
        depth = L - 3 * r - 1
        shell = sorted((v for v, d in ball(h, h.root, depth).dist.items()
                        if d == depth), key=repr)
        B = frozenset(shell[:2])
    A, B = frozenset(A), frozenset(B)
    bound = bind_event(h, LinkEvent(A=A, B=B, L=L, r=r, origin=h.root))

    def rebuild(cfg, e):
        return surgery_AB(h, cfg, e, A, B, r, L)

    return _surgery_sweep(h, bound, rebuild, r, L, n, seed, p_range,
                          mark_density)


# -- coupling verification campaigns -----------------------------------


def inclusion_check(t) -> bool:
    """The headline marginal statement on one transcript.

    The enhanced cluster in the quotient must lie inside the projection
    of the plain Bernoulli cluster that the collapsed source bits span.
    Source lifts may wander along fibres well outside the horizon ball
    of the origin, so the walk uses every recorded copy bit rather than
    the horizon-window marginals.
    """
    g = t.map.source
    pi = t.map.project
    cur = {t.o_prime}
    stack = [t.o_prime]
    allowed = set()
    for (ep, _k), bit in t.eta.items():
        if bit:
            allowed.add(ep)
    while stack:
        v = stack.pop()
        for w in g.neighbors(v):
            if w not in cur and edge_key(v, w) in allowed:
                cur.add(w)
                stack.append(w)
    return t.C <= {pi(v) for v in cur}


def _corrupt_and_audit(t) -> Optional[bool]:
    """Zero out a load-bearing source-edge record; the audit must object.

    Returns None when the transcript has no open, cluster-carrying edge
    to corrupt (tiny clusters), True when some corruption is caught, and
    False when a corruptible event slipped past the audit.
    """
    import copy
    found = None
    for idx, ev in enumerate(t.events):
        if ev[2] != "omega":
            continue
        e, packed = ev[3], ev[4]
        if packed == 0 or e not in t.lift_of:
            continue
        ep = t.lift_of[e]
        if ep[0] in t.C_prime and ep[1] in t.C_prime:
            found = False
            bad = copy.copy(t)
            bad.events = list(t.events)
            bad.events[idx] = ev[:4] + (0,)
            report = audit_conditions(bad)
            if not report.ok:
                return True
    return found


@dataclass(frozen=True)
class CampaignReport:
    """Aggregate outcome of a batch of audited coupling runs."""

    pair: str
    n_runs: int
    params: CouplingParams
    run_errors: int
    audit_failures: int
    inclusion_failures: int
    truncated: int
    alpha_count: int
    alpha_trials: int
    alpha_z: float
    omega_mean: float
    omega_z: float
    omega_edges: tuple                 # (edge repr, count, trials, z)
    table: tuple
    chi2_pvalue: float
    corruption_detected: Optional[bool]
    ok: bool


def _target_marginals(t):
    """Collapsed quotient-side bits only.

    Skips the source-side eta fill of extract_marginals, which draws one
    coin per (edge, copy) pair across the whole horizon ball and
    dominates campaign runtime on high-degree pairs.
    """
    p = t.params
    h = t.map.target
    omega_h = {}
    for e in sorted(ball(h, t.o, p.horizon).edges, key=repr):
        if e in t.omega:
            bits = t.omega[e]
        else:
            gen = rng.generator(t.seed, "omega", e)
            bits = tuple((gen.random(p.M) < p.phat).astype(int))
        omega_h[e] = int(max(bits))
    alpha = {u: t.alpha[u]
             for u in ball(h, t.o, p.horizon).dist if u in t.alpha}
    return omega_h, alpha


def _couple_chunk(bundle: PairBundle, params: CouplingParams, seed: int,
                  start: int, stop: int) -> dict:
    h = bundle.target
    o = h.root
    tracked_v = sorted(ball(h, o, 1).dist, key=repr)
    tracked_e = sorted(ball(h, o, 1).edges, key=repr)
    tally = dict(run_errors=0, audit_failures=0, inclusion_failures=0,
                 truncated=0, alpha_count=0, alpha_trials=0,
                 omega_count=0, omega_trials=0,
                 table=[[0, 0], [0, 0]],
                 per_edge={repr(e): [0, 0] for e in tracked_e})
    for i in range(start, stop):
        sd = rng.derive(seed, ("replica", i))
        try:
            t = run_coupling(bundle.map, bundle.source.root, params, sd)
        except CouplingError:
            tally["run_errors"] += 1
            continue
        if not audit_conditions(t).ok:
            tally["audit_failures"] += 1
        if not inclusion_check(t):
            tally["inclusion_failures"] += 1
        tally["truncated"] += t.truncated
        omega_h, alpha = _target_marginals(t)
        for u in tracked_v:
            a = alpha.get(u)
            if a is None:
                continue
            tally["alpha_trials"] += 1
            tally["alpha_count"] += a
            for e in tracked_e:
                w = omega_h.get(e)
                if w is not None:
                    tally["table"][w][a] += 1
        for e in tracked_e:
            w = omega_h.get(e)
            if w is not None:
                tally["omega_trials"] += 1
                tally["omega_count"] += w
                cell = tally["per_edge"][repr(e)]
                cell[0] += w
                cell[1] += 1
    return tally


def _couple_task(args):
    name, pd, seed, start, stop = args
    bundle = build_pair(name)
    return _couple_chunk(bundle, CouplingParams(**pd), seed, start, stop)


def couple_verify_campaign(pair_name: str, n_runs: int, seed: int,
                           p: float, epsilon: float,
                           horizon: Optional[int] = None,
                           s: Optional[float] = None,
                           workers: int = 1,
                           corrupt_check: bool = True) -> CampaignReport:
    """Run, audit and marginal-test a batch of coupled explorations.

    With s omitted the admissible (M, s) pair from the degree bound is
    used; an explicit s (still below the wiring bound) makes marks
    frequent enough for a meaningful independence test.
    """
    bundle = build_pair(pair_name)
    r = bundle.r
    if horizon is None:
        horizon = 3 * r + 2
    if s is None:
        params = default_params(bundle.map, p, epsilon, r, horizon)
    else:
        M, _ = choose_M_s(bundle.source.degree_bound, r, epsilon)
        params = CouplingParams(p=p, epsilon=epsilon, r=r, M=M, s=s,
                                phat=phat(p, M), horizon=horizon)
        params.validate_against(bundle.map)

    chunks = [(a, min(a + COUPLE_CHUNK, n_runs))
              for a in range(0, n_runs, COUPLE_CHUNK)]
    if workers > 1:
        pd = dict(p=params.p, epsilon=params.epsilon, r=params.r,
                  M=params.M, s=params.s, phat=params.phat,
                  horizon=params.horizon)
        tasks = [(pair_name, pd, seed, a, b) for a, b in chunks]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_couple_task, tasks))
    else:
        parts = [_couple_chunk(bundle, params, seed, a, b)
                 for a, b in chunks]

    tally = parts[0]
    for part in parts[1:]:
        for k, v in part.items():
            if k == "table":
                for i in (0, 1):
                    for j in (0, 1):
                        tally["table"][i][j] += v[i][j]
            elif k == "per_edge":
                for key, cell in v.items():
                    tally["per_edge"][key][0] += cell[0]
                    tally["per_edge"][key][1] += cell[1]
            else:
                tally[k] += v

    at, ac = tally["alpha_trials"], tally["alpha_count"]
    alpha_z = 0.0
    if at and 0 < params.s < 1:
        alpha_z = ((ac - at * params.s)
                   / math.sqrt(at * params.s * (1 - params.s)))
    ot, oc = tally["omega_trials"], tally["omega_count"]
    omega_mean = oc / ot if ot else float("nan")
    omega_z = 0.0
    if ot and 0 < params.p < 1:
        omega_z = ((oc - ot * params.p)
                   / math.sqrt(ot * params.p * (1 - params.p)))
    omega_edges = []
    for key in sorted(tally["per_edge"]):
        c, m = tally["per_edge"][key]
        z = 0.0
        if m and 0 < params.p < 1:
            z = (c - m * params.p) / math.sqrt(m * params.p * (1 - params.p))
        omega_edges.append((key, c, m, z))
    table = tally["table"]
    rows_ok = all(sum(row) for row in table)
    cols_ok = all(table[0][j] + table[1][j] for j in (0, 1))
    if rows_ok and cols_ok:
        chi2_p = float(_stats.chi2_contingency(table).pvalue)
    else:
        chi2_p = 1.0   # a degenerate margin carries no dependence evidence

    corruption = None
    if corrupt_check:
        # probe until a transcript actually has a corruptible event
        for k in range(25):
            t = run_coupling(bundle.map, bundle.source.root, params,
                             rng.derive(seed, ("corruption-probe", k)))
            corruption = _corrupt_and_audit(t)
            if corruption is not None:
                break

    ok = (tally["run_errors"] == 0 and tally["audit_failures"] == 0
          and tally["inclusion_failures"] == 0
          and abs(alpha_z) <= 3 and abs(omega_z) <= 4
          and chi2_p > 1e-3
          and corruption is not False)
    return CampaignReport(
        pair=pair_name, n_runs=n_runs, params=params,
        run_errors=tally["run_errors"],
        audit_failures=tally["audit_failures"],
        inclusion_failures=tally["inclusion_failures"],
        truncated=tally["truncated"],
        alpha_count=ac, alpha_trials=at, alpha_z=alpha_z,
        omega_mean=omega_mean, omega_z=omega_z,
        omega_edges=tuple(omega_edges),
        table=tuple(tuple(row) for row in table),
        chi2_pvalue=chi2_p, corruption_detected=corruption, ok=ok)
