"""Exploration coupling between a graph and its quotient.

Both graphs are blown up into multigraphs with M parallel copies per
edge, each copy open with probability phat = 1 - (1-p)^{1/M}, so that a
base edge is open (some copy open) with probability exactly p.  A joint
exploration then grows the enhanced cluster of the quotient origin and a
connected preimage of it simultaneously: quotient edges consume the
omega-field, their chosen lifts inherit those same bits into eta, and
enhancement marks are paid for by wiring a fibre pattern behind fresh
eta-bits, with an acceptance coin correcting the success probability of
that wiring down to exactly s.

The net effect, asserted per run rather than statistically: the
projection maps the source cluster onto the quotient cluster, the source
cluster is contained in an honest p-percolation cluster, and the
quotient-side marginals are exactly Ber(p) edges and Ber(s) marks.

Five structural conditions are checked after every iteration, and a
finished transcript can be re-audited offline from its event log alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import rng
from .cover import CoveringMap, pattern_set
from .graphs import GraphOracle, ball, edge_key


class CouplingError(Exception):
    """A structural guarantee of the exploration failed: tripwire."""

    def __init__(self, message, event_index=None):
        super().__init__(message)
        self.event_index = event_index


def phat(p: float, M: int) -> float:
    """Per-copy probability so that M parallel copies reproduce p."""
    if not 0 <= p <= 1:
        raise ValueError("p must be a probability")
    if M < 1:
        raise ValueError("M must be at least 1")
    return 1 - (1 - p) ** (1 / M)


def choose_M_s(D: int, r: int, epsilon: float):
    """Copy count and mark density from the degree bound alone.

    M = D^{r+2} copies dominate any union of two r-balls; s is small
    enough that a full fresh wiring of a 3r-ball is always at least as
    likely as a mark.
    """
    if D < 2 or r < 1 or not 0 < epsilon < 1:
        raise ValueError("need D >= 2, r >= 1, 0 < epsilon < 1")
    M = D ** (r + 2)
    s = (1 - (1 - epsilon) ** (1 / M)) ** (D ** (3 * r + 2))
    return M, s


@dataclass(frozen=True)
class CouplingParams:
    p: float
    epsilon: float
    r: int
    M: int
    s: float
    phat: float
    horizon: int

    def __post_init__(self):
        if not 0 < self.epsilon <= self.p <= 1:
            raise ValueError("need 0 < epsilon <= p <= 1")
        if self.r < 1 or self.M < 1 or self.horizon < 1:
            raise ValueError("r, M and horizon must be positive")
        if abs(self.phat - phat(self.p, self.M)) > 1e-12:
            raise ValueError("phat is not 1-(1-p)^(1/M)")
        if not 0 <= self.s <= 1:
            raise ValueError("s must be a probability")

    def validate_against(self, m: CoveringMap, sample_radius: int = 2,
                         cap: int = 200_000):
        """Check the two admissibility displays on sampled balls.

        Every target edge must have |B_r(x) u B_r(y)| <= M, and s must
        not exceed the full-wiring bound (1-(1-eps)^{1/M})^{|E(B_{3r+1})|}
        at sampled source vertices.
        """
        h, g = m.target, m.source
        r = self.r
        for x in sorted(ball(h, h.root, sample_radius).dist):
            for y in h.neighbors(x):
                joint = set(ball(h, x, r).dist) | set(ball(h, y, r).dist)
                if len(joint) > self.M:
                    raise ValueError(
                        f"M={self.M} below joint ball size {len(joint)} "
                        f"at target edge {edge_key(x, y)!r}")
        base = 1 - (1 - self.epsilon) ** (1 / self.M)
        for x in sorted(ball(g, g.root, sample_radius).dist):
            b = ball(g, x, 3 * r + 1, cap)
            bound = base ** len(b.edges)
            if self.s > bound * (1 + 1e-12):
                raise ValueError(
                    f"s={self.s} above the wiring bound {bound} at "
                    f"source vertex {x!r}")
        return True


def default_params(m: CoveringMap, p: float, epsilon: float, r: int,
                   horizon: int) -> CouplingParams:
    """The explicit admissible choice driven by the source degree bound."""
    M, s = choose_M_s(m.source.degree_bound, r, epsilon)
    params = CouplingParams(p=p, epsilon=epsilon, r=r, M=M, s=s,
                            phat=phat(p, M), horizon=horizon)
    params.validate_against(m)
    return params


@dataclass
class CouplingTranscript:
    """Complete record of one exploration run.

    `events` is an append-only log sufficient to re-derive and re-audit
    every intermediate state; the remaining fields are the final state
    for convenient consumption.
    """

    map: CoveringMap
    params: CouplingParams
    seed: int
    o: object
    o_prime: object
    events: list = field(default_factory=list)
    omega: dict = field(default_factory=dict)      # target edge -> M bits
    eta: dict = field(default_factory=dict)        # (source edge, k) -> bit
    alpha: dict = field(default_factory=dict)      # target vertex -> bit
    p_explored_h: set = field(default_factory=set)
    p_explored_g: set = field(default_factory=set)  # source edges (all copies)
    s_explored_g: set = field(default_factory=set)  # (source edge, k)
    s_explored_v: set = field(default_factory=set)
    lift_of: dict = field(default_factory=dict)     # target edge -> its lift
    C: set = field(default_factory=set)
    C_prime: set = field(default_factory=set)
    truncated: bool = False
    steps: int = 0

    def to_lines(self):
        out = []
        for ev in self.events:
            out.append("\t".join(_fmt(x) for x in ev))
        return out


def _fmt(x):
    return repr(x).replace(" ", "")


# -- the exploration ---------------------------------------------------


class _Run:
    def __init__(self, m: CoveringMap, o_prime, params: CouplingParams,
                 seed: int):
        self.m = m
        self.g, self.h, self.pi = m.source, m.target, m.project
        self.params = params
        self.seed = seed
        self.o_prime = o_prime
        self.o = self.pi(o_prime)
        self.t = CouplingTranscript(map=m, params=params, seed=seed,
                                    o=self.o, o_prime=o_prime)
        self.t.C = {self.o}
        self.t.C_prime = {o_prime}
        self.hdist = ball(self.h, self.o,
                          params.horizon + params.r + 1).dist
        self._omega_prime = {}
        self._step = 0
        self._n = 0

    # omega on the quotient multigraph, revealed lazily per base edge
    def omega_bits(self, e):
        t = self.t
        if e not in t.omega:
            gen = rng.generator(self.seed, "omega", e)
            bits = (gen.random(self.params.M) < self.params.phat).astype(int)
            t.omega[e] = tuple(int(b) for b in bits)
            self.log("omega", e, sum(b << i for i, b in enumerate(t.omega[e])))
        return t.omega[e]

    # independent field on the source multigraph
    def omega_prime_bits(self, ep):
        if ep not in self._omega_prime:
            gen = rng.generator(self.seed, "omega-prime", ep)
            bits = (gen.random(self.params.M) < self.params.phat).astype(int)
            self._omega_prime[ep] = tuple(int(b) for b in bits)
        return self._omega_prime[ep]

    def log(self, action, *args):
        self.t.events.append((self._step, self._n, action) + args)

    def edge_open(self, e) -> bool:
        return any(self.omega_bits(e))

    def ball_fully_open(self, u) -> bool:
        b = ball(self.h, u, self.params.r)
        return all(self.edge_open(e) for e in sorted(b.edges))

    def run(self) -> CouplingTranscript:
        t = self.t
        while True:
            before = set(t.C)
            self._step += 1
            self.odd_step()
            if t.truncated:
                break
            self._step += 1
            self.even_step()
            if t.truncated or t.C == before:
                break
        t.steps = self._step
        self.step_inf()
        return t

    # odd: consume the quotient field along the cluster boundary and
    # copy the bits onto one chosen lift per edge
    def odd_step(self):
        t = self.t
        self._n = 0
        while True:
            e = self.smallest_unexplored_edge()
            if e is None:
                return
            x, y = e
            u = x if x in t.C else y   # edge keys are sorted pairs, so
            v = y if u == x else x     # ties resolve to the smaller key
            ep = self.pick_lift(e, u)
            if ep in t.p_explored_g or \
                    any((ep, k) in t.s_explored_g
                        for k in range(self.params.M)):
                raise CouplingError(f"lift {ep!r} already explored",
                                    len(t.events))
            t.p_explored_h.add(e)
            t.p_explored_g.add(ep)
            t.lift_of[e] = ep
            self.log("p-explore", e, ep)
            bits = self.omega_bits(e)
            for k, bit in enumerate(bits):
                t.eta[(ep, k)] = bit
            if any(bits):
                if v not in t.C:
                    t.C.add(v)
                    self.log("add-C", v)
                for w in ep:
                    if w not in t.C_prime:
                        t.C_prime.add(w)
                        self.log("add-Cp", w)
            self.boundary_check()
            if self.beyond_horizon():
                return
            self._n += 1

    def smallest_unexplored_edge(self):
        t = self.t
        best = None
        for u in t.C:
            for w in self.h.neighbors(u):
                e = edge_key(u, w)
                if e not in t.p_explored_h and (best is None or e < best):
                    best = e
        return best

    def pick_lift(self, e, u):
        """Lift of e leaving the source cluster above u; the candidate
        whose outer endpoint is smallest wins."""
        t = self.t
        x, y = e
        v = y if u == x else x
        cands = []
        for xp in t.C_prime:
            if self.pi(xp) != u:
                continue
            for wp in self.g.neighbors(xp):
                if self.pi(wp) == v and edge_key(self.pi(xp), self.pi(wp)) == e:
                    cands.append((wp in t.C_prime, wp, xp))
        if not cands:
            raise CouplingError(f"no lift of {e!r} available at {u!r}",
                                len(t.events))
        cands.sort(key=lambda c: (c[0], repr(c[1]), repr(c[2])))
        _, wp, xp = cands[0]
        return edge_key(xp, wp)

    # even: pay for marks by wiring a fibre pattern behind fresh bits
    def even_step(self):
        t = self.t
        p = self.params
        self._n = 0
        for u in sorted(t.C, key=repr):
            if u in t.s_explored_v:
                continue
            if not self.ball_fully_open(u):
                continue
            self.process_mark(u)
            self.boundary_check()
            if self.beyond_horizon():
                return
            self._n += 1

    def process_mark(self, u):
        t = self.t
        p = self.params
        x = min((xp for xp in t.C_prime if self.pi(xp) == u), key=repr)
        Z = pattern_set(self.m, x, p.r, verify=False).vertices

        # wire the unexplored pattern edges with fresh bits
        z_edges = set()
        for a in Z:
            for w in self.g.neighbors(a):
                if w in Z:
                    z_edges.add(edge_key(a, w))
        n4_bits = []
        for ep in sorted(z_edges, key=repr):
            if ep in t.p_explored_g:
                continue
            k = self.fresh_copy(ep)
            bit = self.omega_prime_bits(ep)[k]
            t.eta[(ep, k)] = bit
            t.s_explored_g.add((ep, k))
            self.log("s-copy", ep, k, bit)
            n4_bits.append(bit)
        performed = all(n4_bits)  # vacuously true when nothing was wired

        # the outward connectors are determined before their bits are read
        connectors = self.select_connectors(u, Z)
        n4, n5 = len(n4_bits), len(connectors)
        success = False
        if performed:
            bits5 = []
            for e_h, ep, k in connectors:
                bit = self.omega_prime_bits(ep)[k]
                t.eta[(ep, k)] = bit
                t.s_explored_g.add((ep, k))
                self.log("s-copy", ep, k, bit)
                bits5.append(bit)
            success = all(bits5)
        q = p.phat ** (n4 + n5)
        # every wired bit lives within distance 3r+1 of x, so the full
        # wiring bound from the admissibility display applies
        wiring_edges = len(ball(self.g, x, 3 * p.r + 1).edges)
        if n4 + n5 > wiring_edges:
            raise CouplingError(
                f"wired {n4 + n5} bits but only {wiring_edges} edges fit "
                f"the pattern window of {x!r}", len(t.events))
        if q < p.s - 1e-12:
            raise CouplingError(f"acceptance ratio undefined: q={q} < s={p.s}",
                                len(t.events))
        self.log("q", u, n4, n5, int(performed), int(success))
        if performed and success:
            accept = rng.uniform(self.seed, "accept", u) < p.s / q
            a_u = int(accept)
        else:
            a_u = 0
        t.alpha[u] = a_u
        t.s_explored_v.add(u)
        self.log("alpha", u, a_u)
        if a_u:
            sphere = {v for v, d in ball(self.h, u, p.r + 1).dist.items()
                      if d == p.r + 1}
            for v in sorted(sphere, key=repr):
                if v not in t.C:
                    t.C.add(v)
                    self.log("add-C", v)
            grown = set(Z)
            for _, ep, _ in connectors:
                grown.update(ep)
            for w in sorted(grown, key=repr):
                if w not in t.C_prime:
                    t.C_prime.add(w)
                    self.log("add-Cp", w)

    def fresh_copy(self, ep, used=None) -> int:
        t = self.t
        for k in range(self.params.M):
            if (ep, k) in t.s_explored_g:
                continue
            if used is not None and (ep, k) in used:
                continue
            return k
        raise CouplingError(f"all copies of {ep!r} consumed", len(t.events))

    def select_connectors(self, u, Z):
        """One unexplored lift copy for every edge from the r-sphere out.

        The choice depends only on exploration statuses, never on bit
        values, so the acceptance probability is computable in advance.
        """
        t = self.t
        p = self.params
        bdist = ball(self.h, u, p.r + 1).dist
        out_edges = set()
        for a, d in bdist.items():
            if d != p.r:
                continue
            for w in self.h.neighbors(a):
                if bdist.get(w) == p.r + 1:
                    out_edges.add(edge_key(a, w))
        used = set()
        chosen = []
        for e_h in sorted(out_edges, key=repr):
            cands = []
            for a in Z:
                for w in self.g.neighbors(a):
                    if w in Z:
                        continue
                    ep = edge_key(a, w)
                    if ep in t.p_explored_g:
                        continue
                    if edge_key(self.pi(a), self.pi(w)) == e_h:
                        cands.append(ep)
            if not cands:
                raise CouplingError(
                    f"no unexplored lift of {e_h!r} touches the pattern "
                    f"of {u!r}", len(t.events))
            ep = min(cands, key=repr)
            k = self.fresh_copy(ep, used)
            used.add((ep, k))
            chosen.append((e_h, ep, k))
        return chosen

    def beyond_horizon(self) -> bool:
        t = self.t
        far = [v for v in t.C
               if self.hdist.get(v, self.params.horizon + 1)
               > self.params.horizon]
        if far:
            t.truncated = True
            self.log("truncated")
            return True
        return False

    def boundary_check(self):
        self.log("check")
        report = check_conditions(self.t)
        if not report.ok:
            raise CouplingError(f"condition {report.failed} violated: "
                                f"{report.detail}", len(self.t.events))

    def step_inf(self):
        """Complete the unassigned bits over the horizon supports with
        fresh independent draws."""
        t = self.t
        p = self.params
        self.log("step-inf")
        g_support = ball(self.g, self.o_prime, p.horizon).edges
        for ep in sorted(g_support, key=repr):
            missing = [k for k in range(p.M) if (ep, k) not in t.eta]
            if not missing:
                continue
            bits = rng.generator(self.seed, "eta-fill", ep).random(p.M)
            for k in missing:
                t.eta[(ep, k)] = int(bits[k] < p.phat)
        for u in sorted(ball(self.h, self.o, p.horizon).dist, key=repr):
            if u not in t.alpha:
                t.alpha[u] = rng.coin(self.seed, "alpha-fill", u, p.s)


def run_coupling(m: CoveringMap, o_prime, params: CouplingParams,
                 seed: int) -> CouplingTranscript:
    """Run one joint exploration from a source origin; see module doc.

    Raises CouplingError the moment any structural condition fails; a
    returned transcript has passed every per-iteration check.
    """
    return _Run(m, o_prime, params, seed).run()


# -- conditions and audit ----------------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    ok: bool
    failed: Optional[str] = None
    detail: str = ""
    checks: int = 0


def check_conditions(t: CouplingTranscript) -> ConditionReport:
    """The five structural conditions on the current state."""
    return _check_state(t.map, t.params,
                        t.p_explored_h, t.p_explored_g, t.s_explored_g,
                        t.s_explored_v, t.lift_of, t.eta,
                        t.C, t.C_prime, t.o_prime)


def _check_state(m, params, p_h, p_g, s_g, s_v, lift_of, eta, C, Cp,
                 o_prime):
    pi = m.project
    g, h = m.source, m.target
    # (A) explored quotient edges have exactly one fully explored lift
    for e in p_h:
        ep = lift_of.get(e)
        if ep is None:
            return ConditionReport(False, "A", f"no recorded lift of {e!r}")
        if edge_key(pi(ep[0]), pi(ep[1])) != e:
            return ConditionReport(False, "A",
                                   f"lift {ep!r} does not project to {e!r}")
        missing = [k for k in range(params.M) if (ep, k) not in eta]
        if missing:
            return ConditionReport(False, "A",
                                   f"copies {missing} of {ep!r} unassigned")
    # (B) unexplored quotient edges have fully untouched lifts
    for ep in p_g:
        if edge_key(pi(ep[0]), pi(ep[1])) not in p_h:
            return ConditionReport(False, "B",
                                   f"explored lift {ep!r} of an unexplored "
                                   f"edge")
    for (ep, k) in s_g:
        if edge_key(pi(ep[0]), pi(ep[1])) not in p_h:
            return ConditionReport(False, "B",
                                   f"consumed copy of {ep!r} under an "
                                   f"unexplored edge")
    # (C) the source cluster is connected to its origin by open bits
    open_adj = {}
    for (ep, k), bit in eta.items():
        if bit:
            a, b = ep
            open_adj.setdefault(a, set()).add(b)
            open_adj.setdefault(b, set()).add(a)
    seen = {o_prime}
    stack = [o_prime]
    while stack:
        v = stack.pop()
        for w in open_adj.get(v, ()):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    stray = Cp - seen
    if stray:
        return ConditionReport(False, "C",
                               f"{len(stray)} cluster vertices not "
                               f"connected: {sorted(stray, key=repr)[:3]}")
    # (D) per-lift copy consumption is funded by nearby explored marks
    r = params.r
    per_edge = {}
    for (ep, k) in s_g:
        per_edge[ep] = per_edge.get(ep, 0) + 1
    for ep, count in per_edge.items():
        e = edge_key(pi(ep[0]), pi(ep[1]))
        near = set(ball(h, e[0], r).dist) | set(ball(h, e[1], r).dist)
        funded = len(near & s_v)
        if count > funded:
            return ConditionReport(False, "D",
                                   f"{count} copies of {ep!r} vs {funded} "
                                   f"marks nearby")
    # (E) projection maps the source cluster onto the quotient cluster
    proj = {pi(v) for v in Cp}
    if proj != C:
        return ConditionReport(False, "E",
                               f"projection image differs: "
                               f"{sorted(proj ^ C, key=repr)[:3]}")
    return ConditionReport(True)


def audit_conditions(t: CouplingTranscript) -> ConditionReport:
    """Replay the event log from scratch and re-validate every logged
    boundary; tampering with any event surfaces here."""
    p_h, p_g, s_g, s_v = set(), set(), set(), set()
    lift_of, eta, alpha = {}, {}, {}
    omega_vals = {}
    C, Cp = {t.o}, {t.o_prime}
    checks = 0

    def inherit(e):
        ep = lift_of.get(e)
        packed = omega_vals.get(e)
        if ep is not None and packed is not None:
            for k in range(t.params.M):
                eta[(ep, k)] = packed >> k & 1

    for idx, ev in enumerate(t.events):
        action = ev[2]
        args = ev[3:]
        if action == "p-explore":
            e, ep = args
            p_h.add(e)
            p_g.add(ep)
            lift_of[e] = ep
            inherit(e)
        elif action == "omega":
            e, packed = args
            omega_vals[e] = packed
            inherit(e)
        elif action == "s-copy":
            ep, k, bit = args
            s_g.add((ep, k))
            eta[(ep, k)] = bit
        elif action == "alpha":
            u, bit = args
            alpha[u] = bit
            s_v.add(u)
        elif action == "add-C":
            C.add(args[0])
        elif action == "add-Cp":
            Cp.add(args[0])
        elif action == "check":
            checks += 1
            rep = _check_state(t.map, t.params, p_h, p_g, s_g, s_v,
                               lift_of, eta, C, Cp, t.o_prime)
            if not rep.ok:
                return ConditionReport(False, rep.failed,
                                       f"event {idx}: {rep.detail}", checks)
    return ConditionReport(True, checks=checks)


# -- marginals ---------------------------------------------------------


def extract_marginals(t: CouplingTranscript):
    """Collapse the copy dimension over the horizon supports.

    Returns (omega_H, alpha, eta_G): per-edge and per-vertex bits whose
    laws are Ber(p), Ber(s) and Ber(p) respectively.  Unrevealed
    quotient bits are drawn from the same keyed streams, so extraction
    is deterministic given the transcript seed.
    """
    p = t.params
    h, g = t.map.target, t.map.source
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
    eta_g = {}
    for ep in sorted(ball(g, t.o_prime, p.horizon).edges, key=repr):
        bits = [t.eta.get((ep, k)) for k in range(p.M)]
        if any(b is None for b in bits):
            fill = rng.generator(t.seed, "eta-fill", ep).random(p.M)
            bits = [b if b is not None else int(fill[k] < p.phat)
                    for k, b in enumerate(bits)]
        eta_g[ep] = int(max(bits))
    return omega_h, alpha, eta_g
