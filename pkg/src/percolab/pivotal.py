"""Pivotality, derivative identities, and pivotality-transfer surgery.

The reach events used here are finite-dimensional: configurations are
truncated to the radius-L ball around the event origin (bits outside the
ball are read as closed/unmarked), so every event depends on finitely
many coordinates and Margulis-Russo differentiation applies verbatim.

The surgery operations rebuild a configuration inside a bounded window
around a pivotal edge so that a single vertex mark becomes decisive:
edge-pivotality is traded for vertex-pivotality without touching
anything outside the window.  Every run re-asserts the full chain of
intermediate claims; a failed claim raises with a replayable dump rather
than being papered over.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .arena import Arena, iter_bits
from .enhance import Configuration, ModelParams, SupportError
from .graphs import GraphOracle, edge_key

R_FACTOR = 3          # surgery window radius R = 3r + 1
L_MIN_FACTOR = 2      # smallest usable truncation radius L_0 = 2r + 2


def window_radius(r: int) -> int:
    return R_FACTOR * r + 1


def min_truncation(r: int) -> int:
    return L_MIN_FACTOR * r + 2


class SurgeryError(Exception):
    """A surgery precondition does not hold for the given input."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class WitnessSearchError(SurgeryError):
    """No admissible connector vertex exists where one is required.

    This cannot happen for a pivotal edge with a stripped configuration;
    an instance of this error is a finding about the growth dynamics,
    not a recoverable condition, so the full instance is attached.
    """


class ClaimFailure(SurgeryError):
    """An intermediate claim of the surgery argument failed at runtime."""


# -- events ------------------------------------------------------------


@dataclass(frozen=True)
class SphereEvent:
    """The cluster of `o` meets the sphere of radius L around `o`.

    Evaluated on configurations truncated to B_L(o).
    """

    o: object
    L: int
    r: int


@dataclass(frozen=True)
class LinkEvent:
    """The cluster of the set A meets the set B.

    Evaluated on configurations truncated to B_L(origin); both sets must
    sit inside that ball.
    """

    A: frozenset
    B: frozenset
    L: int
    r: int
    origin: object


class _BoundEvent:
    """An event attached to a concrete arena, evaluated on bitmasks."""

    def __init__(self, h: GraphOracle, event):
        self.graph = h
        self.event = event
        origin = event.o if isinstance(event, SphereEvent) else event.origin
        self.origin = origin
        self.arena = Arena(h, [origin], event.L + event.r + 1, event.r)
        a = self.arena
        self.allowed_v = a.ball_at(event.L)
        self.allowed_e = a.edges_inside(self.allowed_v)
        if isinstance(event, SphereEvent):
            self.roots_mask = 1 << a.vid[origin]
            self.target_mask = a.sphere_at(event.L)
        else:
            self.roots_mask = a.vmask(event.A)
            self.target_mask = a.vmask(event.B)
            if self.roots_mask & ~self.allowed_v or \
               self.target_mask & ~self.allowed_v:
                raise ValueError("event sets must lie inside the "
                                 "truncation ball")

    def holds(self, omega: int, alpha: int) -> int:
        final = self.arena.grow(omega & self.allowed_e,
                                alpha & self.allowed_v, self.roots_mask)
        return int(bool(final & self.target_mask))

    def grow(self, omega: int, alpha: int) -> int:
        return self.arena.grow(omega & self.allowed_e,
                               alpha & self.allowed_v, self.roots_mask)

    def masks(self, cfg: Configuration, strict: bool = True):
        """Bitmask view of a configuration; supports must cover the
        truncated coordinates when strict."""
        a = self.arena
        if strict:
            missing = [a.verts[i] for i in iter_bits(self.allowed_v)
                       if a.verts[i] not in cfg.vertex_support]
            missing += [a.edges[i] for i in iter_bits(self.allowed_e)
                        if a.edges[i] not in cfg.edge_support]
            if missing:
                raise SupportError(
                    f"{len(missing)} event coordinates outside the "
                    f"configuration supports")
        omega = 0
        for i in iter_bits(self.allowed_e):
            if a.edges[i] in cfg.open_edges:
                omega |= 1 << i
        alpha = 0
        for i in iter_bits(self.allowed_v):
            if a.verts[i] in cfg.marked:
                alpha |= 1 << i
        return omega, alpha


_BOUND_CACHE: dict = {}


def bind_event(h: GraphOracle, event) -> _BoundEvent:
    key = (h, event)
    if key not in _BOUND_CACHE:
        if len(_BOUND_CACHE) > 64:
            _BOUND_CACHE.clear()
        _BOUND_CACHE[key] = _BoundEvent(h, event)
    return _BOUND_CACHE[key]


def event_holds(h: GraphOracle, cfg: Configuration, event) -> int:
    b = bind_event(h, event)
    return b.holds(*b.masks(cfg))


# -- pivotality --------------------------------------------------------


@dataclass(frozen=True)
class PivotalWitness:
    kind: str                     # "p" (edge) or "s" (vertex)
    coordinate: object            # the pivotal edge or vertex
    event: object
    configuration: Configuration


def is_p_pivotal(h: GraphOracle, cfg: Configuration, e, event) -> int:
    """Whether flipping the edge flips the event, all else fixed."""
    b = bind_event(h, event)
    omega, alpha = b.masks(cfg)
    e = edge_key(*e)
    ei = b.arena.eid.get(e)
    if ei is None or not b.allowed_e >> ei & 1:
        return 0
    bit = 1 << ei
    return int(b.holds(omega | bit, alpha) and not b.holds(omega & ~bit, alpha))


def is_s_pivotal(h: GraphOracle, cfg: Configuration, x, event) -> int:
    """Whether flipping the vertex mark flips the event, all else fixed."""
    b = bind_event(h, event)
    omega, alpha = b.masks(cfg)
    vi = b.arena.vid.get(x)
    if vi is None or not b.allowed_v >> vi & 1:
        return 0
    bit = 1 << vi
    return int(b.holds(omega, alpha | bit) and not b.holds(omega, alpha & ~bit))


def pivotal_probabilities(h: GraphOracle, params: ModelParams, event,
                          exact: bool = False):
    """Exact event probability, its two partial derivatives, and every
    per-coordinate pivotality probability, by full enumeration.

    Returns (theta, dtheta_dp, dtheta_ds, edge_probs, vertex_probs)
    where the dicts map truncated coordinates to exact pivotality
    probabilities.  The derivatives are computed by differentiating each
    configuration weight in closed form, so they are exact in the same
    arithmetic as the weights.
    """
    b = bind_event(h, params_event_attach(event, params))
    e_ids = list(iter_bits(b.allowed_e))
    v_ids = list(iter_bits(b.allowed_v))
    ne, nv = len(e_ids), len(v_ids)
    if ne + nv > 24:
        raise ValueError(f"enumeration bound exceeded: {ne + nv} > 24 bits")

    if exact:
        p = Fraction(params.p)
        s = Fraction(params.s)
        one = Fraction(1)
    else:
        p = float(params.p)
        s = float(params.s)
        one = 1.0
    pw = _powers(p, ne, one)
    qw = _powers(1 - p, ne, one)
    sw = _powers(s, nv, one)
    tw = _powers(1 - s, nv, one)

    omegas = [0] * (1 << ne)
    for sel in range(1, 1 << ne):
        low = sel & -sel
        omegas[sel] = omegas[sel ^ low] | (1 << e_ids[low.bit_length() - 1])
    alphas = [0] * (1 << nv)
    for sel in range(1, 1 << nv):
        low = sel & -sel
        alphas[sel] = alphas[sel ^ low] | (1 << v_ids[low.bit_length() - 1])

    table = bytearray(1 << (ne + nv))
    for esel in range(1 << ne):
        base = esel << nv
        om = omegas[esel]
        for vsel in range(1 << nv):
            table[base | vsel] = b.holds(om, alphas[vsel])

    zero = one * 0
    theta = zero
    dp = zero
    ds = zero
    edge_tot = [zero] * ne
    vert_tot = [zero] * nv
    for esel in range(1 << ne):
        k = esel.bit_count()
        we = pw[k] * qw[ne - k]
        # d/dp of p^k (1-p)^(ne-k), valid at the endpoints too
        dwe = zero
        if k:
            dwe = dwe + k * pw[k - 1] * qw[ne - k]
        if ne - k:
            dwe = dwe - (ne - k) * pw[k] * qw[ne - k - 1]
        base = esel << nv
        for vsel in range(1 << nv):
            j = vsel.bit_count()
            ws = sw[j] * tw[nv - j]
            w = we * ws
            hit = table[base | vsel]
            if hit:
                theta = theta + w
                dp = dp + dwe * ws
                dj = zero
                if j:
                    dj = dj + j * sw[j - 1] * tw[nv - j]
                if nv - j:
                    dj = dj - (nv - j) * sw[j] * tw[nv - j - 1]
                ds = ds + we * dj
            if w == 0:
                continue
            for pos in range(ne):
                with_e = table[((esel | (1 << pos)) << nv) | vsel]
                without_e = table[((esel & ~(1 << pos)) << nv) | vsel]
                if with_e and not without_e:
                    edge_tot[pos] = edge_tot[pos] + w
            for pos in range(nv):
                with_v = table[base | vsel | (1 << pos)]
                without_v = table[base | (vsel & ~(1 << pos))]
                if with_v and not without_v:
                    vert_tot[pos] = vert_tot[pos] + w

    a = b.arena
    edge_probs = {a.edges[e_ids[pos]]: edge_tot[pos] for pos in range(ne)}
    vertex_probs = {a.verts[v_ids[pos]]: vert_tot[pos] for pos in range(nv)}
    return theta, dp, ds, edge_probs, vertex_probs


def params_event_attach(event, params: ModelParams):
    """Events carry r and L themselves; reject mismatched parameters."""
    if event.L != params.L or event.r != params.r:
        raise ValueError("event truncation does not match the parameters")
    return event


def _powers(base, n, one):
    out = [one] * (n + 1)
    for i in range(n):
        out[i + 1] = out[i] * base
    return out


@dataclass(frozen=True)
class RussoReport:
    theta: object
    dtheta_dp: object
    pivotal_sum_p: object
    dtheta_ds: object
    pivotal_sum_s: object
    error_p: float
    error_s: float
    ok: bool
    tolerance: float


def russo_check(h: GraphOracle, params: ModelParams, event,
                exact: bool = False, tolerance: float = 1e-9) -> RussoReport:
    """Compare both partial derivatives of the event probability against
    the corresponding sums of pivotality probabilities.

    With exact arithmetic each pair must agree identically; otherwise the
    comparison is held to `tolerance`.
    """
    theta, dp, ds, edge_probs, vertex_probs = pivotal_probabilities(
        h, params, event, exact=exact)
    sum_p = sum(edge_probs.values())
    sum_s = sum(vertex_probs.values())
    err_p = abs(float(dp - sum_p))
    err_s = abs(float(ds - sum_s))
    if exact:
        ok = (dp == sum_p) and (ds == sum_s)
    else:
        ok = err_p <= tolerance and err_s <= tolerance
    return RussoReport(theta=theta, dtheta_dp=dp, pivotal_sum_p=sum_p,
                       dtheta_ds=ds, pivotal_sum_s=sum_s,
                       error_p=err_p, error_s=err_s, ok=ok,
                       tolerance=tolerance)


# -- mark stripping ----------------------------------------------------


@dataclass(frozen=True)
class StripResult:
    found_witness: bool
    z: object                     # s-pivotal vertex, when found
    configuration: Configuration  # witness configuration, or stripped one
    removed: tuple


def strip_alpha(h: GraphOracle, cfg: Configuration, e, R: int,
                event) -> StripResult:
    """Remove marks inside the radius-R window around the edge, one by
    one in canonical order.

    If the event first fails when vertex z loses its mark, z is
    s-pivotal in the resulting configuration and is returned as a
    witness.  Otherwise the fully stripped configuration comes back and
    the edge is still pivotal in it.
    """
    e = edge_key(*e)
    b = bind_event(h, event)
    a = b.arena
    omega, alpha = b.masks(cfg)
    ei = a.eid.get(e)
    if ei is None:
        raise SurgeryError("edge outside the event window")
    if not is_p_pivotal(h, cfg, e, event):
        raise SurgeryError("edge is not pivotal in the input configuration")
    if not b.holds(omega, alpha):
        raise SurgeryError("input configuration must realize the event")

    window = _edge_window(a, ei, R)
    removed = []
    marked = set(cfg.marked)
    for v in sorted(a.vset(window & alpha)):
        marked.discard(v)
        removed.append(v)
        alpha &= ~(1 << a.vid[v])
        if not b.holds(omega, alpha):
            out = Configuration(cfg.open_edges, frozenset(marked),
                                cfg.edge_support, cfg.vertex_support)
            return StripResult(found_witness=True, z=v, configuration=out,
                               removed=tuple(removed))
    out = Configuration(cfg.open_edges, frozenset(marked),
                        cfg.edge_support, cfg.vertex_support)
    return StripResult(found_witness=False, z=None, configuration=out,
                       removed=tuple(removed))


def _edge_window(a: Arena, ei: int, R: int) -> int:
    x, y = a.edges[ei]
    return a.ball_around(a.vid[x], R) | a.ball_around(a.vid[y], R)


# -- surgery -----------------------------------------------------------


@dataclass(frozen=True)
class SurgeryResult:
    omega_prime: Configuration    # full rebuilt configuration (marks too)
    alpha_prime: frozenset
    z: object
    case: str                     # "a" or "b"
    subcase: Optional[str]        # z-selection route in case a
    intermediate: dict            # omega_tilde edge set, u, v, z-ball
    event: object
    edge: tuple
    forced_edge_open: bool


def surgery(h: GraphOracle, cfg: Configuration, e, o, r: int,
            L: int) -> SurgeryResult:
    """Rebuild the window around a pivotal edge so that one vertex mark
    decides whether the cluster of o reaches distance L.

    The input configuration must carry no marks inside the window (see
    strip_alpha).  Far from the origin, a radius-r ball next to the
    cluster is wired up behind a single connector edge; at the origin,
    the ball around the near endpoint is rebuilt in place.
    """
    if L < min_truncation(r):
        raise SurgeryError(f"truncation radius {L} below the minimum "
                           f"{min_truncation(r)}")
    event = SphereEvent(o=o, L=L, r=r)
    return _surgery_common(h, cfg, e, event, far_sets=None)


def surgery_AB(h: GraphOracle, cfg: Configuration, e, A, B, r: int,
               L: int, nice_witnesses: Optional[dict] = None) -> SurgeryResult:
    """As `surgery`, for the event that the cluster of A reaches B.

    B must admit, around each nearby vertex, a radius-r ball avoiding B
    (an r-nice set); d(A, B) must exceed 3r, and both sets must sit
    deeper than 3r inside the truncation ball.
    """
    from .enhance import r_nice

    A = frozenset(A)
    B = frozenset(B)
    if not A or not B:
        raise SurgeryError("both event sets must be non-empty")
    event = LinkEvent(A=A, B=B, L=L, r=r, origin=h.root)
    b = bind_event(h, event)
    a = b.arena

    dist_A = _dist_from(a, b.roots_mask)
    dist_B = _dist_from(a, b.target_mask)
    dAB = min(dist_B[i] for i in iter_bits(b.roots_mask))
    if dAB <= 3 * r:
        raise SurgeryError(f"set distance {dAB} must exceed {3 * r}")
    deep = L - 3 * r - 1
    for i in iter_bits(b.roots_mask | b.target_mask):
        if a.dist_center[i] > deep:
            raise SurgeryError("event sets too close to the truncation "
                               "sphere for this L")
    if nice_witnesses is None:
        ok, nice_witnesses = r_nice(h, B, r, cap=r)
        if not ok:
            raise SurgeryError("target set admits no avoiding balls")
    return _surgery_common(h, cfg, e, event,
                           far_sets=(dist_A, dist_B, nice_witnesses))


def _surgery_common(h, cfg, e, event, far_sets) -> SurgeryResult:
    e = edge_key(*e)
    r, L = event.r, event.L
    R = window_radius(r)
    b = bind_event(h, event)
    a = b.arena
    omega, alpha = b.masks(cfg)
    ei = a.eid.get(e)
    if ei is None or not b.allowed_e >> ei & 1:
        raise SurgeryError("edge outside the event window")
    xi, yi = (a.vid[v] for v in a.edges[ei])

    window = _edge_window(a, ei, R)
    if alpha & window:
        raise SurgeryError("configuration still carries marks inside the "
                           "window; strip them first")
    ebit = 1 << ei
    if not (b.holds(omega | ebit, alpha) and not b.holds(omega & ~ebit, alpha)):
        raise SurgeryError("edge is not pivotal in the stripped "
                           "configuration", dump=_dump(h, cfg, e, event))
    forced = not omega >> ei & 1
    omega |= ebit   # realize the event; a change inside the window

    if far_sets is None:
        d_near = [a.dist_center[xi], a.dist_center[yi]]
        near = min(d_near)
        if near <= r:
            zi = xi if (d_near[0], a.verts[xi]) <= (d_near[1], a.verts[yi]) \
                else yi
            case, subcase = "b", None
        else:
            zi, subcase = _select_z_sphere(a, xi, yi, r, L)
            case = "a"
    else:
        dist_A, dist_B, nice = far_sets
        near = min(dist_A[xi], dist_A[yi])
        if near <= r:
            zi = xi if (dist_A[xi], a.verts[xi]) <= (dist_A[yi], a.verts[yi]) \
                else yi
            case, subcase = "b", None
        else:
            zi, subcase = _select_z_link(a, b, xi, yi, r, L, dist_B, nice)
            case = "a"

    result = _carve(h, cfg, b, omega, alpha, zi, case, subcase, e, forced,
                    window)
    return result


def _select_z_sphere(a: Arena, xi: int, yi: int, r: int, L: int):
    """Pick z with x in B_r(z), B_r(z) inside B_{L-1}, origin outside."""
    for xc in sorted((xi, yi), key=lambda i: (a.dist_center[i], a.verts[i])):
        if a.dist_center[xc] > L - 1:
            continue
        layers = _layers_around(a, xc, r)
        best = None
        for w, dxw in layers.items():
            if r + 1 <= a.dist_center[w] <= L - 1 - r:
                cand = (dxw, a.verts[w])
                if best is None or cand < best[0]:
                    best = (cand, w)
        if best is not None:
            return best[1], "sphere"
    raise WitnessSearchError("no admissible ball center near the edge",
                             dump={"edge": (a.verts[xi], a.verts[yi])})


def _select_z_link(a: Arena, b: _BoundEvent, xi: int, yi: int, r: int,
                   L: int, dist_B, nice):
    """Pick z with x in B_r(z) and B_r(z) avoiding A, B and the
    truncation sphere; three routes depending on where x sits."""
    ends = [i for i in sorted((xi, yi), key=lambda i: a.verts[i])
            if not b.target_mask >> i & 1]
    if not ends:
        raise SurgeryError("both endpoints lie in the target set")
    for xc in ends:
        if dist_B[xc] > r and a.dist_center[xc] <= L - r:
            return xc, "self"
        if dist_B[xc] <= r:
            z = nice.get(a.verts[xc])
            if z is None:
                raise WitnessSearchError(
                    "missing avoiding-ball witness near the target set",
                    dump={"vertex": a.verts[xc]})
            zi = a.vid[z]
            if b.target_mask & a.ball_around(zi, r):
                raise ClaimFailure("avoiding ball meets the target set",
                                   dump={"z": z})
            return zi, "avoid-target"
        # x hugs the truncation sphere: back off toward the origin
        layers = _layers_around(a, xc, r)
        best = None
        for w, dxw in layers.items():
            if a.dist_center[w] <= L - r:
                cand = (dxw, a.verts[w])
                if best is None or cand < best[0]:
                    best = (cand, w)
        if best is not None:
            return best[1], "back-off"
    raise WitnessSearchError("no admissible ball center near the edge",
                             dump={"edge": (a.verts[xi], a.verts[yi])})


def _carve(h, cfg, b: _BoundEvent, omega, alpha, zi, case, subcase, e,
           forced, window):
    a = b.arena
    r = b.event.r
    zball = a.ball_around(zi, r)
    zball1 = a.ball_around(zi, r + 1)
    E_r = a.edges_inside(zball)
    E_r1 = a.edges_inside(zball1)
    omega_tilde = omega & ~E_r1

    u = v = None
    if case == "a":
        grown = b.grow(omega_tilde, alpha)
        shell = zball1 & ~zball
        cands = sorted(a.verts[i] for i in iter_bits(shell & grown))
        if not cands:
            raise WitnessSearchError(
                "cluster does not touch the carved shell",
                dump=_dump(h, cfg, e, b.event, z=a.verts[zi]))
        ui = a.vid[cands[0]]
        vi = min((w for w, _ in a.adj[ui] if zball >> w & 1),
                 key=lambda w: a.verts[w], default=None)
        if vi is None:
            raise WitnessSearchError(
                "shell vertex has no neighbour inside the ball",
                dump=_dump(h, cfg, e, b.event, z=a.verts[zi]))
        uv = next(ef for w, ef in a.adj[ui] if w == vi)
        omega_prime = omega_tilde | E_r | (1 << uv)
        u, v = a.verts[ui], a.verts[vi]
    else:
        omega_prime = omega_tilde | E_r
        grown = None

    zbit = 1 << zi
    if case == "a":
        inside = b.grow(omega_prime, alpha)
        want = grown | zball
        if inside != want:
            raise ClaimFailure(
                "rebuilt cluster is not the carved cluster plus the ball",
                dump=_dump(h, cfg, e, b.event, z=a.verts[zi],
                           extra={"unexpected": sorted(
                               a.vset(inside ^ want))}))
    if b.holds(omega_prime, alpha):
        raise ClaimFailure("event survives the carve without the mark",
                           dump=_dump(h, cfg, e, b.event, z=a.verts[zi]))
    if not b.holds(omega_prime, alpha | zbit):
        raise ClaimFailure("mark fails to restore the event",
                           dump=_dump(h, cfg, e, b.event, z=a.verts[zi]))

    changed_edges = omega ^ omega_prime
    if forced:
        changed_edges |= 1 << a.eid[e]
    if changed_edges & ~a.edges_inside(window):
        raise ClaimFailure("surgery escaped the window",
                           dump=_dump(h, cfg, e, b.event, z=a.verts[zi]))

    open_edges = set(cfg.open_edges)
    open_edges.add(e)
    for i in iter_bits(omega ^ omega_prime):
        ekey = a.edges[i]
        if omega_prime >> i & 1:
            open_edges.add(ekey)
        else:
            open_edges.discard(ekey)
    out = Configuration(frozenset(open_edges), cfg.marked,
                        cfg.edge_support, cfg.vertex_support)
    intermediate = {
        "omega_tilde": frozenset(a.edges[i] for i in iter_bits(omega_tilde)),
        "u": u,
        "v": v,
        "z_ball": frozenset(a.verts[i] for i in iter_bits(zball)),
    }
    return SurgeryResult(omega_prime=out, alpha_prime=cfg.marked,
                         z=a.verts[zi], case=case, subcase=subcase,
                         intermediate=intermediate, event=b.event,
                         edge=e, forced_edge_open=forced)


# -- helpers -----------------------------------------------------------


def _dist_from(a: Arena, seed_mask: int):
    dist = [-1] * a.n_verts
    frontier = list(iter_bits(seed_mask))
    for i in frontier:
        dist[i] = 0
    d = 0
    while frontier:
        d += 1
        nxt = []
        for i in frontier:
            for w, _ in a.adj[i]:
                if dist[w] < 0:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return dist


def _layers_around(a: Arena, u: int, radius: int):
    dist = {u: 0}
    frontier = [u]
    for d in range(1, radius + 1):
        nxt = []
        for i in frontier:
            for w, _ in a.adj[i]:
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return dist


def _dump(h, cfg, e, event, z=None, extra=None):
    out = {
        "graph": h.name,
        "edge": e,
        "event": repr(event),
        "configuration": cfg.to_lines(),
    }
    if z is not None:
        out["z"] = z
    if extra:
        out.update(extra)
    return out
