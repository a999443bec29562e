from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percolab.enhance import Configuration, ModelParams
from percolab.graphs import (ball, cycle, edge_key, hypercubic, path_graph,
                             regular_tree)
from percolab.pivotal import (LinkEvent, SphereEvent, SurgeryError,
                              event_holds, is_p_pivotal, is_s_pivotal,
                              min_truncation, russo_check, strip_alpha,
                              surgery, surgery_AB, window_radius)


def make_config(h, center, span, open_edges=(), marked=()):
    b = ball(h, center, span)
    return Configuration(
        open_edges=frozenset(edge_key(*e) for e in open_edges),
        marked=frozenset(marked),
        edge_support=frozenset(b.edges),
        vertex_support=frozenset(b.dist))


def z_edges(pairs):
    return [((a,), (b,)) for a, b in pairs]


def test_window_constants():
    assert window_radius(2) == 7
    assert min_truncation(2) == 6


def test_single_edge_p_pivotal():
    g = path_graph(2)
    ev = SphereEvent(o=0, L=1, r=1)
    cfg = make_config(g, 0, 3, open_edges=[(0, 1)])
    assert is_p_pivotal(g, cfg, (0, 1), ev) == 1


def test_bypass_kills_pivotality():
    c4 = cycle(4)
    ev = SphereEvent(o=c4.root, L=2, r=1)
    all_edges = ball(c4, c4.root, 4).edges
    cfg = make_config(c4, c4.root, 4, open_edges=all_edges)
    # with the whole cycle open, no single edge decides the antipode
    for e in all_edges:
        assert is_p_pivotal(c4, cfg, e, ev) == 0


def test_mark_pivotality_on_z():
    z = hypercubic(1)
    ev = SphereEvent(o=(0,), L=2, r=1)
    cfg = make_config(z, (0,), 4, open_edges=z_edges([(-1, 0), (0, 1)]),
                      marked=[(0,)])
    # with only the 1-ball open, the origin mark is what reaches level 2
    assert event_holds(z, cfg, ev) == 1
    assert is_s_pivotal(z, cfg, (0,), ev) == 1


def test_out_of_window_coordinates_never_pivotal():
    z = hypercubic(1)
    ev = SphereEvent(o=(0,), L=2, r=1)
    cfg = make_config(z, (0,), 6, open_edges=z_edges([(0, 1)]))
    assert is_p_pivotal(z, cfg, ((5,), (6,)), ev) == 0
    assert is_s_pivotal(z, cfg, (6,), ev) == 0


def test_russo_cycle4_exact_values():
    c4 = cycle(4)
    ev = SphereEvent(o=c4.root, L=2, r=1)
    rep = russo_check(c4, ModelParams(p=0.5, s=0.0, r=1, L=2), ev,
                      exact=True)
    assert rep.ok
    assert rep.theta == Fraction(7, 16)
    assert rep.dtheta_dp == Fraction(3, 2)
    assert rep.dtheta_dp == rep.pivotal_sum_p
    assert rep.dtheta_ds == rep.pivotal_sum_s


def test_russo_holds_on_varied_instances():
    instances = [
        (cycle(4), ModelParams(p=0.3, s=0.2, r=1, L=2)),
        (cycle(5), ModelParams(p=0.6, s=0.0, r=1, L=2)),
        (cycle(6), ModelParams(p=0.5, s=0.5, r=1, L=2)),
        (path_graph(6), ModelParams(p=0.45, s=0.1, r=1, L=3)),
        (path_graph(5), ModelParams(p=0.8, s=1.0, r=1, L=2)),
        (cycle(4), ModelParams(p=1.0, s=0.4, r=1, L=2)),
        (cycle(4), ModelParams(p=0.0, s=0.6, r=1, L=2)),
    ]
    for h, params in instances:
        ev = SphereEvent(o=h.root, L=params.L, r=params.r)
        rep = russo_check(h, params, ev)
        assert rep.ok, (h.name, params, rep.error_p, rep.error_s)


def test_strip_alpha_finds_mark_witness():
    z = hypercubic(1)
    ev = SphereEvent(o=(0,), L=4, r=1)
    # the cluster reaches level 4 only through the enhancement at (1,)
    cfg = make_config(
        z, (0,), 6,
        open_edges=z_edges([(0, 1), (1, 2), (3, 4)]),
        marked=[(1,)])
    assert event_holds(z, cfg, ev) == 1
    e = edge_key((3,), (4,))
    res = strip_alpha(z, cfg, e, window_radius(1), ev)
    assert res.found_witness
    assert res.z == (1,)
    assert is_s_pivotal(z, res.configuration, res.z, ev) == 1


def test_strip_alpha_keeps_pivotal_edge_when_no_witness():
    z = hypercubic(1)
    ev = SphereEvent(o=(0,), L=4, r=1)
    # the mark at (3,) is harmless: its jump lands outside the
    # truncation ball, so the edge stays pivotal with or without it
    cfg = make_config(
        z, (0,), 6,
        open_edges=z_edges([(0, 1), (1, 2), (2, 3), (3, 4)]),
        marked=[(3,)])
    e = edge_key((2,), (3,))
    res = strip_alpha(z, cfg, e, window_radius(1), ev)
    assert not res.found_witness
    assert not res.configuration.marked
    assert is_p_pivotal(z, res.configuration, e, ev) == 1


def surgery_checks(h, res, ev):
    a_with_z = Configuration(
        open_edges=res.omega_prime.open_edges,
        marked=res.alpha_prime | {res.z},
        edge_support=res.omega_prime.edge_support,
        vertex_support=res.omega_prime.vertex_support)
    a_without = Configuration(
        open_edges=res.omega_prime.open_edges,
        marked=res.alpha_prime,
        edge_support=res.omega_prime.edge_support,
        vertex_support=res.omega_prime.vertex_support)
    assert event_holds(h, a_without, ev) == 0
    assert event_holds(h, a_with_z, ev) == 1
    assert is_s_pivotal(h, a_without, res.z, ev) == 1


def test_surgery_far_case_on_z():
    z = hypercubic(1)
    r, L = 1, 4
    cfg = make_config(z, (0,), 6,
                      open_edges=z_edges([(0, 1), (1, 2), (2, 3), (3, 4)]))
    e = edge_key((3,), (4,))
    res = surgery(z, cfg, e, (0,), r, L)
    assert res.case == "a"
    assert res.z is not None
    surgery_checks(z, res, SphereEvent(o=(0,), L=L, r=r))


def test_surgery_near_case_on_z():
    z = hypercubic(1)
    r, L = 1, 4
    cfg = make_config(z, (0,), 6,
                      open_edges=z_edges([(0, 1), (1, 2), (2, 3), (3, 4)]))
    e = edge_key((0,), (1,))
    res = surgery(z, cfg, e, (0,), r, L)
    assert res.case == "b"
    surgery_checks(z, res, SphereEvent(o=(0,), L=L, r=r))


def test_surgery_rejects_small_truncation():
    z = hypercubic(1)
    cfg = make_config(z, (0,), 5, open_edges=z_edges([(0, 1), (1, 2)]))
    with pytest.raises(SurgeryError):
        surgery(z, cfg, edge_key((1,), (2,)), (0,), r=1, L=3)


def test_surgery_rejects_marks_in_window():
    z = hypercubic(1)
    cfg = make_config(z, (0,), 6,
                      open_edges=z_edges([(0, 1), (1, 2), (2, 3)]),
                      marked=[(2,)])
    with pytest.raises(SurgeryError):
        surgery(z, cfg, edge_key((2,), (3,)), (0,), r=1, L=4)


def test_surgery_rejects_non_pivotal_edge():
    z = hypercubic(1)
    cfg = make_config(z, (0,), 6, open_edges=z_edges([(0, 1)]))
    with pytest.raises(SurgeryError):
        surgery(z, cfg, edge_key((2,), (3,)), (0,), r=1, L=4)


def test_surgery_witness_stays_near_edge():
    z2 = hypercubic(2)
    r, L = 1, 4
    path = [((0, 0), (1, 0)), ((1, 0), (2, 0)), ((2, 0), (3, 0)),
            ((3, 0), (4, 0))]
    cfg = make_config(z2, (0, 0), 6, open_edges=path)
    e = edge_key((3, 0), (4, 0))
    res = surgery(z2, cfg, e, (0, 0), r, L)
    x, y = res.edge
    zd = min(sum(abs(c - d) for c, d in zip(res.z, x)),
             sum(abs(c - d) for c, d in zip(res.z, y)))
    assert zd <= window_radius(r)
    surgery_checks(z2, res, SphereEvent(o=(0, 0), L=L, r=r))


def test_surgery_ab_link_event():
    z = hypercubic(1)
    r, L = 1, 10
    A, B = {(0,)}, {(6,)}
    pairs = [(i, i + 1) for i in range(6) if i != 2]
    cfg = make_config(z, (0,), L + r + 1, open_edges=z_edges(pairs))
    e = edge_key((2,), (3,))
    ev = LinkEvent(A=frozenset(A), B=frozenset(B), L=L, r=r, origin=z.root)
    assert is_p_pivotal(z, cfg, e, ev) == 1
    res = surgery_AB(z, cfg, e, A, B, r, L)
    surgery_checks(z, res, ev)


def test_surgery_ab_rejects_close_sets():
    z = hypercubic(1)
    cfg = make_config(z, (0,), 12,
                      open_edges=z_edges([(0, 1), (1, 2)]))
    with pytest.raises(SurgeryError):
        surgery_AB(z, cfg, edge_key((1,), (2,)), {(0,)}, {(2,)}, r=1, L=10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 8 - 1), st.floats(0.05, 0.95),
       st.floats(0.0, 1.0))
def test_russo_random_path_configs(mask, p, s):
    # derivative identity must hold for any little instance, not just
    # the hand-picked ones
    g = path_graph(5)
    params = ModelParams(p=round(p, 3), s=round(s, 3), r=1, L=2)
    ev = SphereEvent(o=g.root, L=2, r=1)
    rep = russo_check(g, params, ev, tolerance=1e-9)
    assert rep.ok
