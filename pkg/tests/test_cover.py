import pytest

from percolab.cover import (ActionError, bfs_tree, choose_r, disjoint_lifts,
                            fibre, is_strong_covering, is_weak_covering,
                            lift_tree, pattern_set, quotient, resolve_action,
                            tame_radius, translation_action)
from percolab.graphs import ball, hypercubic, resolve_graph


def z_pair():
    g = hypercubic(1)
    return g, *quotient(g, translation_action([(2,)]))


def z2_pair(period=3):
    g = hypercubic(2)
    return g, *quotient(g, translation_action([(period, 0)]))


def slab_pair():
    g = hypercubic(3)
    return g, *quotient(g, translation_action([(0, 0, 2)]))


def test_translation_action_rejects_diagonal():
    with pytest.raises(ValueError):
        translation_action([(1, 1)])


def test_trivial_action_rejected():
    from percolab.cover import GroupAction
    g = hypercubic(2)
    identity = GroupAction(name="id", generators=(),
                           canonicalize=lambda v: v)
    with pytest.raises(ActionError):
        quotient(g, identity)


def test_z_quotient_is_single_edge():
    g, h, m = z_pair()
    assert set(ball(h, h.root, 5).dist) == {(0,), (1,)}
    assert m.project((7,)) == (1,)
    assert m.project((-4,)) == (0,)


def test_cylinder_quotient_shape():
    g, h, m = z2_pair()
    verts = set(ball(h, h.root, 6).dist)
    assert all(0 <= v[0] < 3 for v in verts)
    assert h.root_distance((2, 5)) == 6  # wraps: one step back plus five up


def test_weak_covering_all_pairs():
    for pair in (z_pair, z2_pair, slab_pair):
        g, h, m = pair()
        assert is_weak_covering(m, sample_radius=2).passed


def test_strong_covering_distinguishes_periods():
    # period 3 keeps neighbor lifts unique; period 2 folds them together
    _, _, m3 = z2_pair(period=3)
    assert is_strong_covering(m3, sample_radius=2).passed
    _, _, m2 = z2_pair(period=2)
    assert not is_strong_covering(m2, sample_radius=2).passed


def test_tame_radius_values():
    for pair, expect in ((z_pair, 2), (z2_pair, 3), (slab_pair, 2)):
        g, h, m = pair()
        assert tame_radius(m, search_cap=10_000) == expect


def test_choose_r_matches_tame_radius():
    g, h, m = z2_pair()
    assert choose_r(m, cap=10_000) == 2
    g, h, m = slab_pair()
    assert choose_r(m, cap=10_000) == 1


def test_lift_tree_projects_back():
    g, h, m = z2_pair()
    tree = bfs_tree(h, h.root, 2)
    lift = lift_tree(m, tree, (3, 0))
    assert lift.image_vertices == frozenset(tree[0])
    assert all(m.project(lift.mapping[v]) == v for v in tree[0])
    # a lift of a tree is a tree on as many vertices
    assert len(lift.vertices) == len(tree[0])
    assert len(lift.edges) == len(tree[1])


def test_disjoint_lifts_through_fibre_partners():
    g, h, m = z2_pair()
    tree = bfs_tree(h, h.root, 2)
    l1, l2 = disjoint_lifts(m, tree, (0, 0), (3, 0))
    assert not (l1.vertices & l2.vertices)
    assert l1.image_vertices == l2.image_vertices


def test_fibre_within_ball():
    g, h, m = z_pair()
    b = ball(g, (0,), 6)
    assert fibre(m, (0,), b) == {(-6,), (-4,), (-2,), (0,), (2,), (4,), (6,)}


def test_pattern_set_certifies_two_representatives():
    for pair in (z_pair, z2_pair, slab_pair):
        g, h, m = pair()
        r = choose_r(m, cap=10_000)
        for x in sorted(ball(g, g.root, 1).dist):
            ps = pattern_set(m, x, r)
            assert ps.ok, ps.failures
            assert x in ps.vertices
            assert ps.vertices <= set(ball(g, x, 3 * r).dist)


def test_resolve_action_spec():
    a = resolve_action("translate:0,0,2")
    assert a.moduli == {2: 2}
    with pytest.raises(ValueError):
        resolve_action("rotate:90")
