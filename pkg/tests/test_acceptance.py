"""End-to-end acceptance gates.

Each test pins down one headline guarantee of the library: exact-oracle
agreement, critical point recovery on solvable families, coupling
soundness and marginals, desk-scale stochastic domination, the surgery
witness suite, the Russo identity, the quotient critical gap, and
byte-level reproducibility across worker counts.  Runtime budgets are
asserted alongside the statistical gates.
"""

import time
from fractions import Fraction

import pytest

from percolab import mc, report, rng
from percolab.enhance import Configuration, ModelParams, exact_theta, \
    grow_cluster
from percolab.graphs import ball, edge_key, resolve_graph
from percolab.pivotal import SphereEvent, russo_check


# -- 1. exact-oracle agreement -----------------------------------------

ORACLE_GRID = [
    ("cycle:4", 2, [(0.5, 0.0), (0.5, 1.0), (0.3, 0.5), (0.7, 0.2),
                    (0.2, 0.8)]),
    ("cycle:6", 2, [(0.5, 0.0), (0.5, 1.0), (0.4, 0.6), (0.8, 0.3),
                    (0.6, 0.1)]),
    ("cycle:6", 3, [(0.5, 0.0), (0.6, 0.4), (0.3, 1.0)]),
    ("path:6", 2, [(0.5, 0.0), (0.7, 1.0), (0.4, 0.3), (0.6, 0.7)]),
    ("path:8", 3, [(0.5, 0.0), (0.8, 1.0), (0.6, 0.5), (0.35, 0.65)]),
]


def test_exact_oracle_agreement():
    t0 = time.monotonic()
    instances = 0
    s_values = set()
    for spec, L, combos in ORACLE_GRID:
        h = resolve_graph(spec)
        support = ball(h, h.root, L + 2)
        assert len(support.edges) + len(support.dist) <= 24
        for p, s in combos:
            params = ModelParams(p=p, s=s, r=1, L=L)
            exact = float(exact_theta(h, {h.root}, params))
            sd = rng.derive(2024, (spec, L, p, s))
            est = mc.theta_mc(h, None, params, 100_000, sd)
            z = abs(est.value - exact) / max(est.stderr, 1e-12)
            assert z <= 3.0, (spec, L, p, s, est.value, exact, z)
            instances += 1
            s_values.add(s)
    assert instances >= 20
    assert 0.0 in s_values and 1.0 in s_values and len(s_values) > 2
    assert time.monotonic() - t0 < 300


# -- 2/3. critical point recovery --------------------------------------

@pytest.mark.parametrize("spec,target,budget,max_width", [
    ("tree:3", 0.5, 600, 0.03),
    ("tree:4", 1 / 3, 600, 0.03),
    ("hypercubic:2", 0.5, 1200, 0.04),
])
def test_pc_recovery(spec, target, budget, max_width):
    t0 = time.monotonic()
    est = mc.pc_bisect(None, 1, 0.0, (16, 32), 6000, 5, graph_spec=spec)
    assert not est.anchored_only
    assert est.width <= max_width, (est.lo, est.hi)
    assert est.lo < target < est.hi, (est.lo, est.point, est.hi)
    assert time.monotonic() - t0 < budget


# -- 4. coupling soundness ---------------------------------------------

def test_coupling_soundness_three_pairs():
    t0 = time.monotonic()
    split = {"z-period2": 6000, "z2-cylinder3": 2200, "z3-slab2": 1800}
    total = 0
    for pair, n_runs in split.items():
        rep = mc.couple_verify_campaign(pair, n_runs,
                                        rng.derive(7, pair), 0.5, 0.1,
                                        corrupt_check=(pair == "z-period2"))
        assert rep.run_errors == 0, pair
        assert rep.audit_failures == 0, pair
        assert rep.inclusion_failures == 0, pair
        if rep.corruption_detected is not None:
            assert rep.corruption_detected is True
        total += rep.n_runs
    assert total == 10_000
    assert time.monotonic() - t0 < 1800


# -- 5. marginal correctness -------------------------------------------

def test_marginals_on_pooled_replicas():
    # mark density at the admissible wiring bound so the alpha channel
    # carries real statistics (the degree-driven default is astronomically
    # small); 1.3e-3 sits just under the bound for epsilon = p = 0.99
    rep = mc.couple_verify_campaign("z-period2", 100_000, 41, 0.99, 0.99,
                                    s=1.3e-3, corrupt_check=False)
    assert rep.run_errors == 0
    for key, _c, m, z in rep.omega_edges:
        assert m > 0 and abs(z) <= 3.0, (key, z)
    assert abs(rep.alpha_z) <= 3.0
    assert rep.chi2_pvalue > 1e-3


# -- 6. stochastic domination at desk scale ----------------------------

def _tail_quotient(bundle, p, s):
    """Exact law of the enhanced cluster size on the two-point quotient."""
    h = bundle.target
    verts = sorted(ball(h, h.root, 3).dist, key=repr)
    edges = sorted(ball(h, h.root, 3).edges, key=repr)
    es, vs = frozenset(edges), frozenset(verts)
    tail = {}
    for emask in range(1 << len(edges)):
        w_e = Fraction(1)
        open_e = set()
        for i, e in enumerate(edges):
            if emask >> i & 1:
                open_e.add(e)
                w_e *= p
            else:
                w_e *= 1 - p
        for vmask in range(1 << len(verts)):
            w = w_e
            marked = set()
            for i, v in enumerate(verts):
                if vmask >> i & 1:
                    marked.add(v)
                    w *= s
                else:
                    w *= 1 - s
            cfg = Configuration(frozenset(open_e), frozenset(marked),
                                es, vs)
            size = len(grow_cluster(h, [h.root], cfg, r=1,
                                    horizon=2).union)
            for k in range(1, size + 1):
                tail[k] = tail.get(k, Fraction(0)) + w
    return tail


def _tail_projected_line(bundle, p, window=4):
    """Exact law of the projected plain cluster of the origin on a line
    segment of `window` edges each way."""
    g, pi = bundle.source, bundle.map.project
    edges = [edge_key((i,), (i + 1,)) for i in range(-window, window)]
    tail = {}
    for mask in range(1 << len(edges)):
        w = Fraction(1)
        open_e = set()
        for i, e in enumerate(edges):
            if mask >> i & 1:
                open_e.add(e)
                w *= p
            else:
                w *= 1 - p
        cur = {(0,)}
        stack = [(0,)]
        while stack:
            v = stack.pop()
            for u in g.neighbors(v):
                if u not in cur and edge_key(v, u) in open_e:
                    cur.add(u)
                    stack.append(u)
        size = len({pi(v) for v in cur})
        for k in range(1, size + 1):
            tail[k] = tail.get(k, Fraction(0)) + w
    return tail


@pytest.mark.parametrize("p", [Fraction(1, 5), Fraction(1, 2),
                               Fraction(4, 5)])
@pytest.mark.parametrize("s", [Fraction(1, 10), Fraction(1, 2)])
def test_cluster_size_domination_two_point_quotient(p, s):
    bundle = mc.build_pair("z-period2")
    t_h = _tail_quotient(bundle, p, s)
    t_g = _tail_projected_line(bundle, p)
    for k in range(1, max(len(t_h), len(t_g)) + 2):
        lhs = t_h.get(k, Fraction(0))
        rhs = t_g.get(k, Fraction(0))
        assert lhs <= rhs, (k, lhs, rhs)


# -- 7. surgery witness suite ------------------------------------------

SURGERY_PLAN = [
    # (graph, r, L, n, mark density)
    ("hypercubic:1", 1, 4, 20_000, 0.15),
    ("hypercubic:1", 2, 6, 10_000, 0.05),
    ("hypercubic:2", 1, 4, 20_000, 0.15),
    ("hypercubic:2", 2, 6, 4_000, 0.05),
    ("tree:3", 1, 4, 16_000, 0.15),
    ("tree:3", 2, 6, 10_000, 0.05),
]
SURGERY_AB_PLAN = [
    ("hypercubic:1", 1, 8, 8_000, 0.15),
    ("hypercubic:1", 2, 14, 4_000, 0.05),
    ("hypercubic:2", 1, 8, 8_000, 0.10),
]


def test_surgery_witness_suite():
    t0 = time.monotonic()
    total = 0
    for spec, r, L, n, q in SURGERY_PLAN:
        rep = mc.surgery_campaign(resolve_graph(spec), r, L, n,
                                  rng.derive(11, (spec, r)),
                                  mark_density=q)
        assert rep.failures == 0, (spec, r, rep.first_failure)
        assert rep.instances == n
        total += rep.instances
    for spec, r, L, n, q in SURGERY_AB_PLAN:
        rep = mc.surgery_AB_campaign(resolve_graph(spec), r, L, n,
                                     rng.derive(13, (spec, r)),
                                     mark_density=q)
        assert rep.failures == 0, (spec, r, rep.first_failure)
        assert rep.instances == n
        total += rep.instances
    assert total == 100_000
    assert time.monotonic() - t0 < 1800


# -- 8. Russo identity -------------------------------------------------

RUSSO_GRID = [
    ("cycle:4", 2, 0.5, 0.0), ("cycle:4", 2, 0.3, 0.6),
    ("cycle:4", 2, 0.8, 0.2), ("cycle:6", 2, 0.5, 0.5),
    ("cycle:6", 2, 0.25, 0.75), ("cycle:6", 3, 0.6, 0.4),
    ("path:6", 2, 0.5, 0.0), ("path:6", 2, 0.7, 0.3),
    ("path:6", 3, 0.4, 0.9), ("path:8", 3, 0.55, 0.45),
    ("path:8", 2, 0.9, 0.1), ("cycle:5", 2, 0.35, 0.65),
]


def test_russo_identity_both_derivatives():
    assert len(RUSSO_GRID) >= 10
    for spec, L, p, s in RUSSO_GRID:
        h = resolve_graph(spec)
        ev = SphereEvent(o=h.root, L=L, r=1)
        rep = russo_check(h, ModelParams(p=p, s=s, r=1, L=L), ev,
                          exact=True)
        assert rep.ok, (spec, L, p, s)
        assert rep.error_p <= 1e-9 and rep.error_s <= 1e-9


# -- 9. strict critical gap across quotients ---------------------------

def test_gap_z3_vs_slab():
    t0 = time.monotonic()
    rep = mc.strict_gap_experiment("z3-slab2", n=2000, seed=5)
    src, tgt = rep.pc_source, rep.pc_target
    assert rep.ok
    assert tgt.lo > src.hi                      # disjoint intervals
    assert tgt.lo - src.hi >= 0.05, (src.hi, tgt.lo)
    assert time.monotonic() - t0 < 1800


def test_gap_z2_vs_cylinder():
    t0 = time.monotonic()
    rep = mc.strict_gap_experiment("z2-cylinder3", n=2000, seed=5)
    assert rep.ok
    assert rep.p_test == pytest.approx(rep.pc_source.point + 0.1)
    for row in rep.decay_rows:
        assert row["L"] >= 40
        assert row["theta"] < 0.05, row
    assert time.monotonic() - t0 < 1800


# -- 10. byte-level reproducibility ------------------------------------

def test_csv_aggregates_worker_invariant(tmp_path):
    grid = [ModelParams(p=p, s=s, r=1, L=4)
            for p in (0.35, 0.5, 0.65) for s in (0.0, 0.3)]
    outs = []
    for w in (1, 3):
        rows = mc.sweep(None, grid, 2000, 77, workers=w,
                        graph_spec="tree:3")
        path = tmp_path / f"agg-{w}.csv"
        report.write_csv(path, rows)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
