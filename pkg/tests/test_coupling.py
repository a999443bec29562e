"""Joint exploration coupling: parameters, transcripts, audits, marginals."""

import pytest

from percolab import mc, rng
from percolab.coupling import (CouplingParams, audit_conditions,
                               check_conditions, choose_M_s,
                               default_params, extract_marginals, phat,
                               run_coupling)
from percolab.graphs import ball


@pytest.fixture(scope="module")
def zp2():
    return mc.build_pair("z-period2")


def test_phat_inverts_parallel_copies():
    for p in (0.1, 0.5, 0.97):
        for M in (1, 8, 64):
            q = phat(p, M)
            assert abs(1 - (1 - q) ** M - p) < 1e-12


def test_phat_rejects_bad_arguments():
    with pytest.raises(ValueError):
        phat(1.5, 4)
    with pytest.raises(ValueError):
        phat(0.5, 0)


def test_choose_M_s_degree_driven():
    M, s = choose_M_s(2, 1, 0.1)
    assert M == 2 ** 3
    base = 1 - (1 - 0.1) ** (1 / M)
    assert 0 < s == pytest.approx(base ** (2 ** 5))
    # copy count grows with the degree bound
    assert choose_M_s(6, 1, 0.1)[0] == 6 ** 3
    assert choose_M_s(2, 2, 0.1)[0] == 2 ** 4


def test_params_validation():
    with pytest.raises(ValueError):
        CouplingParams(p=0.2, epsilon=0.5, r=1, M=8, s=0.0,
                       phat=phat(0.2, 8), horizon=4)
    with pytest.raises(ValueError):
        CouplingParams(p=0.5, epsilon=0.1, r=1, M=8, s=0.0,
                       phat=0.3, horizon=4)


def test_default_params_admissible(zp2):
    params = default_params(zp2.map, 0.5, 0.1, zp2.r, 5)
    assert params.M == 2 ** (zp2.r + 2)
    assert 0 < params.s < params.epsilon
    assert params.validate_against(zp2.map)


def test_transcript_deterministic(zp2):
    params = default_params(zp2.map, 0.6, 0.2, zp2.r, 5)
    t1 = run_coupling(zp2.map, zp2.source.root, params, 42)
    t2 = run_coupling(zp2.map, zp2.source.root, params, 42)
    assert t1.to_lines() == t2.to_lines()
    t3 = run_coupling(zp2.map, zp2.source.root, params, 43)
    assert t1.to_lines() != t3.to_lines()


def test_conditions_and_audit_pass(zp2):
    params = default_params(zp2.map, 0.55, 0.1, zp2.r, 5)
    for seed in range(20):
        t = run_coupling(zp2.map, zp2.source.root, params, seed)
        assert check_conditions(t).ok
        rep = audit_conditions(t)
        assert rep.ok, rep.detail
        assert rep.checks > 0


def test_projection_contains_quotient_cluster(zp2):
    params = default_params(zp2.map, 0.7, 0.1, zp2.r, 5)
    for seed in range(30):
        t = run_coupling(zp2.map, zp2.source.root, params, seed)
        assert mc.inclusion_check(t)


def test_corrupted_transcript_fails_audit(zp2):
    params = default_params(zp2.map, 0.8, 0.3, zp2.r, 5)
    hit = 0
    for seed in range(40):
        t = run_coupling(zp2.map, zp2.source.root, params, seed)
        out = mc._corrupt_and_audit(t)
        if out is not None:
            assert out is True
            hit += 1
    assert hit > 0


def test_marginals_cover_horizon(zp2):
    params = default_params(zp2.map, 0.5, 0.1, zp2.r, 4)
    t = run_coupling(zp2.map, zp2.source.root, params, 7)
    omega_h, alpha, eta_g = extract_marginals(t)
    hball = ball(zp2.target, t.o, params.horizon)
    assert set(omega_h) == set(hball.edges)
    assert set(alpha) == set(hball.dist)
    assert set(eta_g) == set(ball(zp2.source, t.o_prime,
                                  params.horizon).edges)
    for bit in list(omega_h.values()) + list(alpha.values()):
        assert bit in (0, 1)


def test_marginal_extraction_deterministic(zp2):
    params = default_params(zp2.map, 0.5, 0.1, zp2.r, 4)
    t = run_coupling(zp2.map, zp2.source.root, params, 11)
    assert extract_marginals(t) == extract_marginals(t)


def test_collapsed_omega_is_bernoulli_p(zp2):
    # pooled tracked-edge mean should sit near p; crude 4-sigma gate
    p = 0.45
    params = default_params(zp2.map, p, 0.1, zp2.r, 4)
    total = hits = 0
    for seed in range(400):
        t = run_coupling(zp2.map, zp2.source.root, params,
                         rng.derive(99, seed))
        omega_h, _, _ = extract_marginals(t)
        for e in sorted(omega_h, key=repr)[:4]:
            total += 1
            hits += omega_h[e]
    z = abs(hits / total - p) / ((p * (1 - p) / total) ** 0.5)
    assert z < 4


def test_campaign_small_clean():
    rep = mc.couple_verify_campaign("z-period2", n_runs=150, seed=3,
                                    p=0.5, epsilon=0.1)
    assert rep.run_errors == 0
    assert rep.audit_failures == 0
    assert rep.inclusion_failures == 0
    assert rep.corruption_detected in (None, True)
    assert abs(rep.omega_z) < 4


def test_campaign_worker_count_invariant():
    a = mc.couple_verify_campaign("z-period2", n_runs=130, seed=12,
                                  p=0.6, epsilon=0.1, corrupt_check=False)
    b = mc.couple_verify_campaign("z-period2", n_runs=130, seed=12,
                                  p=0.6, epsilon=0.1, corrupt_check=False,
                                  workers=3)
    assert a.omega_mean == b.omega_mean
    assert a.alpha_count == b.alpha_count
    assert a.table == b.table
