import math

import numpy as np
import pytest

from aris_privacy.baselines import (
    ALL_SCHEMES,
    SchemeId,
    evaluate,
    plan_for,
    run_scheme,
    wmmse_beamforming,
)
from aris_privacy.channels import ChannelSet, draw_channels
from aris_privacy.comm import CeState, FpConfig, optimize_ce, sinr_all, sum_rate
from aris_privacy.li import isr_mu, optimize_li
from aris_privacy.partition import adaptive_plan
from aris_privacy.scenario import Scenario, distances, place_nodes
from aris_privacy.units import make_rng

from conftest import random_complex

FAST = FpConfig(max_outer_iters=10, rel_tol=1e-4)


def direct_rate(w, ch, s):
    st = CeState(w=w, theta=np.zeros(0, complex), eps=np.zeros(ch.K), ups=np.zeros(ch.K, complex))
    return sum_rate(st, ch, s)


def direct_instance(seed, M, K, E=1, **kw):
    s = place_nodes(Scenario(M=M, K=K, E=E, n_t=4, **kw), make_rng(seed, 0))
    return s, ChannelSet.direct_only(draw_channels(s, make_rng(seed, 1)))


def test_scheme_parsing():
    assert SchemeId.parse("no_aris") is SchemeId.NO_ARIS
    assert len(ALL_SCHEMES) == 4
    with pytest.raises(ValueError):
        SchemeId.parse("magic")


def test_wmmse_single_user_is_mrt():
    s, ch = direct_instance(0, M=4, K=1)
    w = wmmse_beamforming(ch, s, cfg=FpConfig(max_outer_iters=200, rel_tol=1e-12))
    mrt = ch.h[0] / np.linalg.norm(ch.h[0])
    assert np.sum(np.abs(w) ** 2) == pytest.approx(s.p_s_max, rel=1e-9)
    assert abs(np.vdot(mrt, w[0])) / np.linalg.norm(w[0]) == pytest.approx(1.0, abs=1e-9)


def test_wmmse_monotone_and_feasible():
    for seed in range(10):
        s, ch = direct_instance(seed, M=4, K=4)
        trace = []
        w = wmmse_beamforming(ch, s, cfg=FpConfig(max_outer_iters=100, rel_tol=1e-10), trace=trace)
        assert all(b >= a - 1e-9 * abs(a) for a, b in zip(trace, trace[1:]))
        assert np.sum(np.abs(w) ** 2) <= s.p_s_max * (1 + 1e-12)


def test_wmmse_tiny_instance_vs_random_search():
    s, ch = direct_instance(3, M=2, K=2)
    w = wmmse_beamforming(ch, s, cfg=FpConfig(max_outer_iters=2000, rel_tol=1e-12))
    rate = direct_rate(w, ch, s)
    rng = np.random.default_rng(0)
    best = 0.0
    for _ in range(100):  # 10^6 candidates in batches
        W = random_complex(rng, 10**4, 2, 2)
        W *= np.sqrt(s.p_s_max / np.sum(np.abs(W) ** 2, axis=(1, 2)))[:, None, None]
        S = np.abs(np.einsum("km,bam->bka", np.conj(ch.h), W)) ** 2
        sig = np.einsum("bkk->bk", S)
        interf = S.sum(axis=2) - sig
        best = max(best, float(np.max(np.sum(np.log2(1 + sig / (interf + s.sigma2)), axis=1))))
    assert rate >= best - 1e-3


def test_no_aris_has_no_li_and_zero_isr(default_scene):
    full = draw_channels(default_scene, make_rng(1))
    res = run_scheme("no_aris", default_scene, full, FAST)
    assert res.li == {} and res.plan is None and not res.aris
    m = evaluate(res, default_scene, make_rng(2), localize=False)
    assert m.mean_isr == 0.0 and m.expected_isr == 0.0


def test_no_aris_invariant_to_surface_parameters(default_scene):
    full = draw_channels(default_scene, make_rng(1))
    base = run_scheme("no_aris", default_scene, full, FAST)
    r0 = sum_rate(base.ce, base.channels, default_scene)
    for change in (dict(aris_pos=(0.0, 0.0, 90.0)), dict(p_r_max=1.0), dict(omega=0.9), dict(sigma_v2=1e-9)):
        s2 = default_scene.replace(**change)
        res = run_scheme("no_aris", s2, full, FAST)
        assert sum_rate(res.ce, res.channels, s2) == r0


def test_fixed_plan_element_counts(default_scene):
    plan = plan_for("fixed", default_scene)
    assert plan.n_e == (math.floor(512 * 0.5 / 6),) * 6


def test_no_partition_uses_whole_surface(default_scene):
    full = draw_channels(default_scene, make_rng(1))
    res = run_scheme("no_partition", default_scene, full, FAST)
    assert res.plan.n0 == 512 and res.li == {}
    assert res.an_powers(6).sum() == 0.0


def test_adaptive_equals_manual_composition(default_scene):
    s = default_scene
    full = draw_channels(s, make_rng(1))
    res = run_scheme("adaptive", s, full, FAST, rng=make_rng(5))
    plan = adaptive_plan(s, distances(s))
    ch = ChannelSet.partitioned(full, plan.n0, plan.n_e)
    ce = optimize_ce(ch, s, plan.p0, FAST)
    rng = make_rng(5)
    assert res.plan == plan
    assert np.array_equal(res.ce.w, ce.w) and np.array_equal(res.ce.theta, ce.theta)
    for e in range(s.E):
        li = optimize_li(e, ch, ce, plan.p_e[e], FAST, rng=rng)
        assert np.array_equal(res.li[e].theta_e, li.theta_e)
        assert np.array_equal(res.li[e].v_e, li.v_e)


def test_metrics_use_shared_evaluators(default_scene):
    s = default_scene
    full = draw_channels(s, make_rng(1))
    for scheme in ALL_SCHEMES:
        res = run_scheme(scheme, s, full, FAST, rng=make_rng(2))
        m = evaluate(res, s, make_rng(3))
        assert m.sum_rate == sum_rate(res.ce, res.channels, s)
        isr = [isr_mu(e, res.li[e], res.ce, res.channels) if e in res.li else 0.0 for e in range(s.E)]
        assert m.mean_isr == pytest.approx(float(np.mean(isr)), rel=1e-15)
        assert m.mle_error >= 0 and m.crlb_bound > 0
