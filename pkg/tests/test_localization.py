import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from aris_privacy.errors import SingularityError, UnidentifiableError
from aris_privacy.localization import (
    AdversaryModel,
    RssComponents,
    SearchConfig,
    adversary_model,
    expected_isr,
    fim_crlb,
    mle_estimate,
    noise_power_db,
    rss_components,
    sample_observations,
)
from aris_privacy.scenario import Scenario, _pos, place_nodes
from aris_privacy.units import PathLossModel, make_rng


def placed(seed=0, **kw):
    return place_nodes(Scenario(**kw), make_rng(seed, 0))


def truth(s, rng, n0=200, p_v_scale=1e-4):
    amps = rng.uniform(0.5, 3.0, n0)
    n_e = rng.integers(5, 40, s.E)
    p_v = rng.uniform(0.1, 1.0, s.E) * p_v_scale
    return rss_components(s, amps, n_e, p_v)


# --------------------------------------------------------------------------- RSS model


def test_components_definitions():
    s = placed(1)
    rng = np.random.default_rng(0)
    amps = rng.uniform(0.5, 2.0, 50)
    n_e = np.arange(1, s.E + 1)
    p_v = np.full(s.E, 1e-5)
    comp = rss_components(s, amps, n_e, p_v, p_s=0.008)
    # independent log-domain recomputation
    l0 = -37.3
    su, ar = np.array(s.su_pos), np.array(s.aris_pos)
    for e, mu in enumerate(np.array(s.mu_pos)):
        d_h = math.dist(mu, su)
        d_g = math.dist(mu, ar)
        d_H = math.dist(ar, su)
        p_s = 10 * math.log10(0.008)
        g_r = 10 * math.log10(math.fsum(a * a for a in amps) + n_e[e])
        assert comp.p_d[e] == pytest.approx(p_s + l0 - 22 * math.log10(d_h), rel=1e-12)
        assert comp.p_r[e] == pytest.approx(p_s + 2 * l0 - 22 * math.log10(d_g * d_H) + g_r, rel=1e-12)
        assert comp.p_n[e] == pytest.approx(-50 + l0 - 22 * math.log10(d_g), rel=1e-12)
        lin = sum(10 ** (x / 10) for x in (comp.p_d[e], comp.p_r[e], comp.p_n[e]))
        assert comp.c[e] == pytest.approx(10 * math.log10(lin), abs=1e-12)


def test_distance_slope_and_unit_amplitude_gain():
    s = Scenario(su_pos=(0, 0, 0), aris_pos=(100, 0, 0), K=1, E=2, ru_pos=((100, 5, 0),),
                 mu_pos=((0, 100, 0), (0, 200, 0)))
    comp = rss_components(s, np.ones(64), [0, 0], [1e-6, 1e-6])
    assert comp.p_d[0] - comp.p_d[1] == pytest.approx(22 * math.log10(2), rel=1e-12)
    d_g = np.array([math.hypot(100, 100), math.hypot(100, 200)])
    g_r = comp.p_r - (10 * math.log10(s.p_s_max) - 2 * 37.3 - 22 * np.log10(d_g * 100))
    assert g_r == pytest.approx(10 * math.log10(64), abs=1e-12)


def test_no_aris_components():
    s = placed(2)
    comp = rss_components(s, [], [0] * s.E, [0.0] * s.E, aris=False)
    assert np.all(np.isneginf(comp.p_r)) and np.all(np.isneginf(comp.p_n))
    assert comp.c == pytest.approx(comp.p_d, abs=1e-12)


def test_noise_power_zero_is_minus_infinity():
    s = placed(3)
    assert np.all(np.isneginf(noise_power_db(s, np.zeros(s.E))))


def test_sample_observations():
    means = np.array([-90.0, -100.0, -110.0])
    assert np.array_equal(sample_observations(means, 0.0, make_rng(0)), means)
    a = sample_observations(means, 10.0, make_rng(4, 2))
    assert np.array_equal(a, sample_observations(means, 10.0, make_rng(4, 2)))
    draws = np.array([sample_observations(np.zeros(10), 3.0, make_rng(5, i)) for i in range(10**4)]).ravel()
    assert np.var(draws) == pytest.approx(9.0, rel=0.02)
    with pytest.raises(ValueError):
        sample_observations(means, -1.0, make_rng(0))


def test_expected_isr_examples():
    comp = RssComponents(p_d=np.array([-90.0]), p_r=np.array([-95.0]), p_n=np.array([-np.inf]))
    varrho, alpha0 = expected_isr(comp)
    assert varrho[0] == 0.0 and alpha0[0] == 1.0
    comp = RssComponents(p_d=np.array([-90.0]), p_r=np.array([-np.inf]), p_n=np.array([-90.0]))
    varrho, alpha0 = expected_isr(comp)
    assert varrho[0] == pytest.approx(1.0) and alpha0[0] == pytest.approx(0.5)


def test_expected_isr_dual_path():
    s = placed(4)
    rng = np.random.default_rng(1)
    amps = rng.uniform(0.5, 2, 30)
    p_v = rng.uniform(1e-6, 1e-4, s.E)
    comp = rss_components(s, amps, [10] * s.E, p_v)
    varrho, _ = expected_isr(comp)
    l0 = 10 ** (-3.73)
    su, ar = np.array(s.su_pos), np.array(s.aris_pos)
    for e, mu in enumerate(np.array(s.mu_pos)):
        d_h, d_g, d_H = math.dist(mu, su), math.dist(mu, ar), math.dist(ar, su)
        P_d = s.p_s_max * l0 * d_h**-2.2
        P_r = s.p_s_max * l0**2 * (d_g * d_H) ** -2.2 * (np.sum(amps**2) + 10)
        P_n = p_v[e] * l0 * d_g**-2.2
        assert varrho[e] == pytest.approx(P_n / (P_d + P_r), rel=1e-12)


# --------------------------------------------------------------------------- gradients / FIM


def c_decimal(params, mu_pos, aris_pos, l0_db, eps, p_n, reflected=True):
    """RSS means in 50-digit decimal arithmetic (independent of numpy)."""
    getcontext().prec = 50
    D = Decimal
    ten = D(10)
    x = [v if isinstance(v, Decimal) else D(repr(float(v))) for v in params]
    pos, p_s = x[:3], x[-1]

    def dist(a, b):
        return sum((ai - D(repr(float(bi)))) ** 2 for ai, bi in zip(a, b)).sqrt()

    aris = [D(repr(float(v))) for v in aris_pos]
    d_H = dist(pos, aris_pos)
    out = []
    for e, mu in enumerate(mu_pos):
        d_h = dist(pos, mu)
        d_g = dist(aris, mu)
        total = ten ** ((p_s + D(repr(l0_db)) - D(10) * D(repr(eps)) * d_h.log10()) / ten)
        if reflected:
            p_r = p_s + x[3] + 2 * D(repr(l0_db)) - D(10) * D(repr(eps)) * (d_g * d_H).log10()
            total += ten ** (p_r / ten)
        if np.isfinite(p_n[e]):
            total += ten ** (D(repr(float(p_n[e]))) / ten)
        out.append(D(10) * total.log10())
    return out


def random_model(rng, E, reflected=True):
    mu = rng.uniform(-300, 300, (E, 3))
    aris = rng.uniform(-100, 100, 3)
    p_n = rng.uniform(-140, -90, E)
    p_n[rng.random(E) < 0.2] = -np.inf
    model = AdversaryModel(mu_pos=mu, aris_pos=aris, loss=PathLossModel(), p_n=p_n, reflected=reflected)
    su = rng.uniform(-150, 150, 3)
    params = [*su, rng.uniform(0, 60), rng.uniform(-30, 10)] if reflected else [*su, rng.uniform(-30, 10)]
    return model, np.array(params)


def test_gradients_match_high_precision_differences():
    for i in range(100):
        rng = np.random.default_rng([7, i])
        reflected = i % 5 != 0
        model, params = random_model(rng, int(rng.integers(5, 9)), reflected)
        grad = model.gradients(params)
        h = Decimal("1e-12")
        for j in range(len(params)):
            up = [Decimal(repr(float(p))) for p in params]
            dn = list(up)
            up[j] += h
            dn[j] -= h
            cu = c_decimal(up, model.mu_pos, model.aris_pos, -37.3, 2.2, model.p_n, reflected)
            cd = c_decimal(dn, model.mu_pos, model.aris_pos, -37.3, 2.2, model.p_n, reflected)
            for e in range(len(cu)):
                fd = float((cu[e] - cd[e]) / (2 * h))
                assert grad[e, j] == pytest.approx(fd, rel=1e-6), (i, e, j)


def test_model_mean_matches_decimal():
    rng = np.random.default_rng(8)
    model, params = random_model(rng, 6)
    ref = c_decimal(params, model.mu_pos, model.aris_pos, -37.3, 2.2, model.p_n)
    assert model.mean(params) == pytest.approx([float(v) for v in ref], abs=1e-11)


def test_fim_symmetric_psd():
    for seed in range(50):
        s = placed(seed, E=int(5 + seed % 4))
        comp = truth(s, np.random.default_rng(seed))
        rep = fim_crlb(s, comp)
        assert np.array_equal(rep.j, rep.j.T)
        assert np.linalg.eigvalsh(rep.j).min() >= -1e-12 * np.abs(rep.j).max()
        assert np.linalg.eigvalsh(rep.crlb_block).min() >= 0
        assert rep.rmse_bound == pytest.approx(math.sqrt(np.trace(rep.crlb_block)))


def test_more_an_never_tightens_bound():
    s = placed(5, E=8)
    rng = np.random.default_rng(0)
    comp = truth(s, rng)
    loud = RssComponents(comp.p_d, comp.p_r, comp.p_n + 10 * math.log10(9))
    b0, b1 = fim_crlb(s, comp), fim_crlb(s, loud)
    w0, w1 = b0.alpha0**2, b1.alpha0**2
    assert w1 / w0 == pytest.approx(((1 + b0.varrho) / (1 + 9 * b0.varrho)) ** 2, rel=1e-10)
    assert b1.rmse_bound >= b0.rmse_bound


def test_fim_singular_cases():
    s = placed(6, E=1)
    with pytest.raises(SingularityError) as exc:
        fim_crlb(s, truth(s, np.random.default_rng(0)))
    assert exc.value.rank <= 1
    s = placed(6, E=4)
    with pytest.raises(SingularityError):
        fim_crlb(s, truth(s, np.random.default_rng(0)))


# --------------------------------------------------------------------------- MLE


def test_noiseless_recovery():
    for seed in range(3):
        s = place_nodes(Scenario(E=8, hemisphere="sphere"), make_rng(seed, 9))
        comp = truth(s, np.random.default_rng(seed))
        model = adversary_model(s, comp.p_n)
        res = mle_estimate(comp.c, model)
        assert np.linalg.norm(res.estimate.position - _pos(s.su_pos)) < 0.01
        assert res.sse <= 1e-12


def test_too_few_observations():
    s = placed(7, E=4)
    comp = truth(s, np.random.default_rng(0))
    with pytest.raises(UnidentifiableError):
        mle_estimate(comp.c, adversary_model(s, comp.p_n))


def test_translation_equivariance():
    s = placed(8, E=6)
    comp = truth(s, np.random.default_rng(1))
    r = sample_observations(comp.c, 1.0, make_rng(8, 1))
    t = np.array([40.0, -120.0, 60.0])
    moved = s.replace(
        su_pos=tuple(np.add(s.su_pos, t)),
        aris_pos=tuple(np.add(s.aris_pos, t)),
        mu_pos=tuple(tuple(np.add(m, t)) for m in s.mu_pos),
    )
    a = mle_estimate(r, adversary_model(s, comp.p_n))
    b = mle_estimate(r, adversary_model(moved, comp.p_n))
    assert np.allclose(b.estimate.position - a.estimate.position, t, atol=1e-4)
    assert b.sse == pytest.approx(a.sse, rel=1e-8, abs=1e-10)


def test_refinement_improves_on_grid_and_stays_in_box():
    s = placed(9, E=6)
    comp = truth(s, np.random.default_rng(2))
    r = sample_observations(comp.c, 10.0, make_rng(9, 1))
    cfg = SearchConfig()
    model = adversary_model(s, comp.p_n)
    res = mle_estimate(r, model, cfg)
    grid = res.grid_best
    assert res.sse <= float(np.sum((model.mean(grid.as_array()) - r) ** 2)) + 1e-12
    known = np.vstack([model.mu_pos, model.aris_pos])
    assert np.all(res.estimate.position >= known.min(0) - cfg.padding - 1e-9)
    assert np.all(res.estimate.position <= known.max(0) + cfg.padding + 1e-9)


def test_reduced_model_without_surface():
    s = placed(10, E=6)
    comp = rss_components(s, [], [0] * s.E, [0.0] * s.E, aris=False)
    model = adversary_model(s, comp.p_n, reflected=False)
    assert model.n_params == 4
    res = mle_estimate(comp.c, model)
    assert math.isnan(res.estimate.g_r)
    # sphere-inversion ambiguity aside, a noiseless fit reproduces the data
    assert res.sse < 1e-10
