import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import betainc

from fairunlearn import certify
from fairunlearn.data import DeletionRequest, SynthConfig, synth_generate
from fairunlearn.errors import DataError, InfeasibleRequestError
from fairunlearn.fairloss import LossConfig
from fairunlearn.trainer import sample_noise, train
from fairunlearn.unlearner import build_cache, unlearn

from helpers import random_request


def test_worstcase_hand_computed():
    # inner = 2*1*1 + 1 * 8*(1*50^2)*100/(51^2*50^2); bound = 0.25/(0.01*100) * inner^2
    inner = 2 + 8 * 2500 * 100 / (51**2 * 50**2)
    expect = 0.25 / (0.01 * 100) * inner**2
    got = certify.worstcase_bound(101, 1, 1, 0, 51, 50, 0.1, 0.25, 1.0, 1.0)
    assert got == pytest.approx(expect, rel=1e-14)
    assert got == pytest.approx(1.3312, abs=1e-4)
    kappa = certify.param_distance_bound(101, 1, 1, 0, 51, 50, 0.1, 0.25, 1.0, 1.0)
    assert kappa == pytest.approx(got / (100 * 0.1))


def test_worstcase_input_checks():
    with pytest.raises(DataError):
        certify.worstcase_bound(10, 3, 1, 1, 5, 5, 0.1, 0.25, 1, 1)  # m != m_a + m_b
    with pytest.raises(DataError):
        certify.worstcase_bound(10, 5, 5, 0, 5, 5, 0.1, 0.25, 1, 1)  # group a emptied


def test_spectral_norm_matches_svd():
    rng = np.random.default_rng(0)
    for shape in [(50, 5), (200, 20), (3, 7)]:
        X = rng.normal(size=shape)
        assert certify.spectral_norm(X) == pytest.approx(np.linalg.norm(X, 2), rel=1e-8)
    assert certify.spectral_norm(np.zeros((4, 3))) == 0.0


def test_accounting_closed_form():
    k, eps = certify.accounting(0.01, 10.0, 1e-4)
    assert k == pytest.approx(4.3853860674, abs=1e-9)
    assert abs(eps - 4.3854e-3) <= 1e-7
    assert 1.5 * math.exp(-k * k / 2) == pytest.approx(1e-4, abs=1e-12)
    assert certify.accounting(0.0, 0.0, 1e-4)[1] == 0.0
    with pytest.raises(InfeasibleRequestError):
        certify.accounting(0.1, 0.0, 1e-4)
    with pytest.raises(DataError):
        certify.noise_multiplier(2.0)


@settings(max_examples=50, deadline=None)
@given(delta=st.floats(1e-12, 1.0))
def test_delta_round_trip(delta):
    k = certify.noise_multiplier(delta)
    assert 1.5 * math.exp(-k * k / 2) == pytest.approx(delta, rel=1e-12, abs=1e-12)


def test_certificate_selects_minimum():
    c = certify.make_certificate(5.0, 0.3, 2.0, 1e-4, 3, 1, 2, 100, 40, 60)
    assert c.binding == "data_dependent" and c.eps_prime == 0.3
    assert c.epsilon == pytest.approx(c.k * 0.3 / 2.0)
    c = certify.make_certificate(0.1, 0.3, 2.0, 1e-4, 3, 1, 2, 100, 40, 60)
    assert c.binding == "worstcase" and c.eps_prime == 0.1


def test_bounds_dominate_residual():
    ds = synth_generate(SynthConfig(n=600, d=5, p_a=0.3, mean_shift=1.0, seed=2))
    cfg = LossConfig(lam=1e-2, gamma=3.0)
    model = train(ds, cfg, sample_noise(ds.d, 1.0, 0))
    cache = build_cache(model, ds)
    rng = np.random.default_rng(1)
    for m in (1, 10, 60):
        u = unlearn(model, ds, random_request(rng, ds, m), cache)
        c = certify.certify(u, ds, model.theta, 1.0, 1e-4, cache)
        assert u.residual_norm <= c.eps_prime_data_dependent
        assert u.residual_norm <= c.eps_prime_worstcase
        slow = certify.certify(u, ds, model.theta, 1.0, 1e-4)
        assert slow.eps_prime_data_dependent == pytest.approx(c.eps_prime_data_dependent, rel=1e-6)


def test_empty_request_certificate_is_zero():
    ds = synth_generate(SynthConfig(n=100, d=3, seed=0))
    model = train(ds, LossConfig(lam=0.1, gamma=1.0), sample_noise(ds.d, 1.0, 0))
    cache = build_cache(model, ds)
    u = unlearn(model, ds, DeletionRequest.from_indices(ds, []), cache)
    c = certify.certify(u, ds, model.theta, 1.0, 1e-4, cache)
    assert c.eps_prime == 0.0 and c.epsilon == 0.0


@pytest.mark.parametrize("d", range(1, 11))
def test_cap_integral_half_ball(d):
    V = certify.ball_volume(d)
    assert certify.cap_integral(0.0, d) == pytest.approx(V / 2, abs=1e-8)
    assert certify.cap_integral(1.0, d) == 0.0


@pytest.mark.parametrize("d", [2, 3, 7])
def test_cap_integral_regularized_beta(d):
    # cap fraction beyond height mu equals I_{1-mu^2}((d+1)/2, 1/2) / 2
    V = certify.ball_volume(d)
    for mu in (0.1, 0.4, 0.9):
        frac = 0.5 * betainc((d + 1) / 2, 0.5, 1 - mu * mu)
        assert certify.cap_integral(mu, d) / V == pytest.approx(frac, rel=1e-8)


def test_ball_volume_known_values():
    assert certify.ball_volume(2) == pytest.approx(math.pi)
    assert certify.ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_drift_bound_shape():
    b0 = certify.aeod_drift_bound(0.1, 0.0, 2.0, 5)
    assert b0.slack == 0.0 and b0.bound == 0.1
    slacks = [certify.aeod_drift_bound(0.1, k, 2.0, 5).slack for k in np.linspace(0, 1.9, 20)]
    assert all(a <= b for a, b in zip(slacks, slacks[1:]))
    assert all(0 <= s <= 2.0 for s in slacks)
    with pytest.raises(DataError, match="vacuous"):
        certify.aeod_drift_bound(0.1, 3.0, 2.0, 5)
