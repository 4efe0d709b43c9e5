import numpy as np
import pytest

from fairunlearn import fairloss
from fairunlearn.data import DeletionRequest, SynthConfig, synth_generate
from fairunlearn.errors import DataError, InfeasibleRequestError
from fairunlearn.fairloss import LossConfig
from fairunlearn.trainer import retrain_without, sample_noise, train
from fairunlearn.unlearner import (assemble_hessian, build_cache, delta_at, remaining_gradient, unlearn,
                                   unlearn_bce)

from helpers import random_dataset, random_request, rel_err


@pytest.fixture(scope="module")
def setup():
    ds = synth_generate(SynthConfig(n=800, d=5, p_a=0.3, mean_shift=1.5, offset_a=0.5, seed=1))
    cfg = LossConfig(lam=1e-2, gamma=5.0)
    model = train(ds, cfg, sample_noise(ds.d, 0.2, 3))
    return ds, cfg, model, build_cache(model, ds)


@pytest.mark.parametrize("notion", fairloss.NOTIONS)
def test_delta_identity(notion):
    rng = np.random.default_rng(0)
    for _ in range(20):
        ds = random_dataset(rng, 30, 4)
        cfg = LossConfig(lam=float(rng.uniform(0.01, 1)), gamma=float(rng.uniform(0, 10)), notion=notion)
        req = random_request(rng, ds, int(rng.integers(1, 6)))
        theta, b = rng.normal(size=4), rng.normal(size=4)
        lhs = fairloss.gradient(theta, ds.remove(req.indices), cfg, b) + delta_at(theta, ds, req, cfg)
        assert rel_err(lhs, fairloss.gradient(theta, ds, cfg, b)) <= 1e-8


def test_remaining_gradient_without_copy():
    rng = np.random.default_rng(1)
    ds = random_dataset(rng, 25, 3)
    cfg = LossConfig(lam=0.1, gamma=2.0)
    req = random_request(rng, ds, 4)
    theta, b = rng.normal(size=3), rng.normal(size=3)
    assert rel_err(remaining_gradient(theta, ds, req, cfg, b),
                   fairloss.gradient(theta, ds.remove(req.indices), cfg, b)) <= 1e-12


def test_cached_hessian_equals_direct(setup):
    ds, cfg, model, cache = setup
    req = random_request(np.random.default_rng(2), ds, 30)
    H = assemble_hessian(cache, ds, req, cfg)
    assert rel_err(H, fairloss.hessian(model.theta, ds.remove(req.indices), cfg)) <= 1e-12


def test_unlearn_tracks_retraining(setup):
    ds, cfg, model, cache = setup
    rng = np.random.default_rng(3)
    for m in (1, 8, 40):
        req = random_request(rng, ds, m)
        u = unlearn(model, ds, req, cache)
        # same noise vector on both sides isolates the Newton approximation
        oracle = train(ds.remove(req.indices), cfg, model.noise)
        assert rel_err(u.theta, oracle.theta) <= 1e-3
        assert u.residual_norm < np.linalg.norm(u.delta)
        assert np.array_equal(u.theta, model.theta + u.step)


def test_empty_request_is_identity(setup):
    ds, _, model, cache = setup
    u = unlearn(model, ds, DeletionRequest.from_indices(ds, []), cache)
    assert np.array_equal(u.theta, model.theta)
    assert not np.any(u.step)


def test_noisy_residual_is_what_is_reported(setup):
    ds, cfg, model, cache = setup
    req = random_request(np.random.default_rng(4), ds, 10)
    u = unlearn(model, ds, req, cache)
    g = fairloss.gradient(u.theta, ds.remove(req.indices), cfg, model.noise)
    assert u.residual_norm == pytest.approx(np.linalg.norm(g), rel=1e-10)
    g0 = fairloss.gradient(u.theta, ds.remove(req.indices), cfg)
    assert u.residual_norm_clean == pytest.approx(np.linalg.norm(g0), rel=1e-10)


def test_group_emptying_request_is_infeasible(setup):
    ds, _, model, cache = setup
    req = DeletionRequest.from_indices(ds, np.flatnonzero(ds.s == 1))
    with pytest.raises(InfeasibleRequestError, match="group b") as info:
        unlearn(model, ds, req, cache)
    assert info.value.exit_code == 3


def test_bce_unlearn_ignores_fairness(setup):
    ds, cfg, _, _ = setup
    bce = LossConfig(lam=cfg.lam)
    model = train(ds, bce)
    cache = build_cache(model, ds)
    req = random_request(np.random.default_rng(5), ds, 20)
    u = unlearn_bce(model, ds, req, cache)
    assert u.loss.gamma == 0
    assert rel_err(u.theta, retrain_without(ds, req, bce, 0.0, 0).theta) <= 1e-3


def test_fingerprint_mismatch(setup):
    ds, _, model, cache = setup
    other = synth_generate(SynthConfig(n=800, d=5, seed=99))
    with pytest.raises(DataError, match="fingerprint"):
        build_cache(model, other)
    with pytest.raises(DataError):
        unlearn(model, other, DeletionRequest.from_indices(other, [0]), cache)


def test_cache_is_read_only(setup):
    _, _, _, cache = setup
    with pytest.raises(ValueError):
        cache.curvature[0, 0] = 0.0
