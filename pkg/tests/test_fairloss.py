import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairunlearn import fairloss
from fairunlearn.data import Dataset
from fairunlearn.errors import DataError
from fairunlearn.fairloss import LossConfig

from helpers import random_dataset, rel_err


@pytest.mark.parametrize("notion", fairloss.NOTIONS)
def test_penalty_matches_cartesian_oracle(notion):
    rng = np.random.default_rng(0)
    for _ in range(20):
        ds = random_dataset(rng, int(rng.integers(4, 11)), int(rng.integers(1, 5)))
        theta = rng.normal(size=ds.d)
        v = fairloss.fair_direction(ds, notion)
        assert rel_err(float(v @ theta) ** 2, fairloss.brute_force_fair(theta, ds, notion)) <= 1e-10
        total, count = fairloss.brute_force_fair_grad(theta, ds, notion)
        assert rel_err(2 * float(v @ theta) * v, total / count) <= 1e-10


def test_objective_decomposes():
    rng = np.random.default_rng(1)
    ds = random_dataset(rng, 8, 3)
    cfg = LossConfig(lam=0.1, gamma=2.0)
    theta, b = rng.normal(size=3), rng.normal(size=3)
    bce = sum(fairloss.logistic_terms(theta, x, y)[0] for x, y in zip(ds.X, ds.y))
    expect = bce + 0.5 * ds.n * 0.1 * theta @ theta + 2.0 * ds.n * fairloss.brute_force_fair(theta, ds) + b @ theta
    assert rel_err(fairloss.objective(theta, ds, cfg, b), expect) <= 1e-12


def test_pair_weights():
    assert np.array_equal(fairloss.PAIR_WEIGHTS["equalized_odds"], np.eye(2))
    assert fairloss.PAIR_WEIGHTS["demographic_parity"].sum() == 4
    assert fairloss.PAIR_WEIGHTS["equality_of_opportunity"].sum() == 1


def _fd_grad(f, theta, h=1e-6):
    g = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


@pytest.mark.parametrize("notion", fairloss.NOTIONS)
def test_finite_differences(notion):
    rng = np.random.default_rng(2)
    for _ in range(10):
        ds = random_dataset(rng, 20, 5)
        cfg = LossConfig(lam=float(rng.uniform(0.01, 1)), gamma=float(rng.uniform(0, 5)), notion=notion)
        theta, b = rng.normal(size=5), rng.normal(size=5)
        g = fairloss.gradient(theta, ds, cfg, b)
        assert rel_err(g, _fd_grad(lambda t: fairloss.objective(t, ds, cfg, b), theta)) <= 1e-5
        H = fairloss.hessian(theta, ds, cfg)
        H_fd = np.column_stack([_fd_grad(lambda t: fairloss.gradient(t, ds, cfg, b)[k], theta) for k in range(5)])
        assert rel_err(H, H_fd) <= 1e-5


def test_hessian_symmetric_and_strongly_convex():
    rng = np.random.default_rng(3)
    ds = random_dataset(rng, 30, 4)
    cfg = LossConfig(lam=0.05, gamma=3.0)
    H = fairloss.hessian(rng.normal(size=4), ds, cfg)
    assert np.array_equal(H, H.T)
    assert np.linalg.eigvalsh(H).min() >= ds.n * cfg.lam - 1e-9
    for _ in range(20):
        t1, t2 = rng.normal(size=4) * 3, rng.normal(size=4) * 3
        gap = (fairloss.gradient(t1, ds, cfg) - fairloss.gradient(t2, ds, cfg)) @ (t1 - t2)
        assert gap >= ds.n * cfg.lam * np.sum((t1 - t2) ** 2) - 1e-9


@settings(max_examples=60, deadline=None)
@given(z=st.floats(-800, 800), y=st.integers(0, 1))
def test_logistic_terms_stable(z, y):
    val, d1, d2 = fairloss.logistic_terms(np.array([z]), np.array([1.0]), y)
    assert np.isfinite(val) and val >= 0
    assert -1 <= d1 <= 1 and 0 <= d2 <= 0.25
    ref = np.logaddexp(0, -z) if y == 1 else np.logaddexp(0, z)
    assert val == pytest.approx(ref, rel=1e-12, abs=1e-300)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0, 50), lam=st.floats(1e-4, 10))
def test_gradient_vanishes_only_where_objective_is_minimal(seed, gamma, lam):
    # descent direction check: f(theta - t g) < f(theta) for small t unless g ~ 0
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 12, 3)
    cfg = LossConfig(lam=lam, gamma=gamma)
    theta = rng.normal(size=3)
    g = fairloss.gradient(theta, ds, cfg)
    f0 = fairloss.objective(theta, ds, cfg)
    H = fairloss.hessian(theta, ds, cfg)
    t = 1e-3 / max(1.0, np.linalg.eigvalsh(H).max())
    if np.linalg.norm(g) > 1e-6:
        assert fairloss.objective(theta - t * g, ds, cfg) < f0


def test_penalty_invariant_to_row_order():
    rng = np.random.default_rng(4)
    ds = random_dataset(rng, 15, 3)
    perm = rng.permutation(ds.n)
    shuffled = Dataset.from_arrays(ds.X[perm], ds.y[perm], ds.s[perm])
    for notion in fairloss.NOTIONS:
        assert rel_err(fairloss.fair_direction(ds, notion), fairloss.fair_direction(shuffled, notion)) <= 1e-14


def test_loss_config_validation():
    with pytest.raises(DataError):
        LossConfig(lam=0)
    with pytest.raises(DataError):
        LossConfig(lam=1, gamma=-1)
    with pytest.raises(DataError):
        LossConfig(lam=1, notion="parity")
    cfg = LossConfig(lam=0.1, gamma=2, notion="demographic_parity")
    assert LossConfig.from_dict(cfg.to_dict()) == cfg


def test_oracle_cap_and_empty_group():
    rng = np.random.default_rng(5)
    with pytest.raises(DataError, match="limited"):
        fairloss.brute_force_fair(np.zeros(2), random_dataset(rng, 41, 2), cap=40)
    one_group = Dataset.from_arrays(rng.normal(size=(5, 2)) * 0.1, [0, 1, 0, 1, 0], [0] * 5)
    with pytest.raises(DataError, match="both groups"):
        fairloss.fair_direction(one_group)
    # gamma = 0 never touches the fairness direction
    cfg = LossConfig(lam=1.0)
    assert np.isfinite(fairloss.objective(np.zeros(2), one_group, cfg))


def test_theta_shape_checked():
    ds = random_dataset(np.random.default_rng(6), 6, 3)
    with pytest.raises(DataError, match="shape"):
        fairloss.gradient(np.zeros(2), ds, LossConfig(lam=1))
