"""Newton-step removal of training points from a fair logistic model.

Removing a set R turns the objective on D into the objective on
D' = D \\ R. The correction vector ``delta`` satisfies, for every theta,

    grad L(theta, D') + delta(theta) = grad L(theta, D)

so at the trained optimum the gradient on D' is exactly ``-delta`` and one
Newton step ``theta + H^{-1} delta`` (H the Hessian on D' at theta)
approximately re-optimizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from . import fairloss
from .data import Dataset, DeletionRequest, GROUP_NAMES, cell_stats
from .errors import DataError, InfeasibleRequestError
from .fairloss import LossConfig
from .trainer import Model, bce_config


@dataclass(frozen=True, eq=False)
class UnlearnCache:
    """Full-data quantities at the trained optimum, computed once per model.

    ``curvature`` is sum_i w_i x_i x_i^T with w_i = sigma(z_i)(1 - sigma(z_i)),
    ``gram`` is X^T X (used for the spectral norm of the remaining data).
    """

    theta: np.ndarray
    weights: np.ndarray = field(repr=False)
    curvature: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    counts: np.ndarray
    sums: np.ndarray = field(repr=False)
    fingerprint: str


@dataclass(frozen=True, eq=False)
class UnlearnedModel:
    """Result of one batched removal.

    ``residual_norm`` is ||grad L^b(theta, D')||_2 with the model's own noise
    term included, the quantity the certificates bound; ``residual_norm_clean``
    drops the noise term.
    """

    theta: np.ndarray
    delta: np.ndarray
    step: np.ndarray
    residual_norm: float
    residual_norm_clean: float
    request: DeletionRequest
    loss: LossConfig
    source_fingerprint: str
    counts_remaining: np.ndarray


def build_cache(model: Model, ds: Dataset) -> UnlearnCache:
    if model.fingerprint != ds.fingerprint:
        raise DataError("model fingerprint does not match dataset")
    w = fairloss.curvature_weights(model.theta, ds.X)
    A = ds.X.T @ (w[:, None] * ds.X)
    G = ds.X.T @ ds.X
    for a in (w, A, G):
        a.setflags(write=False)
    return UnlearnCache(theta=model.theta, weights=w, curvature=A, gram=G,
                        counts=ds.counts, sums=ds.sums, fingerprint=ds.fingerprint)


def _remaining_cells(counts, sums, ds: Dataset, req: DeletionRequest):
    Xr, yr, sr = ds.X[req.indices], ds.y[req.indices], ds.s[req.indices]
    c_r, s_r = cell_stats(Xr, yr, sr)
    return counts - c_r, sums - s_r


def _check_request(ds: Dataset, req: DeletionRequest, cfg: LossConfig) -> None:
    if req.m and (req.indices[0] < 0 or req.indices[-1] >= ds.n):
        raise DataError(f"deletion index out of range [0, {ds.n})")
    if req.m >= ds.n:
        raise InfeasibleRequestError("request removes every training point")
    if cfg.gamma > 0:
        for g, removed in ((0, req.m_a), (1, req.m_b)):
            if removed >= int(ds.counts[g].sum()):
                raise InfeasibleRequestError(
                    f"request empties group {GROUP_NAMES[g]}; fairness penalty undefined on D'")


def delta_at(theta, ds: Dataset, req: DeletionRequest, cfg: LossConfig,
             counts=None, sums=None) -> np.ndarray:
    """Correction vector at an arbitrary theta.

    delta = sum_{i in R} l'(theta; x_i, y_i) x_i + m lam theta
            + 2 gamma n (v_D . theta) v_D - 2 gamma (n - m) (v_D' . theta) v_D'
    """
    _check_request(ds, req, cfg)
    theta = np.asarray(theta, dtype=float)
    if req.m == 0:
        return np.zeros_like(theta)
    counts = ds.counts if counts is None else counts
    sums = ds.sums if sums is None else sums
    n, m = ds.n, req.m
    Xr = ds.X[req.indices]
    r = expit(Xr @ theta) - ds.y[req.indices]
    delta = Xr.T @ r + m * cfg.lam * theta
    if cfg.gamma:
        v_full = fairloss.fair_direction_from_cells(counts, sums, cfg.notion)
        c_rem, s_rem = _remaining_cells(counts, sums, ds, req)
        v_rem = fairloss.fair_direction_from_cells(c_rem, s_rem, cfg.notion)
        delta += 2.0 * cfg.gamma * (n * float(v_full @ theta) * v_full
                                    - (n - m) * float(v_rem @ theta) * v_rem)
    return delta


def compute_delta(cache: UnlearnCache, model: Model, ds: Dataset, req: DeletionRequest,
                  cfg: LossConfig | None = None) -> np.ndarray:
    _check_cache(cache, model, ds)
    return delta_at(cache.theta, ds, req, cfg or model.loss, cache.counts, cache.sums)


def _check_cache(cache: UnlearnCache, model: Model, ds: Dataset) -> None:
    if cache.fingerprint != ds.fingerprint or model.fingerprint != ds.fingerprint:
        raise DataError("cache, model and dataset fingerprints disagree")
    if not np.array_equal(cache.theta, model.theta):
        raise DataError("cache was built for a different model")


def assemble_hessian(cache: UnlearnCache, ds: Dataset, req: DeletionRequest, cfg: LossConfig) -> np.ndarray:
    """Hessian of the objective on D' at the cached optimum, from cached pieces.

    H = A - sum_{i in R} w_i x_i x_i^T + (n - m) lam I + 2 gamma (n - m) v_D' v_D'^T
    """
    n, m = ds.n, req.m
    Xr = ds.X[req.indices]
    H = cache.curvature - Xr.T @ (cache.weights[req.indices][:, None] * Xr)
    H[np.diag_indices_from(H)] += (n - m) * cfg.lam
    if cfg.gamma:
        c_rem, s_rem = _remaining_cells(cache.counts, cache.sums, ds, req)
        v_rem = fairloss.fair_direction_from_cells(c_rem, s_rem, cfg.notion)
        H += 2.0 * cfg.gamma * (n - m) * np.outer(v_rem, v_rem)
    return 0.5 * (H + H.T)


def remaining_gradient(theta, ds: Dataset, req: DeletionRequest, cfg: LossConfig, noise=None,
                       counts_remaining=None, sums_remaining=None) -> np.ndarray:
    """Gradient of the objective on D' without materializing D'."""
    keep = np.ones(ds.n, dtype=bool)
    keep[req.indices] = False
    n_rem = ds.n - req.m
    r = (expit(ds.X @ theta) - ds.y) * keep
    grad = ds.X.T @ r + n_rem * cfg.lam * theta
    if cfg.gamma:
        if counts_remaining is None:
            counts_remaining, sums_remaining = _remaining_cells(ds.counts, ds.sums, ds, req)
        v = fairloss.fair_direction_from_cells(counts_remaining, sums_remaining, cfg.notion)
        grad += 2.0 * cfg.gamma * n_rem * float(v @ theta) * v
    if noise is not None:
        grad += getattr(noise, "b", noise)
    return grad


def unlearn(model: Model, ds: Dataset, req: DeletionRequest, cache: UnlearnCache,
            cfg: LossConfig | None = None) -> UnlearnedModel:
    """One Newton step from the trained optimum toward the optimum on D \\ R."""
    cfg = cfg or model.loss
    _check_cache(cache, model, ds)
    delta = compute_delta(cache, model, ds, req, cfg)
    c_rem, s_rem = _remaining_cells(cache.counts, cache.sums, ds, req)
    if req.m == 0:
        step = np.zeros_like(delta)
    else:
        H = assemble_hessian(cache, ds, req, cfg)
        if not np.all(np.isfinite(H)):
            raise DataError("non-finite Hessian; check inputs for NaN")
        try:
            step = cho_solve(cho_factor(H), delta)
        except LinAlgError as exc:
            raise DataError(f"Hessian factorization failed: {exc}") from None
    theta = model.theta + step
    theta.setflags(write=False)
    g_noisy = remaining_gradient(theta, ds, req, cfg, model.noise, c_rem, s_rem)
    g_clean = g_noisy - model.noise.b
    return UnlearnedModel(theta=theta, delta=delta, step=step,
                          residual_norm=float(np.linalg.norm(g_noisy)),
                          residual_norm_clean=float(np.linalg.norm(g_clean)),
                          request=req, loss=cfg, source_fingerprint=ds.fingerprint,
                          counts_remaining=c_rem)


def unlearn_bce(model: Model, ds: Dataset, req: DeletionRequest, cache: UnlearnCache) -> UnlearnedModel:
    """Newton removal that ignores the fairness term (gamma forced to 0)."""
    return unlearn(model, ds, req, cache, bce_config(model.loss))
