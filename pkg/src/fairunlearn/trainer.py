"""Damped Newton minimization of the perturbed fair objective."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import fairloss
from .data import Dataset, DeletionRequest
from .errors import ConvergenceError, DataError
from .fairloss import LossConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NoiseVector:
    """Linear perturbation b with b ~ N(0, sigma^2 I_d), replayable from (sigma, seed, d)."""

    b: np.ndarray
    sigma: float
    seed: int | None

    @property
    def d(self) -> int:
        return self.b.size


def sample_noise(d: int, sigma: float, seed: int | None) -> NoiseVector:
    if sigma < 0:
        raise DataError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        b = np.zeros(d)
    else:
        b = np.random.default_rng(seed).normal(0.0, sigma, size=d)
    b.setflags(write=False)
    return NoiseVector(b=b, sigma=float(sigma), seed=seed)


def zero_noise(d: int) -> NoiseVector:
    return sample_noise(d, 0.0, None)


@dataclass(frozen=True)
class TrainConfig:
    tol: float = 1e-8  # on ||grad||_2 / n
    max_iter: int = 100
    shrink: float = 0.5
    armijo: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0 or self.max_iter < 1:
            raise DataError("TrainConfig needs tol > 0 and max_iter >= 1")
        if not (0 < self.shrink < 1 and 0 < self.armijo < 0.5):
            raise DataError("backtracking needs 0 < shrink < 1 and 0 < armijo < 0.5")

    def to_dict(self) -> dict:
        return {"tol": self.tol, "max_iter": self.max_iter, "shrink": self.shrink,
                "armijo": self.armijo, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class Model:
    theta: np.ndarray
    loss: LossConfig
    noise: NoiseVector
    fingerprint: str
    grad_norm: float
    iterations: int
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def d(self) -> int:
        return self.theta.size


def train(ds: Dataset, cfg: LossConfig, noise: NoiseVector | None = None,
          tc: TrainConfig | None = None, theta0=None) -> Model:
    """Minimize the perturbed objective from ``theta0`` (default zero).

    Each iteration solves the Newton system with a Cholesky factorization
    and backtracks until the Armijo condition holds. Stops once
    ||grad||_2 / n <= tol.
    """
    tc = tc or TrainConfig()
    noise = noise if noise is not None else zero_noise(ds.d)
    if ds.n == 0:
        raise DataError("cannot train on an empty dataset")
    if noise.d != ds.d:
        raise DataError(f"noise dimension {noise.d} != data dimension {ds.d}")
    if cfg.gamma > 0:
        _check_fair_preconditions(ds, cfg.notion)

    n = ds.n
    theta = np.zeros(ds.d) if theta0 is None else np.array(theta0, dtype=float)
    f = fairloss.objective(theta, ds, cfg, noise)
    history = [f]
    grad_norm = np.inf
    for it in range(tc.max_iter + 1):
        grad = fairloss.gradient(theta, ds, cfg, noise)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm / n <= tc.tol:
            break
        if it == tc.max_iter:
            raise ConvergenceError(
                f"no convergence in {tc.max_iter} Newton iterations (||grad||/n = {grad_norm / n:.3e})",
                theta=theta, grad_norm=grad_norm)
        H = fairloss.hessian(theta, ds, cfg)
        step = -cho_solve(cho_factor(H), grad)
        slope = float(grad @ step)
        t = 1.0
        while True:
            cand = theta + t * step
            f_new = fairloss.objective(cand, ds, cfg, noise)
            if f_new <= f + tc.armijo * t * slope:
                break
            # near the optimum the decrease falls below rounding of f
            if -slope * t <= 1e-13 * max(1.0, abs(f)):
                break
            t *= tc.shrink
        theta, f = cand, f_new
        history.append(f)
    theta.setflags(write=False)
    return Model(theta=theta, loss=cfg, noise=noise, fingerprint=ds.fingerprint,
                 grad_norm=grad_norm, iterations=it, history=tuple(history))


def _check_fair_preconditions(ds: Dataset, notion: str) -> None:
    if ds.n_a == 0 or ds.n_b == 0:
        raise DataError("fair training needs both groups nonempty")
    if notion == "equality_of_opportunity" and (ds.counts[0, 1] == 0 or ds.counts[1, 1] == 0):
        raise DataError("equality of opportunity needs positives in both groups")


def retrain_without(ds: Dataset, req: DeletionRequest, cfg: LossConfig, sigma: float,
                    seed: int | None, tc: TrainConfig | None = None) -> Model:
    """Train from scratch on D minus the request with a freshly drawn noise vector."""
    remaining = ds.remove(req.indices) if req.m else ds
    return train(remaining, cfg, sample_noise(ds.d, sigma, seed), tc)


def bce_config(cfg: LossConfig) -> LossConfig:
    return replace(cfg, gamma=0.0)
