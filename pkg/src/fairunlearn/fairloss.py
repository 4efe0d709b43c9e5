"""The fairness-regularized logistic objective.

On a dataset of size ``n`` the (unnormalized) objective is::

    L(theta) = sum_i l(theta, x_i, y_i) + (n*lam/2) ||theta||^2
               + gamma * n * (v . theta)^2 + b . theta

where ``l`` is the sigmoid logistic loss and ``v`` the fairness direction,
the average pairwise feature difference between same-label members of
opposite groups. Dividing by ``n`` gives the per-sample form.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import DataError

NOTIONS = ("equalized_odds", "demographic_parity", "equality_of_opportunity")

# PAIR_WEIGHTS[notion][y_i, y_j] is the pair indicator for i in a, j in b
PAIR_WEIGHTS = {
    "equalized_odds": np.array([[1.0, 0.0], [0.0, 1.0]]),
    "demographic_parity": np.ones((2, 2)),
    "equality_of_opportunity": np.array([[0.0, 0.0], [0.0, 1.0]]),
}

BRUTE_FORCE_CAP = 40


@dataclass(frozen=True)
class LossConfig:
    """Objective hyperparameters.

    lam is the per-sample l2 weight, gamma the fairness weight, psi the
    Lipschitz constant of l'' and g the bound on |l'|.
    """

    lam: float
    gamma: float = 0.0
    notion: str = "equalized_odds"
    psi: float = 0.25
    g: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise DataError(f"lam must be > 0 (strong convexity), got {self.lam}")
        if not self.gamma >= 0:
            raise DataError(f"gamma must be >= 0, got {self.gamma}")
        if self.notion not in NOTIONS:
            raise DataError(f"unknown fairness notion {self.notion!r}")
        if not (self.psi > 0 and self.g > 0):
            raise DataError("psi and g must be positive")

    def to_dict(self) -> dict:
        return {"lam": self.lam, "gamma": self.gamma, "notion": self.notion, "psi": self.psi, "g": self.g}

    @classmethod
    def from_dict(cls, d: dict) -> LossConfig:
        return cls(**{k: d[k] for k in ("lam", "gamma", "notion", "psi", "g") if k in d})


def _noise_vec(noise, d: int) -> np.ndarray | None:
    if noise is None:
        return None
    b = getattr(noise, "b", noise)
    b = np.asarray(b, dtype=float)
    if b.shape != (d,):
        raise DataError(f"noise has shape {b.shape}, expected ({d},)")
    return b


def _check_theta(theta, ds: Dataset) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (ds.d,):
        raise DataError(f"theta has shape {theta.shape}, dataset has d={ds.d}")
    return theta


def log1pexp(z):
    """log(1 + exp(z)) without overflow."""
    return np.logaddexp(0.0, z)


def logistic_terms(theta, x, y) -> tuple[float, float, float]:
    """Loss value and its first/second derivatives with respect to z = <x, theta>."""
    z = float(np.dot(x, theta))
    value = y * log1pexp(-z) + (1 - y) * log1pexp(z)
    p = expit(z)
    return float(value), float(p - y), float(p * (1.0 - p))


def fair_direction_from_cells(counts: np.ndarray, sums: np.ndarray, notion: str) -> np.ndarray:
    """Fairness direction from per-(group, label) counts and feature sums.

    For pair weights W[y, y'] the double sum over i in a, j in b of
    W[y_i, y_j] (x_i - x_j) equals
    sum_{y, y'} W[y, y'] (n_{b,y'} S_{a,y} - n_{a,y} S_{b,y'}).
    """
    n_a = counts[0].sum()
    n_b = counts[1].sum()
    if n_a < 1 or n_b < 1:
        raise DataError("fairness direction needs both groups nonempty")
    W = PAIR_WEIGHTS[notion]
    v = np.zeros(sums.shape[-1])
    for yi in (0, 1):
        for yj in (0, 1):
            if W[yi, yj]:
                v += W[yi, yj] * (counts[1, yj] * sums[0, yi] - counts[0, yi] * sums[1, yj])
    return v / (float(n_a) * float(n_b))


def fair_direction(ds: Dataset, notion: str = "equalized_odds") -> np.ndarray:
    return fair_direction_from_cells(ds.counts, ds.sums, notion)


def objective(theta, ds: Dataset, cfg: LossConfig, noise=None) -> float:
    theta = _check_theta(theta, ds)
    n = ds.n
    z = ds.X @ theta
    val = float(np.sum(np.where(ds.y == 1, log1pexp(-z), log1pexp(z))))
    val += 0.5 * n * cfg.lam * float(theta @ theta)
    if cfg.gamma:
        val += cfg.gamma * n * float(fair_direction(ds, cfg.notion) @ theta) ** 2
    b = _noise_vec(noise, ds.d)
    if b is not None:
        val += float(b @ theta)
    return val


def gradient(theta, ds: Dataset, cfg: LossConfig, noise=None) -> np.ndarray:
    theta = _check_theta(theta, ds)
    n = ds.n
    r = expit(ds.X @ theta) - ds.y
    grad = ds.X.T @ r + n * cfg.lam * theta
    if cfg.gamma:
        v = fair_direction(ds, cfg.notion)
        grad += 2.0 * cfg.gamma * n * float(v @ theta) * v
    b = _noise_vec(noise, ds.d)
    if b is not None:
        grad += b
    return grad


def curvature_weights(theta, X: np.ndarray) -> np.ndarray:
    p = expit(X @ theta)
    return p * (1.0 - p)


def hessian(theta, ds: Dataset, cfg: LossConfig) -> np.ndarray:
    theta = _check_theta(theta, ds)
    n = ds.n
    w = curvature_weights(theta, ds.X)
    H = ds.X.T @ (w[:, None] * ds.X)
    H[np.diag_indices_from(H)] += n * cfg.lam
    if cfg.gamma:
        v = fair_direction(ds, cfg.notion)
        H += 2.0 * cfg.gamma * n * np.outer(v, v)
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# Literal Cartesian-product forms (test oracles)
# ---------------------------------------------------------------------------


def _pair_terms(ds: Dataset, notion: str, members_a=None, members_b=None):
    W = PAIR_WEIGHTS[notion]
    ga = ds.group_a if members_a is None else members_a
    gb = ds.group_b if members_b is None else members_b
    return [(W[ds.y[i], ds.y[j]], ds.X[i] - ds.X[j]) for i in ga for j in gb]


def brute_force_fair(theta, ds: Dataset, notion: str = "equalized_odds", cap: int = BRUTE_FORCE_CAP) -> float:
    """Fairness penalty as the literal average over all (i, j, k, l) in Ga x Gb x Ga x Gb."""
    if ds.n > cap:
        raise DataError(f"brute-force oracle limited to n <= {cap}, got {ds.n}")
    theta = _check_theta(theta, ds)
    pairs = _pair_terms(ds, notion)
    if not pairs:
        raise DataError("fairness penalty needs both groups nonempty")
    total = 0.0
    for (w1, d1), (w2, d2) in itertools.product(pairs, pairs):
        total += w1 * float(d1 @ theta) * w2 * float(d2 @ theta)
    return total / len(pairs) ** 2


def brute_force_fair_grad(theta, ds: Dataset, notion: str = "equalized_odds",
                          members_a=None, members_b=None,
                          cap: int = BRUTE_FORCE_CAP) -> tuple[np.ndarray, int]:
    """Sum over (members_a x members_b)^2 of the per-tuple gradient (a b^T + b a^T) theta.

    Returns the unnormalized sum and the number of tuples.
    """
    if ds.n > cap:
        raise DataError(f"brute-force oracle limited to n <= {cap}, got {ds.n}")
    theta = _check_theta(theta, ds)
    pairs = _pair_terms(ds, notion, members_a, members_b)
    total = np.zeros(ds.d)
    for (w1, d1), (w2, d2) in itertools.product(pairs, pairs):
        a = w1 * d1
        b = w2 * d2
        total += (np.outer(a, b) + np.outer(b, a)) @ theta
    return total, len(pairs) ** 2
