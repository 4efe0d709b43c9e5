"""Residual-gradient bounds, (epsilon, delta) accounting and the fairness drift bound."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .data import Dataset
from .errors import DataError, InfeasibleRequestError


@dataclass(frozen=True)
class Certificate:
    eps_prime: float
    eps_prime_worstcase: float
    eps_prime_data_dependent: float
    binding: str  # "worstcase" or "data_dependent"
    sigma: float
    delta: float
    k: float
    epsilon: float
    m: int
    m_a: int
    m_b: int
    n: int
    n_a: int
    n_b: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FairnessDriftBound:
    bound: float  # baseline AEOD + slack
    baseline: float
    kappa: float
    phi: float
    mu: float
    c: float
    d: int
    slack: float
    cap_integral: float
    ball_volume: float

    def to_dict(self) -> dict:
        return asdict(self)


def _removed_pair_term(n, m, m_a, m_b, n_a, n_b) -> float:
    # 8 |N \ C_D'| (n - m) / |N| with |N \ C_D'| = m_a^2 n_b^2 + m_b^2 n_a^2 - m_a^2 m_b^2
    removed = m_a**2 * n_b**2 + m_b**2 * n_a**2 - m_a**2 * m_b**2
    return 8.0 * removed * (n - m) / (float(n_a) ** 2 * float(n_b) ** 2)


def _check_counts(n, m, m_a, m_b, n_a, n_b, lam):
    if not (n > m >= 0 and n_a > m_a >= 0 and n_b > m_b >= 0 and m == m_a + m_b):
        raise DataError(f"invalid removal counts: n={n}, m={m} ({m_a}+{m_b}), n_a={n_a}, n_b={n_b}")
    if not lam > 0:
        raise DataError("lam must be positive")


def worstcase_bound(n: int, m: int, m_a: int, m_b: int, n_a: int, n_b: int,
                    lam: float, psi: float, g: float, theta_norm: float) -> float:
    """Data-independent bound on ||grad L(theta_unlearned; D')||_2.

    psi / (lam^2 (n - m)) * (2 m g + ||theta|| * 8 (m_a^2 n_b^2 + m_b^2 n_a^2
    - m_a^2 m_b^2)(n - m) / (n_a^2 n_b^2))^2, with lam the per-sample weight.
    """
    _check_counts(n, m, m_a, m_b, n_a, n_b, lam)
    inner = 2.0 * m * g + theta_norm * _removed_pair_term(n, m, m_a, m_b, n_a, n_b)
    return psi / (lam**2 * (n - m)) * inner**2


def param_distance_bound(n: int, m: int, m_a: int, m_b: int, n_a: int, n_b: int,
                         lam: float, psi: float, g: float, theta_norm: float) -> float:
    """Bound on ||theta_unlearned - theta_retrained||_2 via (n - m) lam strong convexity."""
    return worstcase_bound(n, m, m_a, m_b, n_a, n_b, lam, psi, g, theta_norm) / ((n - m) * lam)


def spectral_norm(X: np.ndarray, tol: float = 1e-8, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest singular value of X by power iteration on the d x d Gram matrix."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return 0.0
    return math.sqrt(gram_top_eigenvalue(X.T @ X, tol, max_iter, seed))


def gram_top_eigenvalue(G: np.ndarray, tol: float = 1e-8, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Stops when the Rayleigh quotient changes by less than ``tol * tol``
    relative, so the square root (a singular value) is good to about ``tol``.
    """
    d = G.shape[0]
    v = np.random.default_rng(seed).normal(size=d)
    v /= np.linalg.norm(v)
    est = float(v @ G @ v)
    for _ in range(max_iter):
        w = G @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new = float(v @ G @ v)
        if abs(new - est) <= max(tol * tol, 1e-15) * max(new, 1e-300):
            return new
        est = new
    # slow convergence (clustered top eigenvalues): fall back to a direct solve
    return float(np.linalg.eigvalsh(0.5 * (G + G.T))[-1])


def data_dependent_bound(X_remaining: np.ndarray | Dataset, step: np.ndarray, psi: float,
                         spectral: float | None = None) -> float:
    """psi * ||X||_2 * ||step||_2 * ||X step||_2 over the remaining data."""
    X = X_remaining.X if isinstance(X_remaining, Dataset) else np.asarray(X_remaining, dtype=float)
    step = np.asarray(step, dtype=float)
    if X.shape[1] != step.size:
        raise DataError(f"dimension mismatch: X has {X.shape[1]} columns, step has {step.size}")
    if not np.any(step):
        return 0.0
    if spectral is None:
        spectral = spectral_norm(X)
    return psi * spectral * float(np.linalg.norm(step)) * float(np.linalg.norm(X @ step))


def noise_multiplier(delta: float) -> float:
    """k with delta = 1.5 exp(-k^2 / 2)."""
    if not 0 < delta < 1.5:
        raise DataError(f"delta must lie in (0, 1.5), got {delta}")
    return math.sqrt(2.0 * math.log(1.5 / delta))


def accounting(eps_prime: float, sigma: float, delta: float) -> tuple[float, float]:
    """(k, epsilon) for noise b ~ N(0, sigma^2 I): epsilon = k eps' / sigma."""
    if eps_prime < 0:
        raise DataError("eps_prime must be >= 0")
    k = noise_multiplier(delta)
    if eps_prime == 0:
        return k, 0.0
    if not sigma > 0:
        raise InfeasibleRequestError("no noise, no certificate: sigma must be > 0")
    return k, k * eps_prime / sigma


def make_certificate(eps_worst: float, eps_data: float, sigma: float, delta: float,
                     m: int, m_a: int, m_b: int, n: int, n_a: int, n_b: int) -> Certificate:
    """Pick the smaller residual bound and convert it to epsilon."""
    if eps_data < eps_worst:
        eps, binding = eps_data, "data_dependent"
    else:
        eps, binding = eps_worst, "worstcase"
    k, epsilon = accounting(eps, sigma, delta)
    return Certificate(eps_prime=eps, eps_prime_worstcase=eps_worst, eps_prime_data_dependent=eps_data,
                       binding=binding, sigma=sigma, delta=delta, k=k, epsilon=epsilon,
                       m=m, m_a=m_a, m_b=m_b, n=n, n_a=n_a, n_b=n_b)


def certify(unlearned, ds: Dataset, theta_trained: np.ndarray, sigma: float, delta: float,
            cache=None) -> Certificate:
    """Certificate for an UnlearnedModel produced from ``ds``.

    If the model's UnlearnCache is passed, the spectral norm of the
    remaining data comes from the cached Gram matrix (no pass over D').
    """
    req = unlearned.request
    cfg = unlearned.loss
    n, n_a, n_b = ds.n, ds.n_a, ds.n_b
    eps_worst = worstcase_bound(n, req.m, req.m_a, req.m_b, n_a, n_b, cfg.lam, cfg.psi, cfg.g,
                                float(np.linalg.norm(theta_trained)))
    keep = np.ones(n, dtype=bool)
    keep[req.indices] = False
    X_rem = ds.X[keep]
    spectral = None
    if cache is not None:
        Xr = ds.X[req.indices]
        spectral = math.sqrt(max(gram_top_eigenvalue(cache.gram - Xr.T @ Xr), 0.0))
    eps_data = data_dependent_bound(X_rem, unlearned.step, cfg.psi, spectral)
    return make_certificate(eps_worst, eps_data, sigma, delta, req.m, req.m_a, req.m_b, n, n_a, n_b)


def ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return math.exp(0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0))


def cap_integral(mu: float, d: int) -> float:
    """Volume of the unit d-ball beyond the hyperplane at distance mu from the center."""
    if not 0.0 <= mu <= 1.0:
        raise DataError(f"mu must lie in [0, 1], got {mu}")
    if d < 1:
        raise DataError("d must be >= 1")
    if mu == 1.0:
        return 0.0
    const = math.exp(0.5 * (d - 1) * math.log(math.pi) - gammaln(0.5 * (d + 1)))
    expo = 0.5 * (d - 1)
    val, _ = integrate.quad(lambda t: (1.0 - t * t) ** expo, mu, 1.0, epsabs=0.0, epsrel=1e-11, limit=200)
    return const * val


def aeod_drift_bound(baseline: float, kappa: float, theta_norm: float, d: int, c: float = 2.0) -> FairnessDriftBound:
    """Upper bound on the equalized-odds gap of a model within ``kappa`` of a reference model.

    ``baseline`` is the reference (retrained) model's AEOD and
    ``theta_norm`` its parameter norm; ``c`` bounds how concentrated the
    conditional feature distributions are relative to uniform on the ball.
    """
    if kappa < 0:
        raise DataError("kappa must be >= 0")
    if not theta_norm > kappa:
        raise DataError("bound vacuous: theta_norm must exceed kappa")
    if c < 1:
        raise DataError("c must be >= 1")
    phi = math.acos(min(1.0, (theta_norm - kappa) / (theta_norm + kappa)))
    mu = min(0.5 * math.sin(0.5 * phi), 0.5 * math.sqrt(kappa))
    V = ball_volume(d)
    cap = cap_integral(mu, d)
    slack = 0.0 if mu == 0.0 else min(c, max(0.0, c * (1.0 - 2.0 * cap / V)))
    return FairnessDriftBound(bound=baseline + slack, baseline=baseline, kappa=kappa, phi=phi, mu=mu,
                              c=c, d=d, slack=slack, cap_integral=cap, ball_volume=V)
