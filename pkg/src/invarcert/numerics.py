"""Special functions, quadrature and binomial confidence machinery.

Everything here is pure and thread-safe; random sampling takes an explicit
seed and owns a private generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

# Power series below, asymptotic expansion above.  In double precision the
# two branches agree to ~1e-13 at the switch point.
_BESSEL_SWITCH = 50.0

# Relative tolerance for negative eigenvalues of nominally-PSD covariances.
_PSD_REL_TOL = 1e-9

# Clamp window applied by certificate callers before quantile inversion.
PROB_CLAMP = 1e-12


class NumericalFailure(RuntimeError):
    """Raised when a computation produces NaN or leaves its valid domain."""


def std_normal_cdf(x):
    """Standard normal CDF Phi(x).  Accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("std_normal_cdf: input must be finite")
    out = special.ndtr(x)
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(p):
    """Inverse standard normal CDF.  Rejects p outside the open interval (0,1)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("std_normal_quantile: p must lie strictly in (0,1)")
    out = special.ndtri(p)
    return float(out) if out.ndim == 0 else out


def clamp_probability(p: float) -> tuple[float, bool]:
    """Clamp p into [PROB_CLAMP, 1-PROB_CLAMP]; returns (value, was_clamped)."""
    if p < PROB_CLAMP:
        return PROB_CLAMP, True
    if p > 1.0 - PROB_CLAMP:
        return 1.0 - PROB_CLAMP, True
    return p, False


def _log_i0_series(x):
    # sum_k (x/2)^(2k) / (k!)^2, summed in the linear domain; safe for x <= ~700
    # and fully converged long before k=60 for x <= _BESSEL_SWITCH.
    total = np.zeros_like(x)
    term = np.ones_like(x)
    q = 0.25 * x * x
    total += term
    for k in range(1, 60):
        term = term * q / (k * k)
        total += term
    return np.log(total)

# Coefficients a_k = prod_{j<=k} (2j-1)^2 / (8^k k!) of the large-x expansion
# I0(x) ~ e^x / sqrt(2 pi x) * sum_k a_k x^-k.
_I0_ASYMPT = [1.0]
for _k in range(1, 9):
    _I0_ASYMPT.append(_I0_ASYMPT[-1] * (2 * _k - 1) ** 2 / (8.0 * _k))


def _log_i0_asymptotic(x):
    s = np.zeros_like(x)
    for k in range(len(_I0_ASYMPT) - 1, -1, -1):
        s = s / x + _I0_ASYMPT[k]
    return x - 0.5 * np.log(2.0 * np.pi * x) + np.log(s)


def log_bessel_i0(x):
    """log I0(x) for x >= 0, evaluated in the log domain (no overflow).

    Power series below ``_BESSEL_SWITCH``, asymptotic expansion above.
    Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or not np.all(np.isfinite(x)):
        raise ValueError("log_bessel_i0: x must be finite and >= 0")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    small = x < _BESSEL_SWITCH
    if np.any(small):
        out[small] = _log_i0_series(x[small])
    if np.any(~small):
        out[~small] = _log_i0_asymptotic(x[~small])
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for integration over [lo, hi]."""

    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float]

    def __post_init__(self):
        if len(self.nodes) != len(self.weights):
            raise ValueError("QuadratureRule: nodes/weights length mismatch")
        lo, hi = self.interval
        if not (np.all(self.nodes >= lo - 1e-12) and np.all(self.nodes <= hi + 1e-12)):
            raise ValueError("QuadratureRule: nodes outside interval")
        length = hi - lo
        if abs(float(self.weights.sum()) - length) > 1e-12 * max(abs(length), 1.0):
            raise ValueError("QuadratureRule: weights do not integrate the constant")

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def clenshaw_curtis(degree: int, lo: float, hi: float) -> QuadratureRule:
    """Clenshaw-Curtis rule with degree+1 nodes, exact for polynomials of
    degree <= ``degree``.

    Weight construction follows the classic cosine-sum formula
    (Trefethen, Spectral Methods in MATLAB, clencurt.m).
    """
    if degree < 2:
        raise ValueError("clenshaw_curtis: degree must be >= 2")
    n = degree
    theta = np.pi * np.arange(n + 1) / n
    x = np.cos(theta)
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    inner = theta[1:-1]
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2.0 * k * inner) / (4.0 * k * k - 1)
        v -= np.cos(n * inner) / (n * n - 1)
    else:
        w[0] = w[n] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2.0 * k * inner) / (4.0 * k * k - 1)
    w[1:-1] = 2.0 * v / n
    # map from [-1, 1] (descending nodes) to ascending [lo, hi]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo) + half * x)[::-1].copy()
    weights = (half * w)[::-1].copy()
    return QuadratureRule(nodes=nodes, weights=weights, interval=(lo, hi))


@dataclass(frozen=True)
class GaussianSpec:
    """Mean and symmetric PSD covariance of a multivariate normal.

    Rank-deficient covariances are allowed; sampling uses a symmetric
    eigendecomposition with negative eigenvalues clipped to zero, so the
    boundary cases (zero perturbation, dependent projection rows) work.
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError("GaussianSpec: dimension mismatch")
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0.0):
            raise ValueError("GaussianSpec: covariance not symmetric")

    @property
    def dim(self) -> int:
        return self.mean.size

    def factor(self) -> np.ndarray:
        """Matrix F with F F^T equal to the clipped-PSD covariance."""
        eigvals, eigvecs = np.linalg.eigh(0.5 * (self.covariance + self.covariance.T))
        top = float(eigvals[-1]) if eigvals.size else 0.0
        if top > 0.0 and float(eigvals[0]) < -_PSD_REL_TOL * top:
            raise ValueError("GaussianSpec: covariance has significantly negative eigenvalues")
        return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def sample_gaussian(spec: GaussianSpec, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` samples from N(mean, covariance); deterministic in seed."""
    if count < 1:
        raise ValueError("sample_gaussian: count must be >= 1")
    rng = np.random.default_rng(seed)
    normals = rng.standard_normal((count, spec.dim))
    return spec.mean + normals @ spec.factor().T


def sample_gaussian_with(spec: GaussianSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """As sample_gaussian but drawing from a caller-owned generator."""
    if count < 1:
        raise ValueError("sample_gaussian: count must be >= 1")
    normals = rng.standard_normal((count, spec.dim))
    return spec.mean + normals @ spec.factor().T


@dataclass(frozen=True)
class BinomialBoundRequest:
    """Inputs of a one-sided Clopper-Pearson bound."""

    successes: int
    trials: int
    confidence: float

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("BinomialBoundRequest: trials must be >= 1")
        if not 0 <= self.successes <= self.trials:
            raise ValueError("BinomialBoundRequest: successes outside [0, trials]")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("BinomialBoundRequest: confidence outside (0,1)")


def clopper_pearson_lower(req: BinomialBoundRequest) -> float:
    """One-sided lower confidence bound on a binomial proportion.

    Coverage is >= req.confidence; the bound is the Beta(k, n-k+1) quantile
    at level 1 - confidence (0 when k = 0).
    """
    k, n = req.successes, req.trials
    if k == 0:
        return 0.0
    return float(special.betaincinv(k, n - k + 1, 1.0 - req.confidence))


def clopper_pearson_upper(req: BinomialBoundRequest) -> float:
    """One-sided upper confidence bound, mirror of clopper_pearson_lower."""
    k, n = req.successes, req.trials
    if k == n:
        return 1.0
    return float(special.betaincinv(k + 1, n - k, req.confidence))


def _binom_logpmf(k: np.ndarray, n: int, p: float) -> np.ndarray:
    return (
        special.gammaln(n + 1)
        - special.gammaln(k + 1)
        - special.gammaln(n - k + 1)
        + k * np.log(p)
        + (n - k) * np.log1p(-p)
    )


def binomial_log_cdf_all(n: int, p: float) -> np.ndarray:
    """log Pr[X <= k] for k = 0..n under Bin(n, p), by log-gamma summation."""
    if p <= 0.0:
        return np.zeros(n + 1)
    if p >= 1.0:
        out = np.full(n + 1, -np.inf)
        out[n] = 0.0
        return out
    logpmf = _binom_logpmf(np.arange(n + 1, dtype=float), n, p)
    return np.minimum(np.logaddexp.accumulate(logpmf), 0.0)


def binomial_test_p_value(successes: int, trials: int, direction: str, p0: float) -> float:
    """Exact one-sided binomial tail probability under success rate p0.

    direction "le" returns Pr[X <= successes], "ge" returns Pr[X >= successes].
    """
    if not 0 <= successes <= trials:
        raise ValueError("binomial_test_p_value: successes outside [0, trials]")
    if not 0.0 <= p0 <= 1.0:
        raise ValueError("binomial_test_p_value: p0 outside [0,1]")
    if direction not in ("le", "ge"):
        raise ValueError("binomial_test_p_value: direction must be 'le' or 'ge'")
    k, n = successes, trials
    if direction == "le":
        if k == n:
            return 1.0
        if p0 == 1.0:
            return 0.0
        if p0 == 0.0:
            return 1.0
        return float(np.exp(binomial_log_cdf_all(n, p0)[k]))
    # ge: reflect to a lower tail with swapped roles
    if k == 0:
        return 1.0
    if p0 == 0.0:
        return 0.0
    if p0 == 1.0:
        return 1.0
    return float(np.exp(binomial_log_cdf_all(n, 1.0 - p0)[n - k]))


def log_sum_exp(values: np.ndarray, axis=None):
    """Thin wrapper so callers do not import scipy directly."""
    return special.logsumexp(values, axis=axis)
