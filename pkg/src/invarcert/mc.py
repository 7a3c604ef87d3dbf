"""Monte-Carlo certification: the lower-bound, upper-bound and inverse
procedures, plus smoothed prediction with abstention.

Each procedure combines a binomial confidence bound on the clean prediction
probability, a distribution-free order-statistic bound on the likelihood-ratio
threshold, and a final binomial bound, at significances (alpha, alpha/2,
alpha/3) so all three hold simultaneously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .geometry import GroupSpec, PointCloud
from .numerics import (
    BinomialBoundRequest,
    NumericalFailure,
    binomial_log_cdf_all,
    clamp_probability,
    clopper_pearson_lower,
    clopper_pearson_upper,
    sample_gaussian_with,
    std_normal_quantile,
)
from .orbit import CertificateOutcome

ABSTAIN = -1


@dataclass(frozen=True)
class McConfig:
    """Sample budgets for the three confidence bounds and the overall
    significance level."""

    n1: int = 10000
    n2: int = 10000
    n3: int = 10000
    alpha: float = 0.001

    def __post_init__(self):
        if min(self.n1, self.n2, self.n3) < 100:
            raise ValueError("McConfig: sample counts must be >= 100")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("McConfig: alpha must lie in (0, 0.5)")

    @property
    def confidences(self) -> tuple[float, float, float]:
        return (1.0 - self.alpha, 1.0 - self.alpha / 2.0, 1.0 - self.alpha / 3.0)


class BaseClassifier(Protocol):
    """Deterministic labeler of point clouds, batched over the leading axis."""

    invariance: GroupSpec | None

    def predict_batch(self, batch: np.ndarray) -> np.ndarray: ...


def _label_counts(g: BaseClassifier, x: PointCloud, sigma: float, n: int,
                  rng: np.random.Generator) -> dict[int, int]:
    counts: dict[int, int] = {}
    chunk = max(1, int(2_000_000 // x.data.size))
    remaining = n
    while remaining > 0:
        m = min(chunk, remaining)
        remaining -= m
        noise = rng.standard_normal((m,) + x.data.shape) * sigma
        labels = np.asarray(g.predict_batch(x.data + noise))
        values, freq = np.unique(labels, return_counts=True)
        for v, f in zip(values, freq):
            counts[int(v)] = counts.get(int(v), 0) + int(f)
    return counts


def smooth_predict(
    g: BaseClassifier,
    x: PointCloud,
    sigma: float,
    n: int,
    alpha: float,
    seed: int,
) -> tuple[int, float]:
    """Majority vote under Gaussian input noise with a Clopper-Pearson lower
    bound on the majority probability; abstains when the bound is <= 1/2."""
    if sigma <= 0:
        raise ValueError("smooth_predict: sigma must be > 0")
    if n < 1:
        raise ValueError("smooth_predict: n must be >= 1")
    rng = np.random.default_rng(seed)
    counts = _label_counts(g, x, sigma, n, rng)
    label = max(sorted(counts), key=counts.get)
    p_lower = clopper_pearson_lower(
        BinomialBoundRequest(counts[label], n, 1.0 - alpha)
    )
    if p_lower <= 0.5:
        return ABSTAIN, p_lower
    return label, p_lower


def lower_quantile_index(trials: int, level: float, significance: float) -> int | None:
    """Largest 1-based index n with Pr[Bin(trials, level) <= n] < significance.

    The n-th ascending order statistic of an i.i.d. sample is then a lower
    confidence bound on the level-quantile.  None when no index qualifies.
    """
    logcdf = binomial_log_cdf_all(trials, level)
    cutoff = math.log(significance)
    idx = int(np.searchsorted(logcdf, cutoff, side="left")) - 1
    if idx < 1:
        return None
    return min(idx, trials)


def upper_quantile_index(trials: int, level: float, significance: float) -> int | None:
    """Smallest 1-based index n with Pr[Bin(trials, level) >= n] < significance.

    The n-th ascending order statistic is then an upper confidence bound on
    the level-quantile.
    """
    # Pr[X >= n] = Pr[n' <= trials - n] for n' ~ Bin(trials, 1 - level)
    logtail = binomial_log_cdf_all(trials, 1.0 - level)[::-1]
    cutoff = math.log(significance)
    idx = int(np.searchsorted(-logtail, -cutoff, side="right"))
    if idx > trials:
        return None
    return max(idx, 1)


def _statistic_values(statistic, spec, count, rng, problem) -> np.ndarray:
    samples = sample_gaussian_with(spec, count, rng)
    values = np.asarray(statistic(samples), dtype=float)
    bad = np.isnan(values)
    if np.any(bad):
        raise NumericalFailure(
            "NaN likelihood-ratio statistic: "
            f"{int(bad.sum())}/{count} samples, "
            f"|mean_clean|={np.linalg.norm(problem.mean_clean):.6g}, "
            f"|mean_perturbed|={np.linalg.norm(problem.mean_perturbed):.6g}, "
            f"|cov|={np.linalg.norm(problem.covariance):.6g}"
        )
    return values


def _threshold_with_share(sorted_values: np.ndarray, n_star: int) -> tuple[float, float]:
    """Threshold kappa = n_star-th ascending order statistic, plus the
    fraction of its tie group lying at or below position n_star.

    For continuous statistics ties never occur and the share is irrelevant;
    when the law has an atom (e.g. a rank-deficient problem makes the
    statistic constant), counting the full tie group would overshoot the
    Neyman-Pearson value, so tied samples are later counted at this share,
    mimicking the randomized tie-break of the optimal classifier.
    """
    kappa = float(sorted_values[n_star - 1])
    lo = int(np.searchsorted(sorted_values, kappa, side="left"))
    hi = int(np.searchsorted(sorted_values, kappa, side="right"))
    share = (n_star - lo) / (hi - lo)
    return kappa, share


def _count_below(values: np.ndarray, kappa: float, share: float) -> int:
    lt = int(np.count_nonzero(values < kappa))
    eq = int(np.count_nonzero(values == kappa))
    return lt + int(math.floor(share * eq))


def _count_above(values: np.ndarray, kappa: float, share: float) -> int:
    gt = int(np.count_nonzero(values > kappa))
    eq = int(np.count_nonzero(values == kappa))
    return gt + int(math.floor((1.0 - share) * eq))


def _resolve_p_lower(problem, mc, rng, p_lower, classifier, x):
    if p_lower is not None:
        return p_lower, True
    if classifier is None or x is None:
        raise ValueError("prob_certify_reduced: need p_lower or (classifier, x)")
    counts = _label_counts(classifier, x, problem.sigma, mc.n1, rng)
    label = max(sorted(counts), key=counts.get)
    bound = clopper_pearson_lower(
        BinomialBoundRequest(counts[label], mc.n1, 1.0 - mc.alpha)
    )
    return bound, False


def prob_certify_reduced(
    problem,
    statistic,
    mc: McConfig,
    seed: int,
    *,
    p_lower: float | None = None,
    classifier: BaseClassifier | None = None,
    x: PointCloud | None = None,
) -> CertificateOutcome:
    """Lower-bound the worst-case prediction probability of the reduced
    Gaussian pair.

    Threshold selection takes the largest ascending order statistic of the
    clean-distribution sample whose lower binomial tail at rate p_lower stays
    below alpha/2; the final count is bounded at confidence 1 - alpha/3.  A
    caller-supplied p_lower skips the first bound but keeps the significance
    ladder, so the reported confidence stays conservative.
    """
    ss = np.random.SeedSequence(seed)
    rng1, rng2, rng3 = (np.random.default_rng(s) for s in ss.spawn(3))
    notes: list[str] = []
    p_raw, supplied = _resolve_p_lower(problem, mc, rng1, p_lower, classifier, x)
    if supplied:
        notes.append("p-lower-supplied")
    p_eff, clamped = clamp_probability(p_raw)
    if clamped:
        notes.append("p-lower-clamped")
    radius = problem.sigma * std_normal_quantile(p_eff)
    n_star = lower_quantile_index(mc.n2, p_eff, mc.alpha / 2.0)
    if n_star is None:
        return CertificateOutcome(
            certified=False,
            bound_value=0.0,
            radius=radius,
            p_lower=p_eff,
            confidence=1.0 - mc.alpha,
            method="tight-reduced",
            kappa_log=None,
            confidences=mc.confidences,
            notes=tuple(notes) + ("threshold-undetermined",),
        )
    clean_values = np.sort(
        _statistic_values(statistic, problem.clean_spec, mc.n2, rng2, problem),
        kind="stable",
    )
    kappa, share = _threshold_with_share(clean_values, n_star)
    perturbed_values = _statistic_values(
        statistic, problem.perturbed_spec, mc.n3, rng3, problem
    )
    count = _count_below(perturbed_values, kappa, share)
    bound = clopper_pearson_lower(
        BinomialBoundRequest(count, mc.n3, 1.0 - mc.alpha / 3.0)
    )
    return CertificateOutcome(
        certified=bound > 0.5,
        bound_value=bound,
        radius=radius,
        p_lower=p_eff,
        confidence=1.0 - mc.alpha,
        method="tight-reduced",
        kappa_log=kappa,
        confidences=mc.confidences,
        notes=tuple(notes),
    )


def prob_certify_upper_reduced(
    problem,
    statistic,
    mc: McConfig,
    seed: int,
    *,
    p_upper: float,
) -> float:
    """Upper-bound the perturbed probability of a class whose clean
    probability is at most p_upper.

    Mirrors the lower-bound procedure with the statistic counted in the
    "greater or equal" direction.  The threshold is still bounded from below
    (at quantile level 1 - p_upper), which inflates the tail count and keeps
    the certificate sound; returns the vacuous bound 1.0 when no order
    statistic qualifies.
    """
    ss = np.random.SeedSequence(seed)
    _, rng2, rng3 = (np.random.default_rng(s) for s in ss.spawn(3))
    p_eff, _ = clamp_probability(p_upper)
    n_star = lower_quantile_index(mc.n2, 1.0 - p_eff, mc.alpha / 2.0)
    if n_star is None:
        return 1.0
    clean_values = np.sort(
        _statistic_values(statistic, problem.clean_spec, mc.n2, rng2, problem),
        kind="stable",
    )
    kappa, share = _threshold_with_share(clean_values, n_star)
    perturbed_values = _statistic_values(
        statistic, problem.perturbed_spec, mc.n3, rng3, problem
    )
    count = _count_above(perturbed_values, kappa, share)
    return clopper_pearson_upper(
        BinomialBoundRequest(count, mc.n3, 1.0 - mc.alpha / 3.0)
    )


def inverse_certify_reduced(problem, statistic, mc: McConfig, seed: int) -> float:
    """Upper bound on the smallest certifiable clean prediction probability.

    The threshold is an upper confidence bound on the median of the statistic
    under the perturbed distribution (significance alpha); the clean-side
    probability of falling below it is then upper-bounded at confidence
    1 - alpha/2.  Returns the vacuous 1.0 when the median index is undefined.
    """
    ss = np.random.SeedSequence(seed)
    rng1, rng2 = (np.random.default_rng(s) for s in ss.spawn(2))
    n_star = upper_quantile_index(mc.n2, 0.5, mc.alpha)
    if n_star is None:
        return 1.0
    perturbed_values = np.sort(
        _statistic_values(statistic, problem.perturbed_spec, mc.n2, rng1, problem),
        kind="stable",
    )
    kappa, share = _threshold_with_share(perturbed_values, n_star)
    clean_values = _statistic_values(statistic, problem.clean_spec, mc.n3, rng2, problem)
    count = _count_below(clean_values, kappa, share)
    p_min = clopper_pearson_upper(
        BinomialBoundRequest(count, mc.n3, 1.0 - mc.alpha / 2.0)
    )
    # any certificate needs p > 1/2, so 1/2 is a free lower bound on p_min
    return min(max(p_min, 0.5), 1.0)
