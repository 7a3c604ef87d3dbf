"""Tight gray-box certificates.

Translation admits a closed form.  Rotation and roto-translation reduce to a
pair of low-dimensional Gaussians (4-dim in 2D, 18-dim in 3D) compared through
a likelihood-ratio statistic; the Monte-Carlo engine turns those into
probabilistic bounds.  Roto-translation is rotation after centering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable

import numpy as np

from . import mc as mc_engine
from .geometry import (
    EpsilonParams,
    GroupKind,
    GroupSpec,
    PointCloud,
    adversarial_rotation_locus,
    center,
    epsilon_params,
    rotate_quarter_turn_back,
)
from .mc import McConfig
from .numerics import (
    GaussianSpec,
    QuadratureRule,
    clamp_probability,
    clenshaw_curtis,
    log_bessel_i0,
    log_sum_exp,
    std_normal_cdf,
    std_normal_quantile,
)
from .orbit import CertificateOutcome, blackbox_radius, project, project_translation


@dataclass(frozen=True)
class RotationCertProblem:
    """Reduced Gaussian pair (perturbed vs clean) behind a tight certificate.

    ``group`` is None for the one-dimensional black-box and translation
    reductions used by the inverse certificates.
    """

    group: GroupSpec | None
    mean_perturbed: np.ndarray
    mean_clean: np.ndarray
    covariance: np.ndarray
    sigma: float
    quadrature_degree: int | None = None

    @property
    def perturbed_spec(self) -> GaussianSpec:
        return GaussianSpec(self.mean_perturbed, self.covariance)

    @property
    def clean_spec(self) -> GaussianSpec:
        return GaussianSpec(self.mean_clean, self.covariance)


@dataclass(frozen=True)
class LikelihoodStatistic:
    """Deterministic map from sampled vectors to log likelihood-ratio values."""

    dim: int
    evaluator: Callable[[np.ndarray], np.ndarray]

    def __call__(self, samples: np.ndarray) -> np.ndarray:
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[1] != self.dim:
            raise ValueError("LikelihoodStatistic: sample dimension mismatch")
        return self.evaluator(samples)


def tight_translation(
    x: PointCloud, x_prime: PointCloud, p_lower: float, sigma: float
) -> CertificateOutcome:
    """Closed-form optimal certificate for translation-invariant classifiers:
    Phi(Phi^-1(p) - ||Delta - 1 mean(Delta)|| / sigma)."""
    notes = []
    p_eff, clamped = clamp_probability(p_lower)
    if clamped:
        notes.append("p-lower-clamped")
    residual = project_translation(x, x_prime).residual
    bound = std_normal_cdf(std_normal_quantile(p_eff) - residual / sigma)
    return CertificateOutcome(
        certified=bound > 0.5,
        bound_value=bound,
        radius=blackbox_radius(p_eff, sigma),
        p_lower=p_eff,
        confidence=1.0,
        method="tight-translation",
        residual=residual,
        notes=tuple(notes),
    )


def so2_problem_from_params(
    norm_x: float, norm_delta: float, eps1: float, eps2: float, sigma: float
) -> RotationCertProblem:
    """Reduced 4-dim problem from the scalar parameters (|X|, |Delta|, eps1, eps2).

    All entries depend only on ratios to sigma^2, so scaling (X, Delta, sigma)
    by a common factor leaves the problem unchanged.
    """
    if sigma <= 0:
        raise ValueError("so2_problem_from_params: sigma must be > 0")
    s2 = sigma * sigma
    nx2 = norm_x * norm_x
    nd2 = norm_delta * norm_delta
    a = (2.0 * eps1 + nx2 + nd2) / s2  # |X'|^2 / sigma^2
    b = (eps1 + nx2) / s2              # <X', X> / sigma^2
    c = eps2 / s2
    d = nx2 / s2
    mean_perturbed = np.array([a, 0.0, b, c])
    mean_clean = np.array([b, -c, d, 0.0])
    covariance = np.array(
        [
            [a, 0.0, b, c],
            [0.0, a, -c, b],
            [b, -c, d, 0.0],
            [c, b, 0.0, d],
        ]
    )
    return RotationCertProblem(
        group=GroupSpec(GroupKind.ROTATION, 2),
        mean_perturbed=mean_perturbed,
        mean_clean=mean_clean,
        covariance=covariance,
        sigma=sigma,
    )


def build_so2_problem(x: PointCloud, x_prime: PointCloud, sigma: float) -> RotationCertProblem:
    if x.dim != 2 or x_prime.dim != 2:
        raise ValueError("build_so2_problem: requires D = 2")
    eps = epsilon_params(x, x_prime.data - x.data)
    return so2_problem_from_params(eps.norm_x, eps.norm_delta, eps.eps1, eps.eps2, sigma)


def so2_projection_matrix(x: PointCloud, x_prime: PointCloud, sigma: float) -> np.ndarray:
    """The 4 x 2N projection whose Gram matrix reconstructs the covariance."""
    rows = [
        x_prime.data,
        rotate_quarter_turn_back(x_prime.data),
        x.data,
        rotate_quarter_turn_back(x.data),
    ]
    return np.stack([m.T.ravel() for m in rows]) / (sigma * sigma)


def rho_so2() -> LikelihoodStatistic:
    """log I0(|q_{1:2}|) - log I0(|q_{3:4}|), the 2D log likelihood ratio."""

    def evaluator(q: np.ndarray) -> np.ndarray:
        top = np.hypot(q[:, 0], q[:, 1])
        bot = np.hypot(q[:, 2], q[:, 3])
        return log_bessel_i0(top) - log_bessel_i0(bot)

    return LikelihoodStatistic(dim=4, evaluator=evaluator)


class So3BetaHat:
    """Quadrature evaluator of the reduced rotation-averaging integral.

    For a 3 x 3 cross matrix M (the inner products between input columns and
    sample columns), the integral over the z-angle is a Bessel function and
    the remaining double integral over [-pi/2, pi/2] x [0, 2 pi] with weight
    cos(w2) is evaluated by a tensor-product Clenshaw-Curtis rule, entirely in
    the log domain.
    """

    def __init__(self, degree: int):
        if degree < 4:
            raise ValueError("So3BetaHat: degree must be >= 4")
        self.degree = degree
        rule2: QuadratureRule = clenshaw_curtis(degree, -0.5 * math.pi, 0.5 * math.pi)
        rule3: QuadratureRule = clenshaw_curtis(degree, 0.0, 2.0 * math.pi)
        w2 = rule2.nodes[:, None]
        w3 = rule3.nodes[None, :]
        self._c2 = np.cos(w2) * np.ones_like(w3)
        self._s2 = np.sin(w2) * np.ones_like(w3)
        self._c3 = np.ones_like(w2) * np.cos(w3)
        self._s3 = np.ones_like(w2) * np.sin(w3)
        with np.errstate(divide="ignore"):
            logw = (
                np.log(rule2.weights[:, None])
                + np.log(rule3.weights[None, :])
                + np.log(np.clip(np.cos(w2), 0.0, None)) * np.ones_like(w3)
            )
        self._c2 = self._c2.ravel()
        self._s2 = self._s2.ravel()
        self._c3 = self._c3.ravel()
        self._s3 = self._s3.ravel()
        self._logw = logw.ravel()

    def log_beta(self, m: np.ndarray) -> np.ndarray:
        """log of the double integral for a batch of 3 x 3 matrices (n, 3, 3)."""
        m = np.asarray(m, dtype=float)
        squeeze = m.ndim == 2
        if squeeze:
            m = m[None]
        n_nodes = self._logw.size
        chunk = max(1, 4_000_000 // n_nodes)
        out = np.empty(m.shape[0])
        for start in range(0, m.shape[0], chunk):
            out[start : start + chunk] = self._log_beta_chunk(m[start : start + chunk])
        return out[0] if squeeze else out

    def _log_beta_chunk(self, m: np.ndarray) -> np.ndarray:
        c2, s2, c3, s3 = self._c2, self._s2, self._c3, self._s3
        def e(i, j):
            return m[:, i, j][:, None]
        chi1 = c2 * e(0, 0) + s2 * s3 * e(0, 1) + c3 * s2 * e(0, 2) + c3 * e(1, 1) - s3 * e(1, 2)
        chi2 = c2 * e(1, 0) + s2 * s3 * e(1, 1) + c3 * s2 * e(1, 2) - c3 * e(0, 1) + s3 * e(0, 2)
        chi3 = -s2 * e(2, 0) + c2 * s3 * e(2, 1) + c2 * c3 * e(2, 2)
        vals = self._logw[None, :] + chi3 + log_bessel_i0(np.hypot(chi1, chi2))
        return log_sum_exp(vals, axis=1)


_BETA_HAT_CACHE: dict[int, So3BetaHat] = {}


def _beta_hat(degree: int) -> So3BetaHat:
    if degree not in _BETA_HAT_CACHE:
        _BETA_HAT_CACHE[degree] = So3BetaHat(degree)
    return _BETA_HAT_CACHE[degree]


def so3_log_beta_hat(m: np.ndarray, sigma: float, degree: int) -> float:
    """log of the reduced rotation integral for cross matrix m at noise sigma.

    The value is defined up to an additive constant shared by the numerator
    and denominator of the likelihood ratio (the z-angle integral contributes
    a common 2 pi).
    """
    if sigma <= 0:
        raise ValueError("so3_log_beta_hat: sigma must be > 0")
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError("so3_log_beta_hat: m must be 3 x 3")
    return float(_beta_hat(degree).log_beta(m / (sigma * sigma)))


def so3_refinement_drift(m: np.ndarray, sigma: float, degree: int) -> float:
    """Relative change of the rotation integral when doubling the degree.

    The integrand sharpens with the magnitude of m / sigma^2, so a fixed
    degree is only accurate up to some argument scale; a drift well above
    1e-6 signals that the degree is too low for the data at hand.
    """
    a = so3_log_beta_hat(m, sigma, degree)
    b = so3_log_beta_hat(m, sigma, 2 * degree)
    return abs(a - b) / max(abs(b), 1.0)


def zeta(q: np.ndarray) -> np.ndarray:
    """Zero-pad 8-vectors into 3 x 3 matrices with a structural zero at (2, 1).

    This is the published devectorization of the 16-dim reduction.  The
    certificate does not use it: the rotation-averaging integrand provably
    depends on the padded entry (the sin-angle form reads the (2,1) cross
    term), so dropping it changes the law of the statistic and breaks the
    rotation invariance of the certificate.  The projection used here keeps
    all nine cross terms per half; see ``devec9``.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if q.shape[1] != 8:
        raise ValueError("zeta: expects 8 components")
    m = np.zeros((q.shape[0], 3, 3))
    m[:, 0, 0] = q[:, 0]
    m[:, 2, 0] = q[:, 1]
    m[:, 0, 1] = q[:, 2]
    m[:, 1, 1] = q[:, 3]
    m[:, 2, 1] = q[:, 4]
    m[:, 0, 2] = q[:, 5]
    m[:, 1, 2] = q[:, 6]
    m[:, 2, 2] = q[:, 7]
    return m


def devec9(q: np.ndarray) -> np.ndarray:
    """Column-major devectorization of 9-vectors into 3 x 3 matrices."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if q.shape[1] != 9:
        raise ValueError("devec9: expects 9 components")
    return q.reshape(-1, 3, 3).transpose(0, 2, 1)


def rho_so3(degree: int) -> LikelihoodStatistic:
    """log beta-hat ratio on the two 3 x 3 cross matrices of an 18-dim sample.

    Samples already carry the 1/sigma^2 scaling through the projection, so
    the integrand is evaluated at unit sigma.
    """
    beta = _beta_hat(degree)

    def evaluator(q: np.ndarray) -> np.ndarray:
        return beta.log_beta(devec9(q[:, :9])) - beta.log_beta(devec9(q[:, 9:]))

    return LikelihoodStatistic(dim=18, evaluator=evaluator)


def so3_projection_matrix(x: PointCloud, x_prime: PointCloud, sigma: float) -> np.ndarray:
    """18 x 3N projection stacking all cross terms of (X'^T Z, X^T Z).

    Row 9*half + 3*j + i picks (cloud^T Z)_{i+1, j+1} / sigma^2, i.e. each
    half is the column-major vectorization consumed by ``devec9``.
    """
    n = x.n_points
    w = np.zeros((18, 3 * n))
    for half, cloud in enumerate((x_prime, x)):
        base = 9 * half
        cols = cloud.data
        for j in range(3):       # column block of vec(Z)
            for i in range(3):   # column of the cloud
                w[base + 3 * j + i, j * n : (j + 1) * n] = cols[:, i]
    return w / (sigma * sigma)


def build_so3_problem(
    x: PointCloud, x_prime: PointCloud, sigma: float, degree: int = 20
) -> RotationCertProblem:
    if x.dim != 3 or x_prime.dim != 3:
        raise ValueError("build_so3_problem: requires D = 3")
    if x.data.shape != x_prime.data.shape:
        raise ValueError("build_so3_problem: shape mismatch")
    w = so3_projection_matrix(x, x_prime, sigma)
    vec_clean = x.data.T.ravel()
    vec_pert = x_prime.data.T.ravel()
    return RotationCertProblem(
        group=GroupSpec(GroupKind.ROTATION, 3),
        mean_perturbed=w @ vec_pert,
        mean_clean=w @ vec_clean,
        covariance=(sigma * sigma) * (w @ w.T),
        sigma=sigma,
        quadrature_degree=degree,
    )


def _rotation_problem(
    group: GroupSpec,
    x: PointCloud,
    x_prime: PointCloud,
    sigma: float,
    degree: int,
) -> tuple[RotationCertProblem, LikelihoodStatistic]:
    if group.kind not in (GroupKind.ROTATION, GroupKind.ROTO_TRANSLATION):
        raise ValueError(f"tight rotation certificate: unsupported group {group.kind}")
    if x.dim != group.dim or x_prime.dim != group.dim:
        raise ValueError("tight rotation certificate: dimension mismatch")
    if group.kind is GroupKind.ROTO_TRANSLATION:
        x, x_prime = center(x), center(x_prime)
    if group.dim == 2:
        return build_so2_problem(x, x_prime, sigma), rho_so2()
    return build_so3_problem(x, x_prime, sigma, degree), rho_so3(degree)


def certify_rotation_tight(
    group: GroupSpec,
    x: PointCloud,
    x_prime: PointCloud,
    p_lower: float,
    sigma: float,
    mc: McConfig,
    seed: int,
    quad_degree: int = 20,
) -> CertificateOutcome:
    """Probabilistic lower bound on the worst-case prediction probability of a
    rotation (or roto-translation) invariant classifier."""
    problem, statistic = _rotation_problem(group, x, x_prime, sigma, quad_degree)
    outcome = mc_engine.prob_certify_reduced(problem, statistic, mc, seed, p_lower=p_lower)
    tag = f"tight-{group.kind.value}{group.dim}"
    return replace(outcome, method=tag)


def upper_bound_rotation_tight(
    group: GroupSpec,
    x: PointCloud,
    x_prime: PointCloud,
    p_upper: float,
    sigma: float,
    mc: McConfig,
    seed: int,
    quad_degree: int = 20,
) -> float:
    """Probabilistic upper bound on the perturbed probability of a competing
    class with clean probability at most p_upper."""
    problem, statistic = _rotation_problem(group, x, x_prime, sigma, quad_degree)
    return mc_engine.prob_certify_upper_reduced(problem, statistic, mc, seed, p_upper=p_upper)


def blackbox_reduced_problem(norm_delta: float, sigma: float) -> RotationCertProblem:
    """One-dimensional reduction of the black-box certificate: a unit-variance
    normal shifted by ||Delta|| / sigma."""
    if sigma <= 0:
        raise ValueError("blackbox_reduced_problem: sigma must be > 0")
    return RotationCertProblem(
        group=None,
        mean_perturbed=np.array([norm_delta / sigma]),
        mean_clean=np.array([0.0]),
        covariance=np.array([[1.0]]),
        sigma=sigma,
    )


def linear_statistic() -> LikelihoodStatistic:
    """Identity statistic for the one-dimensional reductions."""
    return LikelihoodStatistic(dim=1, evaluator=lambda q: q[:, 0])


def inverse_certificate(
    group: GroupSpec | None,
    x: PointCloud,
    x_prime: PointCloud,
    sigma: float,
    mc: McConfig,
    seed: int,
    quad_degree: int = 20,
) -> float:
    """Smallest clean prediction probability for which the perturbation can
    still be certified; closed form where available, otherwise Monte Carlo
    (upper bound holding with confidence 1 - alpha)."""
    if group is None:
        norm_delta = float(np.linalg.norm(x_prime.data - x.data))
        return std_normal_cdf(norm_delta / sigma)
    if group.kind is GroupKind.TRANSLATION:
        return std_normal_cdf(project_translation(x, x_prime).residual / sigma)
    if group.kind in (GroupKind.ROTATION, GroupKind.ROTO_TRANSLATION):
        problem, statistic = _rotation_problem(group, x, x_prime, sigma, quad_degree)
        return mc_engine.inverse_certify_reduced(problem, statistic, mc, seed)
    # remaining orbit groups: certified iff residual < sigma Phi^-1(p)
    return std_normal_cdf(project(group, x, x_prime).residual / sigma)


def inverse_certificate_from_params(
    norm_x: float,
    norm_delta: float,
    eps1: float,
    eps2: float,
    sigma: float,
    mc: McConfig,
    seed: int,
) -> float:
    """Inverse 2D rotation certificate on the scalar parameter tuple."""
    problem = so2_problem_from_params(norm_x, norm_delta, eps1, eps2, sigma)
    return mc_engine.inverse_certify_reduced(problem, rho_so2(), mc, seed)


def certify_multiclass(
    group: GroupSpec | None,
    x: PointCloud,
    x_prime: PointCloud,
    pa_lower: float,
    pb_upper: float,
    sigma: float,
    mc: McConfig,
    seed: int,
    quad_degree: int = 20,
) -> CertificateOutcome:
    """Certified iff the lower bound for the top class beats the upper bound
    for the runner-up.  Closed forms collapse to the radius comparison
    (sigma/2) (Phi^-1(pA) - Phi^-1(pB))."""
    notes = []
    pa, clamped_a = clamp_probability(pa_lower)
    pb, clamped_b = clamp_probability(pb_upper)
    if clamped_a or clamped_b:
        notes.append("p-clamped")
    if pa <= pb:
        return CertificateOutcome(
            certified=False,
            bound_value=0.0,
            radius=0.0,
            p_lower=pa,
            confidence=1.0,
            method="multiclass",
            notes=tuple(notes) + ("pa-not-above-pb",),
        )
    radius = multiclass_radius(pa, pb, sigma)
    if group is None or group.kind is GroupKind.TRANSLATION:
        if group is None:
            residual = float(np.linalg.norm(x_prime.data - x.data))
            method = "multiclass-blackbox"
        else:
            residual = project_translation(x, x_prime).residual
            method = "multiclass-T"
        lower = std_normal_cdf(std_normal_quantile(pa) - residual / sigma)
        upper = std_normal_cdf(std_normal_quantile(pb) + residual / sigma)
        return CertificateOutcome(
            certified=residual < radius,
            bound_value=lower,
            radius=radius,
            p_lower=pa,
            confidence=1.0,
            method=method,
            residual=residual,
            notes=tuple(notes) + (f"competitor-upper={upper!r}",),
        )
    if group.kind in (GroupKind.ROTATION, GroupKind.ROTO_TRANSLATION):
        ss = np.random.SeedSequence(seed)
        seed_lower, seed_upper = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        problem, statistic = _rotation_problem(group, x, x_prime, sigma, quad_degree)
        outcome = mc_engine.prob_certify_reduced(
            problem, statistic, mc, seed_lower, p_lower=pa
        )
        upper = mc_engine.prob_certify_upper_reduced(
            problem, statistic, mc, seed_upper, p_upper=pb
        )
        certified = outcome.bound_value > upper
        return replace(
            outcome,
            certified=certified,
            method=f"multiclass-tight-{group.kind.value}{group.dim}",
            notes=outcome.notes + tuple(notes) + (f"competitor-upper={upper!r}",),
        )
    # orbit groups: Theorem-2 post-processing of the multiclass ball
    proj = project(group, x, x_prime)
    if not proj.exact:
        notes.append("approximate-registration-upper-bound")
    return CertificateOutcome(
        certified=proj.residual < radius,
        bound_value=std_normal_cdf(std_normal_quantile(pa) - proj.residual / sigma),
        radius=radius,
        p_lower=pa,
        confidence=1.0,
        method=f"multiclass-orbit-{group.kind.value}",
        residual=proj.residual,
        notes=tuple(notes),
    )


def multiclass_radius(pa_lower: float, pb_upper: float, sigma: float) -> float:
    """Black-box multi-class radius (sigma/2)(Phi^-1(pA) - Phi^-1(pB))."""
    return 0.5 * sigma * (std_normal_quantile(pa_lower) - std_normal_quantile(pb_upper))


@dataclass(frozen=True)
class PminGrid:
    """p_min rasterized over normalized orientation parameters in [0,1]^2."""

    eps1_nodes: np.ndarray
    eps2_nodes: np.ndarray
    values: np.ndarray          # values[i, j] for (eps2_nodes[i], eps1_nodes[j])
    infeasible: np.ndarray      # bool mask, same shape
    loci: tuple[EpsilonParams, ...]
    norm_x: float
    norm_delta: float
    sigma: float


def _cell_fraction(index: int, resolution: int) -> tuple[int, int]:
    frac = Fraction(index, resolution - 1) if index else Fraction(0, 1)
    return frac.numerator, frac.denominator


def pmin_grid(
    group: GroupSpec | None,
    norm_x: float,
    norm_delta: float,
    sigma: float,
    grid_resolution: int,
    mc: McConfig,
    seed: int,
) -> PminGrid:
    """p_min over the (eps1~, eps2~) square; cells outside the unit disc are
    infeasible.  Cell seeds derive from the reduced fraction of each node so
    coarse grids subsample fine ones exactly.
    """
    if norm_x < 0 or norm_delta < 0:
        raise ValueError("pmin_grid: norms must be >= 0")
    if grid_resolution < 2:
        raise ValueError("pmin_grid: resolution must be >= 2")
    if group is not None and not (
        group.kind is GroupKind.ROTATION and group.dim == 2
    ):
        raise ValueError("pmin_grid: group must be blackbox (None) or SO(2)")
    res = grid_resolution
    fractions = [_cell_fraction(k, res) for k in range(res)]
    nodes = np.array([p / q for p, q in fractions])
    values = np.full((res, res), np.nan)
    infeasible = np.zeros((res, res), dtype=bool)
    blackbox_value = std_normal_cdf(norm_delta / sigma)
    scale = norm_x * norm_delta
    statistic = rho_so2()
    for i, (p2, q2) in enumerate(fractions):
        for j, (p1, q1) in enumerate(fractions):
            e1, e2 = nodes[j], nodes[i]
            if math.hypot(e1, e2) > 1.0 + 1e-12:
                infeasible[i, j] = True
                continue
            if group is None:
                values[i, j] = blackbox_value
                continue
            cell_seed = np.random.SeedSequence((seed, p1, q1, p2, q2))
            problem = so2_problem_from_params(
                norm_x, norm_delta, e1 * scale, e2 * scale, sigma
            )
            values[i, j] = mc_engine.inverse_certify_reduced(
                problem, statistic, mc, int(cell_seed.generate_state(1)[0])
            )
    loci = tuple(adversarial_rotation_locus(norm_x, norm_delta))
    return PminGrid(
        eps1_nodes=nodes,
        eps2_nodes=nodes.copy(),
        values=values,
        infeasible=infeasible,
        loci=loci,
        norm_x=norm_x,
        norm_delta=norm_delta,
        sigma=sigma,
    )
