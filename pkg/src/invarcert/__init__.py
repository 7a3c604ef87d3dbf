"""Robustness certificates for randomly smoothed, invariant point-cloud
classifiers: orbit-based certificates for Euclidean isometries and
permutations, and tight Monte-Carlo certificates for rotation groups."""

__version__ = "0.1.0"

from .geometry import (
    EpsilonParams,
    GroupKind,
    GroupSpec,
    Perturbation,
    PointCloud,
    adversarial_rotation_locus,
    center,
    epsilon_params,
    frobenius_inner,
    load_points_csv,
    rot2,
    rot3_zyx,
    save_points_csv,
)
from .mc import (
    ABSTAIN,
    McConfig,
    inverse_certify_reduced,
    prob_certify_reduced,
    prob_certify_upper_reduced,
    smooth_predict,
)
from .numerics import (
    BinomialBoundRequest,
    GaussianSpec,
    NumericalFailure,
    QuadratureRule,
    binomial_test_p_value,
    clenshaw_curtis,
    clopper_pearson_lower,
    clopper_pearson_upper,
    log_bessel_i0,
    sample_gaussian,
    std_normal_cdf,
    std_normal_quantile,
)
from .orbit import (
    CertificateOutcome,
    OrbitProjection,
    blackbox_radius,
    certify_orbit,
    project,
    project_orthogonal,
    project_permutation,
    project_registration_upper,
    project_rotation,
    project_roto_translation,
    project_translation,
)
from .tight import (
    LikelihoodStatistic,
    PminGrid,
    RotationCertProblem,
    build_so2_problem,
    build_so3_problem,
    certify_multiclass,
    certify_rotation_tight,
    inverse_certificate,
    multiclass_radius,
    pmin_grid,
    rho_so2,
    rho_so3,
    so2_problem_from_params,
    so3_log_beta_hat,
    tight_translation,
    upper_bound_rotation_tight,
    zeta,
)

__all__ = [name for name in dir() if not name.startswith("_")]
