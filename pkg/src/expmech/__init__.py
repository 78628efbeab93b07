"""Differentially private convex optimization by Gibbs sampling.

Pick an inverse temperature k and a regularizer strength mu, sample once from
exp(-k (F_D(x) + mu ||x||^2 / 2)) over the constraint body, and the released
point is (eps, delta)-DP with an *exact* Gaussian-curve certificate while
nearly minimizing F_D.  The package provides the accounting (`privacy`), the
calibration and end-to-end mechanism (`mechanism`), the low-query sampler that
makes the draw tractable for non-smooth losses (`sampler`), loss families and
planted instances (`losses`), and an independent verification harness
(`verify`).  `python -m expmech.cli --config cfg.json` runs the packaged
experiments.
"""

from .geometry import AllSpace, Box, ConvexBody, L2Ball
from .losses import (
    Dataset,
    GaussianPopulation,
    HardInstanceParams,
    LossFamily,
    ProblemSpec,
    abs_linear_family,
    erm_objective,
    hard_instance_params,
    linear_family,
    optimality_gap,
    quadratic_test_family,
    query_count,
    sample_hard_instance,
)
from .mechanism import (
    CalibrationError,
    MechanismConfig,
    RunReport,
    UtilityCertificate,
    calibrate_erm,
    calibrate_sco,
    run_mechanism,
    sco_branch,
)
from .privacy import (
    DivergenceBound,
    GaussianShift,
    PrivacyBudget,
    calibrate_shift,
    divergence_bounds,
    gaussian_delta,
    gaussian_tradeoff,
    normal_cdf,
    normal_quantile,
)
from .sampler import (
    DESK_CONSTANTS,
    PROOF_CONSTANTS,
    EstimatorDraw,
    Objective,
    Regularizer,
    SamplerAbort,
    SamplerReport,
    SamplerSchedule,
    ScheduleConstants,
    alternating_sample,
    base_gaussian_draw,
    derive_schedule,
    gaussian_objective,
    objective_from_family,
    restricted_step,
    sample_chains,
    unbiased_exp_estimator,
)
from .verify import (
    GridDensity,
    check_claim_integrals,
    concentration_probe,
    grid_target,
    tv_estimate,
    wasserstein1,
)

__version__ = "0.1.0"
