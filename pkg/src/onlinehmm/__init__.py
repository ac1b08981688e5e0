"""Online learning for discrete hidden Markov models.

Four online learners (point-estimate reestimation, softmax gradient
ascent, exact sequential Bayes with Dirichlet projection, and its
moment-matched approximation) in a teacher-student setting with exact
KL-divergence evaluation and a reproducible simulation harness.
"""

from .dirichlet import (
    digamma,
    inverse_digamma,
    log_moment,
    monomial_moment,
    solve_digamma_system,
    trigamma,
)
from .exceptions import (
    CollapsedPosteriorError,
    ConfigError,
    DegenerateSystemError,
    EnumerationCapError,
    OnlineHmmError,
    SolverConvergenceError,
    UpdateError,
    ZeroLikelihoodError,
)
from .harness import (
    INF_SENTINEL,
    AveragedCurve,
    ExperimentConfig,
    LearnerRun,
    LearningCurve,
    Schedule,
    block_departures,
    drift_step,
    has_sharp_drop,
    random_teacher,
    run_averaged,
    run_experiment,
    run_single,
    sharp_drop_stats,
    symmetric_student,
)
from .hmm import (
    HmmParams,
    ModelDims,
    PathPosterior,
    ValidationReport,
    batch_sequence_likelihood,
    brute_force_likelihood,
    floor_params,
    forward_backward,
    joint_path_probability,
    kl_divergence,
    sample_sequence,
    sequence_likelihood,
    uniform_params,
    validate,
)
from .learners import (
    BaldiChauvin,
    BaumWelchOnline,
    BayesianOnline,
    LearnerConfig,
    MeanPosterior,
    PosteriorMixture,
    bw_reestimate,
    make_learner,
    posterior_mixture,
)

__version__ = "0.1.0"

__all__ = [
    "AveragedCurve",
    "BaldiChauvin",
    "BaumWelchOnline",
    "BayesianOnline",
    "CollapsedPosteriorError",
    "ConfigError",
    "DegenerateSystemError",
    "EnumerationCapError",
    "ExperimentConfig",
    "HmmParams",
    "INF_SENTINEL",
    "LearnerConfig",
    "LearnerRun",
    "LearningCurve",
    "MeanPosterior",
    "ModelDims",
    "OnlineHmmError",
    "PathPosterior",
    "PosteriorMixture",
    "Schedule",
    "SolverConvergenceError",
    "UpdateError",
    "ValidationReport",
    "ZeroLikelihoodError",
    "batch_sequence_likelihood",
    "block_departures",
    "brute_force_likelihood",
    "bw_reestimate",
    "digamma",
    "drift_step",
    "floor_params",
    "forward_backward",
    "has_sharp_drop",
    "inverse_digamma",
    "joint_path_probability",
    "kl_divergence",
    "log_moment",
    "make_learner",
    "monomial_moment",
    "posterior_mixture",
    "random_teacher",
    "run_averaged",
    "run_experiment",
    "run_single",
    "sample_sequence",
    "sequence_likelihood",
    "sharp_drop_stats",
    "solve_digamma_system",
    "symmetric_student",
    "trigamma",
    "uniform_params",
    "validate",
]
