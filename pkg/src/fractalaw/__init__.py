"""Random self-similar measures: scaling laws, minimal-metric transport, and
probabilistic metric checks."""

from .measures import DiscreteMeasure, MeasureError, coalesce, dirac, make_measure, mix, pushforward, q_moment
from .scaling import (
    AffineContraction,
    Estimate,
    FiniteMixture,
    HeavyTailExample,
    ParametricAffine,
    ScalingLaw,
    cantor_law,
    lambda_q_esssup,
    lambda_q_expected,
    random_ratio_spec,
    spec_from_json,
    uniform_law,
)
from .transport import EnsemblePair, lq, lq_1d, lq_exact_small, lq_star, lq_star_star, optimal_plan
from .iteration import Prune, generate_ensemble, iterate_measure, trajectory
from .probmetric import (
    DistributionFunction,
    EContraction,
    FiniteRandomVariable,
    espace_distance,
    fixed_point_iterate,
    invariant_set_iterate,
    prob_hausdorff,
    tmin,
)
from .diagnostics import ConfigError, ExperimentConfig, HypothesisViolation, Report, error_bound

__version__ = "0.1.0"
