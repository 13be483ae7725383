"""Minimum-variance combination of noisy value estimates."""

from .core import (
    CombinedValue,
    CovarianceSpec,
    EstimateTriple,
    TriangulationParams,
    Weights,
    blue_variance,
    blue_weights,
    combination_variance,
    combine,
    generalized_weights,
    theorem1_weights,
    triangulate,
)
from .delaware import (
    BlockInputs,
    CaseRecord,
    CaseSkip,
    block_value,
    case_implied_precisions,
    case_table_stats,
    load_cases,
)
from .estimators import (
    BatesGrangerCombiner,
    CombiningRegressor,
    MinimumVarianceCombiner,
    TriangulationCombiner,
    ValuationRegressor,
)
from .forecast import (
    CombineOptions,
    ForecastPanel,
    combining_regression,
    estimate_vc_weight,
    rolling_weights,
    shrink_weights,
    valuation_regression,
    vc_weight,
)
from .inversion import ImpliedPrecisions, implied_ratios
from .simulate import SimConfig, empirical_variance, generate, oracle_min_weights

__version__ = "0.1.0"
