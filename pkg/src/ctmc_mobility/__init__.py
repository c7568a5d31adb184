"""Mobility indicators for continuous-time Markov reliability models.

Given a generator ``Q``, an initial law ``alpha`` and a split of the states
into working and failure subsets, the package computes the rates of
failures, repairs and within-subset jumps over time, their long-run
values, and estimates ``Q`` from a sampled, binned time series.
"""

__version__ = "0.1.0"

from .config import (
    DEFAULT_TOLERANCES,
    Tolerances,
)
from .core import (
    Generator,
    InitialDistribution,
    StatePartition,
    TransitionMatrix,
    availability,
    closed_classes,
    embedded_chain,
    embedded_stationary_distribution,
    reliability,
    spectral_gap,
    stationary_distribution,
    transition_matrix,
    unconditional_distribution,
    validate_generator,
)
from .errors import (
    AllZeroCounts,
    DegenerateSample,
    EmptyGrid,
    EmptySeries,
    EmptyWorkingSet,
    InvalidDistribution,
    InvalidPartition,
    LogarithmFailure,
    MobilityError,
    ModelError,
    NegativeOffDiagonal,
    NoConvergence,
    NonConvergent,
    NotSquare,
    NumericalError,
    Reducible,
    RowSumViolation,
    SolverFailure,
    TruncationFailure,
)
from .estimation import (
    BinningScheme,
    EmbeddingResult,
    SiteEstimate,
    TransitionCounts,
    WeibullParams,
    count_transitions,
    delta_method_se,
    discretize,
    embed_generator,
    empirical_transition_matrix,
    filter_outliers,
    fit_series,
    principal_logm,
    weibull_mle,
)
from .mobility import (
    AsymptoticIndicators,
    IndicatorSeries,
    aggregate_rate_vectors,
    asymptotic_indicators,
    indicator_series,
    initial_indicator_comparison,
    rocof,
    rocor,
    roi,
    tmr,
)
from .oracle import (
    classify_events,
    empirical_rates,
    simulate_trajectory,
    values_from_states,
)

__all__ = [
    "__version__",
    "AllZeroCounts",
    "AsymptoticIndicators",
    "BinningScheme",
    "DEFAULT_TOLERANCES",
    "DegenerateSample",
    "EmbeddingResult",
    "EmptyGrid",
    "EmptySeries",
    "EmptyWorkingSet",
    "Generator",
    "IndicatorSeries",
    "InitialDistribution",
    "InvalidDistribution",
    "InvalidPartition",
    "LogarithmFailure",
    "MobilityError",
    "ModelError",
    "NegativeOffDiagonal",
    "NoConvergence",
    "NonConvergent",
    "NotSquare",
    "NumericalError",
    "Reducible",
    "RowSumViolation",
    "SiteEstimate",
    "SolverFailure",
    "StatePartition",
    "Tolerances",
    "TransitionCounts",
    "TransitionMatrix",
    "TruncationFailure",
    "WeibullParams",
    "aggregate_rate_vectors",
    "asymptotic_indicators",
    "availability",
    "classify_events",
    "closed_classes",
    "count_transitions",
    "delta_method_se",
    "discretize",
    "embed_generator",
    "embedded_chain",
    "embedded_stationary_distribution",
    "empirical_rates",
    "empirical_transition_matrix",
    "filter_outliers",
    "fit_series",
    "indicator_series",
    "initial_indicator_comparison",
    "principal_logm",
    "reliability",
    "rocof",
    "rocor",
    "roi",
    "simulate_trajectory",
    "spectral_gap",
    "stationary_distribution",
    "tmr",
    "transition_matrix",
    "unconditional_distribution",
    "validate_generator",
    "values_from_states",
    "weibull_mle",
]
