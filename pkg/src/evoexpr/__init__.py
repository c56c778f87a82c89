"""Evolutionary search over action-unit genomes for target expression mixes."""

from .types import (
    AuGenome,
    CLASS_NAMES,
    ConfigInvalid,
    DistanceMetric,
    EvaluatorKind,
    ExpressionVector,
    GenerationStats,
    Individual,
    Population,
    RunConfig,
    SelectionStrategy,
    genome_distance,
    validate_target,
)
from .fitness import (
    EvaluatorFailure,
    EvaluatorInterface,
    distance,
    evaluate_individual,
    fitness_from_distance,
)
from .engine import (
    AdaptiveParams,
    ArchiveRecord,
    RngState,
    RunResult,
    TerminationReason,
    adaptive_prob,
    crossover_segment_swap,
    initiate,
    mutate_double_halve,
    run,
    select_roulette_elitist,
    select_sort_truncation,
    step_generation,
)
from .surrogate import (
    PrototypeTable,
    SurrogateEvaluator,
    default_prototypes,
    load_table,
    occupancy_study,
    save_table,
    surrogate_evaluate,
    with_identity_bias,
)
from .bridge import BridgeClient, BridgeConfig

__all__ = [
    "AuGenome",
    "CLASS_NAMES",
    "ConfigInvalid",
    "DistanceMetric",
    "EvaluatorKind",
    "ExpressionVector",
    "GenerationStats",
    "Individual",
    "Population",
    "RunConfig",
    "SelectionStrategy",
    "genome_distance",
    "validate_target",
    "EvaluatorFailure",
    "EvaluatorInterface",
    "distance",
    "evaluate_individual",
    "fitness_from_distance",
    "AdaptiveParams",
    "ArchiveRecord",
    "RngState",
    "RunResult",
    "TerminationReason",
    "adaptive_prob",
    "crossover_segment_swap",
    "initiate",
    "mutate_double_halve",
    "run",
    "select_roulette_elitist",
    "select_sort_truncation",
    "step_generation",
    "PrototypeTable",
    "SurrogateEvaluator",
    "default_prototypes",
    "load_table",
    "occupancy_study",
    "save_table",
    "surrogate_evaluate",
    "with_identity_bias",
    "BridgeClient",
    "BridgeConfig",
]
