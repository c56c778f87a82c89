"""Core value types shared by the whole engine.

Genomes are fixed-length vectors of action-unit intensities in [0, 1];
expression vectors are 7-component probability vectors over the basic
emotion classes.  Everything here is an immutable value: safe to share
between concurrent evaluation tasks, and hashable where it matters.

Canonical text serialization (used by archives and the worker protocol)
is decimal with 17 significant digits, comma-separated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

CLASS_NAMES = ("anger", "disgust", "fear", "happy", "sad", "surprise", "neutral")
NUM_CLASSES = 7
DEFAULT_GENOME_LENGTH = 17

TARGET_SUM_TOLERANCE = 1e-6


class ValidationError(ValueError):
    """A value violates one of the domain invariants."""


class WrongArity(ValidationError):
    """An expression vector does not have exactly 7 components."""


class NegativeComponent(ValidationError):
    """A component that must be nonnegative is negative."""


class NotNormalized(ValidationError):
    """A target vector is not on the probability simplex within tolerance."""


class NonFinite(ValidationError):
    """A component is NaN or infinite."""


class LengthMismatch(ValidationError):
    """Two genomes (or a genome and a prototype) differ in length."""


class ConfigInvalid(ValueError):
    """A run configuration violates its invariants."""


def format_real(x: float) -> str:
    """Canonical decimal form: 17 significant digits, round-trips float64."""
    return f"{x:.17g}"


def _format_vector(values) -> str:
    return ",".join(format_real(v) for v in values)


def _parse_vector(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as e:
        raise ValidationError(f"unparseable vector text: {text!r}") from e


@dataclass(frozen=True)
class AuGenome:
    """Fixed-length vector of action-unit intensities, each in [0, 1]."""

    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if len(values) < 1:
            raise ValidationError("genome must have at least one component")
        for v in values:
            if not math.isfinite(v):
                raise NonFinite(f"genome component is not finite: {v!r}")
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"genome component outside [0, 1]: {v!r}")

    def __len__(self) -> int:
        return len(self.values)

    def to_text(self) -> str:
        return _format_vector(self.values)

    @classmethod
    def from_text(cls, text: str) -> "AuGenome":
        return cls(_parse_vector(text))


@dataclass(frozen=True)
class ExpressionVector:
    """7-component expression mix, ordered anger, disgust, fear, happy, sad,
    surprise, neutral.  Components are finite, nonnegative and at most 1.
    """

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if len(probs) != NUM_CLASSES:
            raise WrongArity(f"expected {NUM_CLASSES} components, got {len(probs)}")
        for p in probs:
            if not math.isfinite(p):
                raise NonFinite(f"expression component is not finite: {p!r}")
            if p < 0.0:
                raise NegativeComponent(f"expression component is negative: {p!r}")
            if p > 1.0:
                raise NotNormalized(f"expression component exceeds 1: {p!r}")

    def to_text(self) -> str:
        return _format_vector(self.probs)

    @classmethod
    def from_text(cls, text: str) -> "ExpressionVector":
        return cls(_parse_vector(text))

    def argmax(self) -> int:
        return max(range(NUM_CLASSES), key=lambda k: self.probs[k])


def validate_target(raw) -> ExpressionVector:
    """Validate a user-supplied target expression.

    The vector must already sum to 1 within 1e-6; no silent renormalization,
    so configuration mistakes surface instead of being rescaled away.
    """
    raw = tuple(float(v) for v in raw)
    if len(raw) != NUM_CLASSES:
        raise WrongArity(f"target must have {NUM_CLASSES} components, got {len(raw)}")
    for v in raw:
        if not math.isfinite(v):
            raise NonFinite(f"target component is not finite: {v!r}")
        if v < 0.0:
            raise NegativeComponent(f"target component is negative: {v!r}")
    total = math.fsum(raw)
    if abs(total - 1.0) > TARGET_SUM_TOLERANCE:
        raise NotNormalized(f"target components sum to {total!r}, expected 1")
    return ExpressionVector(raw)


def genome_distance(a: AuGenome, b: AuGenome) -> float:
    """Euclidean distance between two genomes of equal length."""
    if len(a) != len(b):
        raise LengthMismatch(f"genome lengths differ: {len(a)} vs {len(b)}")
    return math.dist(a.values, b.values)


@dataclass(frozen=True)
class Individual:
    """A genome plus, once evaluated, its expression and fitness.

    Expression and fitness are either both present or both absent;
    phenotype_ref is an opaque reference (e.g. an image path) supplied
    by external evaluators.
    """

    genome: AuGenome
    expression: ExpressionVector | None = None
    fitness: float | None = None
    phenotype_ref: str | None = None

    def __post_init__(self):
        if (self.expression is None) != (self.fitness is None):
            raise ValidationError(
                "expression and fitness must be both present or both absent"
            )
        if self.fitness is not None and not 0.0 < self.fitness <= 1.0:
            raise ValidationError(f"fitness outside (0, 1]: {self.fitness!r}")

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None


@dataclass(frozen=True)
class GenerationStats:
    """Per-generation summary: fitness spread, genome diversity, eval count."""

    f_best: float
    f_avg: float
    f_min: float
    diversity: float
    evaluations: int

    def __post_init__(self):
        if not (0.0 < self.f_min <= self.f_avg <= self.f_best <= 1.0):
            raise ValidationError(
                f"expected 0 < f_min <= f_avg <= f_best <= 1, got "
                f"{self.f_min!r}, {self.f_avg!r}, {self.f_best!r}"
            )
        if self.diversity < 0.0:
            raise ValidationError(f"diversity is negative: {self.diversity!r}")


@dataclass(frozen=True)
class Population:
    """Ordered multiset of individuals at a given generation.

    Size normally equals the configured population size; it may transiently
    hold up to twice that during a parents-plus-offspring merge, and less
    when holding just a selected parent pool.
    """

    members: tuple[Individual, ...]
    generation: int = 0
    stats: GenerationStats | None = None

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if self.generation < 0:
            raise ValidationError("generation must be nonnegative")

    def __len__(self) -> int:
        return len(self.members)


class SelectionStrategy(str, Enum):
    ROULETTE_ELITIST = "roulette_elitist"
    SORT_TRUNCATION = "sort_truncation"


class DistanceMetric(str, Enum):
    L2 = "l2"
    L1 = "l1"


class EvaluatorKind(str, Enum):
    SURROGATE = "surrogate"
    BRIDGE = "bridge"


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a search run, including seeds and evaluator selection.

    k_c / k_m default to the base crossover / mutation probabilities when
    left as None (the base probabilities seed the adaptive formula).
    """

    target: ExpressionVector
    genome_length: int = DEFAULT_GENOME_LENGTH
    population_size: int = 50
    max_generations: int = 50
    base_crossover_prob: float = 0.7
    base_mutation_prob: float = 0.02
    adaptive: bool = True
    k_c: float | None = None
    k_m: float | None = None
    selection_strategy: SelectionStrategy = SelectionStrategy.SORT_TRUNCATION
    distance_metric: DistanceMetric = DistanceMetric.L2
    epsilon: float = 0.03
    rng_seed: int = 1
    evaluator: EvaluatorKind = EvaluatorKind.SURROGATE
    surrogate_beta: float = 1.5
    identity_bias_seed: int | None = None
    prototype_table: str | None = None
    worker_command: str | None = None
    image_ref: str | None = None
    handshake_timeout_ms: int = 30000
    request_timeout_ms: int = 60000
    max_retries: int = 0
    pool_size: int = 1

    def __post_init__(self):
        if self.genome_length < 1:
            raise ConfigInvalid("genome_length must be >= 1")
        if self.population_size < 2:
            raise ConfigInvalid("population_size must be >= 2")
        if self.max_generations < 1:
            raise ConfigInvalid("max_generations must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigInvalid("epsilon must be in (0, 1)")
        for name in ("base_crossover_prob", "base_mutation_prob"):
            p = getattr(self, name)
            if not (math.isfinite(p) and 0.0 <= p <= 1.0):
                raise ConfigInvalid(f"{name} must be in [0, 1]")
        for name in ("k_c", "k_m"):
            k = getattr(self, name)
            if k is not None and not (math.isfinite(k) and k >= 0.0):
                raise ConfigInvalid(f"{name} must be >= 0")
        if self.rng_seed < 0:
            raise ConfigInvalid("rng_seed must be nonnegative")
        if not (math.isfinite(self.surrogate_beta) and self.surrogate_beta > 0.0):
            raise ConfigInvalid("surrogate_beta must be positive and finite")
        if self.identity_bias_seed is not None and self.identity_bias_seed < 0:
            raise ConfigInvalid("identity_bias_seed must be nonnegative")
        if self.handshake_timeout_ms <= 0 or self.request_timeout_ms <= 0:
            raise ConfigInvalid("bridge timeouts must be positive")
        if self.max_retries < 0:
            raise ConfigInvalid("max_retries must be nonnegative")
        if self.pool_size < 1:
            raise ConfigInvalid("pool_size must be >= 1")
        if self.evaluator is EvaluatorKind.BRIDGE:
            if not self.worker_command:
                raise ConfigInvalid("bridge evaluator requires worker_command")
            if not self.image_ref:
                raise ConfigInvalid("bridge evaluator requires image_ref")
        # Re-check the target through the strict validator: user targets must
        # already be normalized.
        validate_target(self.target.probs)

    @property
    def effective_k_c(self) -> float:
        return self.base_crossover_prob if self.k_c is None else self.k_c

    @property
    def effective_k_m(self) -> float:
        return self.base_mutation_prob if self.k_m is None else self.k_m
