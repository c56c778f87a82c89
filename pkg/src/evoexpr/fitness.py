"""Evaluator abstraction and the distance-to-fitness transform.

An evaluator turns a genome into an expression vector (plus an optional
phenotype reference).  Fitness is 1 / (1 + distance(expression, target)):
bounded in (0, 1], strictly decreasing in distance, and equal to the
maximum attainable fitness of exactly 1 at distance zero.  That keeps
fitness-proportional selection well defined while the underlying problem
is a distance minimization.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

from .types import (
    AuGenome,
    DistanceMetric,
    ExpressionVector,
    Individual,
    NonFinite,
)

F_MAX = 1.0


class EvaluatorFailure(RuntimeError):
    """The evaluator could not produce an expression; the run must abort."""


class NegativeDistance(ValueError):
    """A distance passed to the fitness transform is negative."""


class EvaluatorInterface(ABC):
    """Callable contract: genome in, (expression, phenotype_ref) out.

    Implementations must be deterministic for a fixed configuration: the
    same genome always yields the same expression.
    """

    @abstractmethod
    def evaluate(self, genome: AuGenome) -> tuple[ExpressionVector, str | None]:
        raise NotImplementedError

    def evaluate_batch(
        self, genomes: list[AuGenome]
    ) -> list[tuple[ExpressionVector, str | None]]:
        """Evaluate several genomes; results are in input order.

        The default is a serial map.  Implementations may fan out, but must
        merge results back in the original order so runs stay reproducible.
        """
        return [self.evaluate(g) for g in genomes]

    def close(self) -> None:
        """Release external resources; idempotent."""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False


def distance(
    e: ExpressionVector,
    e_t: ExpressionVector,
    metric: DistanceMetric = DistanceMetric.L2,
) -> float:
    """Distance between two expression vectors under the configured metric."""
    if metric is DistanceMetric.L2:
        return math.dist(e.probs, e_t.probs)
    return math.fsum(abs(a - b) for a, b in zip(e.probs, e_t.probs))


def fitness_from_distance(d: float) -> float:
    """Map a nonnegative distance to fitness 1 / (1 + d) in (0, 1]."""
    if not math.isfinite(d):
        raise NonFinite(f"distance is not finite: {d!r}")
    if d < 0.0:
        raise NegativeDistance(f"distance is negative: {d!r}")
    return 1.0 / (1.0 + d)


def distance_from_fitness(f: float) -> float:
    """Inverse of the fitness transform, for reporting."""
    return 1.0 / f - 1.0


def evaluate_individual(
    ind: Individual,
    evaluator: EvaluatorInterface,
    target: ExpressionVector,
    metric: DistanceMetric = DistanceMetric.L2,
) -> Individual:
    """Return an evaluated copy of ``ind``; the input is left untouched.

    Any evaluator error aborts the run by raising EvaluatorFailure rather
    than guessing a fitness.
    """
    try:
        expression, phenotype_ref = evaluator.evaluate(ind.genome)
    except EvaluatorFailure:
        raise
    except Exception as e:
        raise EvaluatorFailure(f"evaluator failed: {e}") from e
    f = fitness_from_distance(distance(expression, target, metric))
    return Individual(
        genome=ind.genome,
        expression=expression,
        fitness=f,
        phenotype_ref=phenotype_ref,
    )
