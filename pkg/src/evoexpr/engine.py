"""The genetic algorithm: initialization, adaptive operator probabilities,
selection, segment-swap crossover, double-or-halve mutation, termination.

Two selection strategies are provided:

* sort_truncation (default): each step produces population_size offspring
  by repeatedly pairing random members; a pair crosses over with
  probability p_c and each child mutates with probability p_m.  Only
  children actually touched by an operator count as offspring, so a run
  with all operator probabilities at zero is a fixed point.  Offspring are
  evaluated, merged with the current population, and the fittest
  population_size members survive (stable sort, never deduplicated, which
  is what preserves diversity among near-optimal solutions).

* roulette_elitist: the fittest member plus floor(S/2) - 1
  fitness-proportional draws become the parent pool; children (clones when
  no operator fires) are generated from random parent pairs until the
  population is back to size S.

Reproducibility: all randomness flows through one RngState with a
documented draw order.  Per step: (roulette only) the selection draws;
then per candidate pair, the two parent-index draws, the crossover
decision draw, the two crossover cut draws when crossing, and per child
(first-parent side first) the mutation decision draw followed by the
mutation position and branch draws when mutating.  The second child of a
pair consumes no draws if the offspring quota is already met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .fitness import (
    F_MAX,
    EvaluatorFailure,
    EvaluatorInterface,
    distance,
    fitness_from_distance,
)
from .types import (
    AuGenome,
    ExpressionVector,
    GenerationStats,
    Individual,
    LengthMismatch,
    Population,
    RunConfig,
    SelectionStrategy,
    ValidationError,
)


class UnevaluatedPopulation(ValidationError):
    """Selection was asked to act on a population with unevaluated members."""


class TooFewMembers(ValidationError):
    """Truncation was asked for more survivors than the pool holds."""


@dataclass(frozen=True)
class AdaptiveParams:
    """Gains and switches for the per-individual operator probabilities."""

    k_c: float
    k_m: float
    enabled: bool = True
    denominator_floor: float = 1e-12

    def __post_init__(self):
        if self.k_c < 0.0 or self.k_m < 0.0:
            raise ValidationError("adaptive gains must be >= 0")
        if self.denominator_floor <= 0.0:
            raise ValidationError("denominator_floor must be positive")

    @classmethod
    def from_config(cls, config: RunConfig) -> "AdaptiveParams":
        return cls(
            k_c=config.effective_k_c,
            k_m=config.effective_k_m,
            enabled=config.adaptive,
        )


class RngState:
    """Seeded deterministic generator; identical seeds and draw sequences
    give identical outputs across runs and platforms.

    ``draws`` counts logical draws (uniform() and index() each count one).
    """

    def __init__(self, seed: int):
        self._gen = np.random.Generator(np.random.PCG64(seed))
        self.draws = 0

    def uniform(self) -> float:
        """One float uniform on [0, 1)."""
        self.draws += 1
        return float(self._gen.random())

    def index(self, n: int) -> int:
        """One integer uniform on {0 .. n-1}."""
        self.draws += 1
        return int(self._gen.integers(n))


def initiate(config: RunConfig, rng: RngState) -> Population:
    """Population of S unevaluated individuals, genes uniform on [0, 1).

    Draw order is individual-major, gene-minor: S * M uniform draws.
    """
    members = []
    for _ in range(config.population_size):
        genome = AuGenome(
            tuple(rng.uniform() for _ in range(config.genome_length))
        )
        members.append(Individual(genome=genome))
    return Population(members=tuple(members), generation=0)


def adaptive_prob(
    k: float,
    f: float,
    f_best: float,
    f_avg: float,
    base: float,
    params: AdaptiveParams,
) -> float:
    """Per-individual operator probability k * (f_best - f) / (f_best - f_avg).

    Returns the base probability when adaptation is disabled or the
    population has converged to the point that the denominator degenerates.
    Individuals at the population best get probability 0: the fittest
    genetic material is left unchanged.
    """
    if not params.enabled:
        return base
    denom = f_best - f_avg
    if denom < params.denominator_floor:
        return base
    return min(1.0, max(0.0, k * (f_best - f) / denom))


def _require_evaluated(members) -> None:
    if any(not m.evaluated for m in members):
        raise UnevaluatedPopulation("population contains unevaluated members")


def _fittest_index(members) -> int:
    # max() returns the first maximum, which is the tie-break we want.
    return max(range(len(members)), key=lambda i: members[i].fitness)


def select_roulette_elitist(pop: Population, rng: RngState) -> Population:
    """floor(S/2) parents: the fittest member first (elitism), the rest
    drawn independently with replacement, member n with probability
    f_n / sum(f).  Ties for fittest go to the lowest member index.
    """
    _require_evaluated(pop.members)
    members = pop.members
    n_parents = len(members) // 2
    parents = [members[_fittest_index(members)]]
    total = math.fsum(m.fitness for m in members)
    for _ in range(n_parents - 1):
        parents.append(members[_roulette_index(members, total, rng)])
    return Population(members=tuple(parents), generation=pop.generation)


def _roulette_index(members, total: float, rng: RngState) -> int:
    u = rng.uniform() * total
    acc = 0.0
    for i, m in enumerate(members):
        acc += m.fitness
        if u < acc:
            return i
    return len(members) - 1  # guard against accumulated rounding


def select_sort_truncation(merged: Population, p: int) -> Population:
    """The p fittest members of the merged pool, in descending fitness order.

    The sort is stable: ties keep their merged-sequence order, and nothing
    is deduplicated.
    """
    _require_evaluated(merged.members)
    if p > len(merged.members):
        raise TooFewMembers(
            f"asked for {p} survivors from {len(merged.members)} members"
        )
    ranked = sorted(merged.members, key=lambda m: -m.fitness)
    return Population(members=tuple(ranked[:p]), generation=merged.generation)


def crossover_segment_swap(
    a: AuGenome, b: AuGenome, rng: RngState
) -> tuple[AuGenome, AuGenome]:
    """Swap one random segment between two genomes.

    Two cut indices i, j are drawn uniform on {0 .. M-1} (i first) and
    ordered so i <= j; positions i through j inclusive are exchanged.
    The multiset of gene values at each position is preserved.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"genome lengths differ: {len(a)} vs {len(b)}")
    m = len(a)
    i = rng.index(m)
    j = rng.index(m)
    if i > j:
        i, j = j, i
    va, vb = list(a.values), list(b.values)
    va[i : j + 1], vb[i : j + 1] = vb[i : j + 1], va[i : j + 1]
    return AuGenome(tuple(va)), AuGenome(tuple(vb))


def mutate_double_halve(g: AuGenome, rng: RngState) -> AuGenome:
    """Double or halve one random gene, half-half chance.

    The position draw comes first, then the branch draw; doubling clamps
    to 1.0 so the genome stays inside the generator's input domain.
    """
    k = rng.index(len(g))
    values = list(g.values)
    if rng.uniform() < 0.5:
        values[k] = min(2.0 * values[k], 1.0)
    else:
        values[k] = values[k] / 2.0
    return AuGenome(tuple(values))


def _pair_indices(n: int, rng: RngState) -> tuple[int, int]:
    """Two distinct indices, degrading to a self-pair when n == 1."""
    a = rng.index(n)
    if n == 1:
        return a, a
    b = rng.index(n - 1)
    if b >= a:
        b += 1
    return a, b


def _variation_possible(members, config: RunConfig, params: AdaptiveParams) -> bool:
    """Whether any drawable pair has a positive operator probability.

    Guards the touched-only offspring loop against configurations where no
    operator can ever fire (all probabilities identically zero), which
    would otherwise spin forever.
    """
    base_possible = config.base_crossover_prob > 0.0 or config.base_mutation_prob > 0.0
    if not params.enabled:
        return base_possible
    fits = [m.fitness for m in members]
    f_best = max(fits)
    f_avg = math.fsum(fits) / len(fits)
    if f_best - f_avg < params.denominator_floor:
        return base_possible
    if params.k_c <= 0.0 and params.k_m <= 0.0:
        return False
    # Adaptive probabilities use the fitter member of a pair, so a pair can
    # fire only when both its members sit strictly below the best.
    return sum(1 for f in fits if f < f_best) >= 2


def _spawn_children(
    pool,
    need: int,
    f_best: float,
    f_avg: float,
    config: RunConfig,
    params: AdaptiveParams,
    rng: RngState,
    touched_only: bool,
) -> list[AuGenome]:
    """Generate child genomes from random pairs of the (evaluated) pool.

    Operator probabilities follow the adaptive formula using the pair's
    fitter member, which protects elite genetic material.  When
    touched_only is set, children that neither crossed over nor mutated
    are discarded instead of being admitted as clones.
    """
    children: list[AuGenome] = []
    if need <= 0:
        return children
    if touched_only and not _variation_possible(pool, config, params):
        return children
    while len(children) < need:
        ia, ib = _pair_indices(len(pool), rng)
        pa, pb = pool[ia], pool[ib]
        f_pair = max(pa.fitness, pb.fitness)
        p_c = adaptive_prob(
            params.k_c, f_pair, f_best, f_avg, config.base_crossover_prob, params
        )
        p_m = adaptive_prob(
            params.k_m, f_pair, f_best, f_avg, config.base_mutation_prob, params
        )
        crossed = rng.uniform() < p_c
        if crossed:
            ga, gb = crossover_segment_swap(pa.genome, pb.genome, rng)
        else:
            ga, gb = pa.genome, pb.genome
        for g in (ga, gb):
            if len(children) >= need:
                break  # the last pair may contribute just one child
            mutated = rng.uniform() < p_m
            if mutated:
                g = mutate_double_halve(g, rng)
            if crossed or mutated or not touched_only:
                children.append(g)
    return children


def _evaluate_genomes(
    genomes: list[AuGenome],
    evaluator: EvaluatorInterface,
    config: RunConfig,
) -> list[Individual]:
    """Evaluate a batch of genomes, preserving order; aborts on failure."""
    try:
        results = evaluator.evaluate_batch(genomes)
    except EvaluatorFailure:
        raise
    except Exception as e:
        raise EvaluatorFailure(f"evaluator failed: {e}") from e
    out = []
    for genome, (expression, phenotype_ref) in zip(genomes, results):
        f = fitness_from_distance(
            distance(expression, config.target, config.distance_metric)
        )
        out.append(
            Individual(
                genome=genome,
                expression=expression,
                fitness=f,
                phenotype_ref=phenotype_ref,
            )
        )
    return out


def population_stats(members, evaluations: int) -> GenerationStats:
    """Fitness spread plus mean pairwise genome distance."""
    fits = [m.fitness for m in members]
    f_best = max(fits)
    f_min = min(fits)
    f_avg = math.fsum(fits) / len(fits)
    f_avg = min(max(f_avg, f_min), f_best)  # clamp float summation dust
    return GenerationStats(
        f_best=f_best,
        f_avg=f_avg,
        f_min=f_min,
        diversity=_mean_pairwise_distance(members),
        evaluations=evaluations,
    )


def _mean_pairwise_distance(members) -> float:
    n = len(members)
    if n < 2:
        return 0.0
    arr = np.array([m.genome.values for m in members], dtype=float)
    sq = np.sum(arr * arr, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (arr @ arr.T)
    np.maximum(d2, 0.0, out=d2)
    iu = np.triu_indices(n, k=1)
    return float(np.mean(np.sqrt(d2[iu])))


def step_generation(
    pop: Population,
    config: RunConfig,
    evaluator: EvaluatorInterface,
    rng: RngState,
    on_evaluate: Callable[[list[Individual]], None] | None = None,
) -> Population:
    """Advance the population one generation under the configured strategy.

    ``on_evaluate`` receives every newly evaluated individual of the step
    (in evaluation order), including offspring later dropped by selection.
    """
    _require_evaluated(pop.members)
    s = config.population_size
    params = AdaptiveParams.from_config(config)
    fits = [m.fitness for m in pop.members]
    f_best = max(fits)
    f_avg = math.fsum(fits) / len(fits)

    if config.selection_strategy is SelectionStrategy.ROULETTE_ELITIST:
        parents = select_roulette_elitist(pop, rng).members
        child_genomes = _spawn_children(
            parents, s - len(parents), f_best, f_avg, config, params, rng,
            touched_only=False,
        )
        children = _evaluate_genomes(child_genomes, evaluator, config)
        survivors = parents + tuple(children)
    else:
        child_genomes = _spawn_children(
            pop.members, s, f_best, f_avg, config, params, rng,
            touched_only=True,
        )
        children = _evaluate_genomes(child_genomes, evaluator, config)
        merged = Population(
            members=pop.members + tuple(children), generation=pop.generation
        )
        survivors = select_sort_truncation(merged, s).members

    if on_evaluate is not None:
        on_evaluate(children)
    stats = population_stats(survivors, evaluations=len(children))
    return Population(
        members=survivors, generation=pop.generation + 1, stats=stats
    )


class TerminationReason(str, Enum):
    CONVERGED = "converged"
    GENERATION_BUDGET = "generation_budget"


@dataclass(frozen=True)
class ArchiveRecord:
    """One evaluation event: the genome and everything measured for it."""

    generation: int
    genome: AuGenome
    expression: ExpressionVector
    fitness: float
    phenotype_ref: str | None


@dataclass(frozen=True)
class RunResult:
    """Everything a finished run produced."""

    population: Population
    stats_trace: tuple[GenerationStats, ...]
    reason: TerminationReason
    total_evaluations: int
    archive: tuple[ArchiveRecord, ...]

    @property
    def f_best(self) -> float:
        return self.stats_trace[-1].f_best

    @property
    def distance_best(self) -> float:
        return 1.0 / self.f_best - 1.0


def run(
    config: RunConfig,
    evaluator: EvaluatorInterface,
    on_evaluate: Callable[[int, list[Individual]], None] | None = None,
) -> RunResult:
    """Full search: initialize, evaluate, step until the best fitness
    reaches f_max - epsilon or the generation budget is spent.

    ``on_evaluate`` streams (generation, newly evaluated individuals) as
    they happen; the same records are also returned in the archive.
    """
    rng = RngState(config.rng_seed)
    archive: list[ArchiveRecord] = []

    def record(generation: int, individuals: list[Individual]) -> None:
        archive.extend(
            ArchiveRecord(
                generation=generation,
                genome=ind.genome,
                expression=ind.expression,
                fitness=ind.fitness,
                phenotype_ref=ind.phenotype_ref,
            )
            for ind in individuals
        )
        if on_evaluate is not None:
            on_evaluate(generation, individuals)

    pop = initiate(config, rng)
    members = _evaluate_genomes([m.genome for m in pop.members], evaluator, config)
    record(0, members)
    stats = population_stats(members, evaluations=len(members))
    pop = Population(members=tuple(members), generation=0, stats=stats)
    trace = [stats]

    threshold = F_MAX - config.epsilon
    converged = stats.f_best >= threshold
    while not converged and pop.generation < config.max_generations:
        pop = step_generation(
            pop, config, evaluator, rng,
            on_evaluate=lambda inds, g=pop.generation + 1: record(g, inds),
        )
        trace.append(pop.stats)
        converged = pop.stats.f_best >= threshold

    return RunResult(
        population=pop,
        stats_trace=tuple(trace),
        reason=(
            TerminationReason.CONVERGED
            if converged
            else TerminationReason.GENERATION_BUDGET
        ),
        total_evaluations=len(archive),
        archive=tuple(archive),
    )
