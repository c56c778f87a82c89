import math

import pytest

from evoexpr import (
    AuGenome,
    ExpressionVector,
    GenerationStats,
    Individual,
    Population,
    RunConfig,
    genome_distance,
    validate_target,
)
from evoexpr.types import (
    ConfigInvalid,
    LengthMismatch,
    NegativeComponent,
    NonFinite,
    NotNormalized,
    ValidationError,
    WrongArity,
    format_real,
)
from conftest import onehot, random_genome


class TestValidateTarget:
    def test_one_hot_accepted(self):
        t = validate_target([0, 0, 0, 1, 0, 0, 0])
        assert t.probs == (0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0)

    def test_compound_accepted_unchanged(self):
        t = validate_target([0.3, 0.3, 0.4, 0, 0, 0, 0])
        assert t.probs == (0.3, 0.3, 0.4, 0.0, 0.0, 0.0, 0.0)

    def test_unnormalized_rejected(self):
        with pytest.raises(NotNormalized):
            validate_target([0.5, 0.5, 0.5, 0, 0, 0, 0])

    def test_wrong_arity(self):
        with pytest.raises(WrongArity):
            validate_target([1.0])
        with pytest.raises(WrongArity):
            validate_target([0.125] * 8)

    def test_negative_component(self):
        with pytest.raises(NegativeComponent):
            validate_target([-0.1, 0.3, 0.8, 0, 0, 0, 0])

    def test_non_finite(self):
        with pytest.raises(NonFinite):
            validate_target([math.nan, 0, 0, 1, 0, 0, 0])
        with pytest.raises(NonFinite):
            validate_target([math.inf, 0, 0, 0, 0, 0, 0])

    def test_tolerance_boundary(self):
        half = 0.5 + 4.5e-7
        validate_target([half, half, 0, 0, 0, 0, 0])  # sum 1 + 9e-7
        with pytest.raises(NotNormalized):
            validate_target([0.5 + 1e-6, 0.5 + 1e-6, 0, 0, 0, 0, 0])

    def test_simplex_membership_property(self, rnd):
        # Random 7-vectors are accepted exactly when they sum to 1 within
        # tolerance (given nonnegative finite components).
        for _ in range(500):
            raw = [rnd.random() for _ in range(7)]
            total = sum(raw)
            if rnd.random() < 0.5:
                raw = [v / total for v in raw]  # project onto the simplex
            on_simplex = abs(math.fsum(raw) - 1.0) <= 1e-6
            if on_simplex:
                validate_target(raw)
            else:
                with pytest.raises(NotNormalized):
                    validate_target(raw)


class TestGenomeDistance:
    def test_identity(self, rnd):
        g = random_genome(rnd)
        assert genome_distance(g, g) == 0.0

    def test_all_zero_vs_all_one(self):
        a = AuGenome((0.0,) * 4)
        b = AuGenome((1.0,) * 4)
        assert genome_distance(a, b) == 2.0

    def test_direct_evaluation(self):
        a = AuGenome((0.5, 0.0))
        b = AuGenome((0.0, 0.5))
        expected = math.sqrt(0.25 + 0.25)
        assert genome_distance(a, b) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.7071067811865476, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            genome_distance(AuGenome((0.5,)), AuGenome((0.5, 0.5)))

    def test_metric_axioms(self, rnd):
        for _ in range(300):
            a, b, c = (random_genome(rnd, 5) for _ in range(3))
            dab = genome_distance(a, b)
            assert dab == genome_distance(b, a)
            assert dab >= 0.0
            assert (dab == 0.0) == (a.values == b.values)
            assert dab <= genome_distance(a, c) + genome_distance(c, b) + 1e-12


class TestSerialization:
    def test_genome_round_trip(self, rnd):
        for _ in range(200):
            g = random_genome(rnd, rnd.randrange(1, 24))
            assert AuGenome.from_text(g.to_text()) == g

    def test_expression_round_trip(self, rnd):
        for _ in range(200):
            raw = [rnd.random() for _ in range(7)]
            total = sum(raw)
            e = ExpressionVector(tuple(v / total for v in raw))
            assert ExpressionVector.from_text(e.to_text()) == e

    def test_canonical_form(self):
        assert format_real(0.5) == "0.5"
        assert float(format_real(0.1)) == 0.1
        g = AuGenome((1.0, 0.0, 0.25))
        assert g.to_text() == "1,0,0.25"


class TestGenomeValidation:
    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            AuGenome((1.5,))
        with pytest.raises(ValidationError):
            AuGenome((-0.1,))

    def test_non_finite(self):
        with pytest.raises(NonFinite):
            AuGenome((math.nan,))

    def test_empty(self):
        with pytest.raises(ValidationError):
            AuGenome(())


class TestExpressionVector:
    def test_component_above_one_rejected(self):
        with pytest.raises(NotNormalized):
            ExpressionVector((1.1, 0, 0, 0, 0, 0, 0))

    def test_argmax(self):
        assert onehot(5).argmax() == 5


class TestIndividual:
    def test_unevaluated(self, rnd):
        ind = Individual(genome=random_genome(rnd))
        assert not ind.evaluated

    def test_expression_and_fitness_paired(self, rnd):
        g = random_genome(rnd)
        with pytest.raises(ValidationError):
            Individual(genome=g, fitness=0.5)
        with pytest.raises(ValidationError):
            Individual(genome=g, expression=onehot(0))

    def test_fitness_range(self, rnd):
        g = random_genome(rnd)
        with pytest.raises(ValidationError):
            Individual(genome=g, expression=onehot(0), fitness=0.0)
        with pytest.raises(ValidationError):
            Individual(genome=g, expression=onehot(0), fitness=1.5)


class TestGenerationStats:
    def test_ordering_enforced(self):
        with pytest.raises(ValidationError):
            GenerationStats(f_best=0.5, f_avg=0.6, f_min=0.4, diversity=0.1,
                            evaluations=10)
        GenerationStats(f_best=0.9, f_avg=0.6, f_min=0.4, diversity=0.0,
                        evaluations=10)

    def test_negative_diversity(self):
        with pytest.raises(ValidationError):
            GenerationStats(f_best=0.9, f_avg=0.6, f_min=0.4, diversity=-0.1,
                            evaluations=10)


class TestPopulation:
    def test_negative_generation(self, rnd):
        with pytest.raises(ValidationError):
            Population(members=(Individual(genome=random_genome(rnd)),),
                       generation=-1)


class TestRunConfig:
    def test_defaults_valid(self):
        cfg = RunConfig(target=onehot(3))
        assert cfg.population_size == 50
        assert cfg.max_generations == 50
        assert cfg.base_crossover_prob == 0.7
        assert cfg.base_mutation_prob == 0.02
        assert cfg.effective_k_c == 0.7
        assert cfg.effective_k_m == 0.02

    @pytest.mark.parametrize(
        "overrides",
        [
            dict(population_size=1),
            dict(max_generations=0),
            dict(epsilon=0.0),
            dict(epsilon=1.0),
            dict(genome_length=0),
            dict(base_crossover_prob=1.5),
            dict(k_c=-0.1),
            dict(rng_seed=-1),
            dict(surrogate_beta=0.0),
            dict(pool_size=0),
        ],
    )
    def test_invariants(self, overrides):
        kwargs = dict(target=onehot(3))
        kwargs.update(overrides)
        with pytest.raises(ConfigInvalid):
            RunConfig(**kwargs)

    def test_bridge_requires_worker_and_image(self):
        from evoexpr.types import EvaluatorKind

        with pytest.raises(ConfigInvalid):
            RunConfig(target=onehot(3), evaluator=EvaluatorKind.BRIDGE)
        RunConfig(
            target=onehot(3),
            evaluator=EvaluatorKind.BRIDGE,
            worker_command="worker --stub",
            image_ref="face.png",
        )
