import random
from collections import deque

import pytest

from evoexpr import AuGenome, ExpressionVector, RunConfig, validate_target


def onehot(k: int) -> ExpressionVector:
    return validate_target(tuple(1.0 if i == k else 0.0 for i in range(7)))


def random_genome(rnd: random.Random, m: int = 17) -> AuGenome:
    return AuGenome(tuple(rnd.random() for _ in range(m)))


def small_config(**overrides) -> RunConfig:
    defaults = dict(
        target=onehot(3),
        population_size=8,
        max_generations=10,
        rng_seed=1,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


class ScriptedRng:
    """Stand-in for RngState with predetermined draws, for hand-traced tests."""

    def __init__(self, uniforms=(), indices=()):
        self._uniforms = deque(uniforms)
        self._indices = deque(indices)
        self.draws = 0

    def uniform(self) -> float:
        self.draws += 1
        return self._uniforms.popleft()

    def index(self, n: int) -> int:
        self.draws += 1
        value = self._indices.popleft()
        assert 0 <= value < n, f"scripted index {value} out of range {n}"
        return value


@pytest.fixture
def rnd():
    return random.Random(20240817)
