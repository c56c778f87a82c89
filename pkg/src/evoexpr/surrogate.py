"""Deterministic analytic stand-in for a generator + recognizer pipeline.

Maps an action-unit genome straight to an expression vector: each emotion
class has a prototype AU pattern, and the output is a softmax over
negative squared distances to the prototypes.  Squared distance (rather
than cosine similarity) is used because the neutral prototype is the zero
vector, where cosine is undefined.

This exists to verify the optimizer at desk scale; it makes no claim of
psychological validity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
import math

import numpy as np

from .types import (
    AuGenome,
    CLASS_NAMES,
    ExpressionVector,
    LengthMismatch,
    NUM_CLASSES,
    ValidationError,
)
from .fitness import EvaluatorInterface

# Calibrated so single-class targets are reachable to distance ~0.016 while
# a random genome typically sits at distance > 1 and even the best of a
# 50-genome random population rarely lands below 0.1: convergence studies
# then measure actual search progress, not initialization luck.
DEFAULT_SHARPNESS = 1.5

# Index order of the 17 action units the shipped prototype table covers.
AU_ORDER = (1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 45)

# Which AUs each emotion class activates at full intensity.  AU14 and AU45
# deliberately belong to no class: they are free directions the recognizer
# ignores, so equally fit solutions can still differ.
CLASS_ACTIVE_AUS = {
    "anger": (4, 5, 7, 23),
    "disgust": (9, 10, 15),
    "fear": (1, 2, 4, 5, 7, 20, 26),
    "happy": (6, 12, 25),
    "sad": (1, 4, 15, 17),
    "surprise": (1, 2, 5, 25, 26),
    "neutral": (),
}

IDENTITY_BIAS_RANGE = 0.5


class UnsupportedGenomeLength(ValidationError):
    """No shipped prototype table exists for the requested genome length."""


@dataclass(frozen=True)
class PrototypeTable:
    """7 class prototypes (one per expression class) plus softmax sharpness.

    identity_bias holds per-class offsets added to the softmax scores; it
    models how much a specific face skews recognition, without modeling
    faces.
    """

    prototypes: tuple[AuGenome, ...]
    sharpness: float = DEFAULT_SHARPNESS
    identity_bias: tuple[float, ...] = (0.0,) * NUM_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "prototypes", tuple(self.prototypes))
        object.__setattr__(
            self, "identity_bias", tuple(float(b) for b in self.identity_bias)
        )
        if len(self.prototypes) != NUM_CLASSES:
            raise ValidationError(
                f"expected {NUM_CLASSES} prototypes, got {len(self.prototypes)}"
            )
        lengths = {len(p) for p in self.prototypes}
        if len(lengths) != 1:
            raise LengthMismatch(f"prototype lengths differ: {sorted(lengths)}")
        if not (math.isfinite(self.sharpness) and self.sharpness > 0.0):
            raise ValidationError(f"sharpness must be positive: {self.sharpness!r}")
        if len(self.identity_bias) != NUM_CLASSES:
            raise ValidationError("identity_bias must have one entry per class")
        if not all(math.isfinite(b) for b in self.identity_bias):
            raise ValidationError("identity_bias entries must be finite")

    @property
    def genome_length(self) -> int:
        return len(self.prototypes[0])

    @cached_property
    def _matrix(self) -> np.ndarray:
        return np.array([p.values for p in self.prototypes], dtype=float)

    @cached_property
    def _bias(self) -> np.ndarray:
        return np.array(self.identity_bias, dtype=float)


def surrogate_evaluate(genome: AuGenome, table: PrototypeTable) -> ExpressionVector:
    """Softmax over -sharpness * ||genome - prototype_k||^2 + bias_k.

    Output is a strict probability vector: all components positive,
    summing to 1 within 1e-9.
    """
    if len(genome) != table.genome_length:
        raise LengthMismatch(
            f"genome length {len(genome)} does not match prototypes "
            f"of length {table.genome_length}"
        )
    g = np.asarray(genome.values, dtype=float)
    diff = table._matrix - g
    scores = table._bias - table.sharpness * np.einsum("ij,ij->i", diff, diff)
    scores -= scores.max()
    s = np.exp(scores)
    p = s / s.sum()
    return ExpressionVector(tuple(float(x) for x in p))


def default_prototypes(genome_length: int = len(AU_ORDER)) -> PrototypeTable:
    """The shipped FACS-inspired table over the 17-AU index order.

    Only genome length 17 is supported; other lengths need a custom table.
    """
    if genome_length != len(AU_ORDER):
        raise UnsupportedGenomeLength(
            f"shipped prototype table covers genome length {len(AU_ORDER)}, "
            f"got {genome_length}"
        )
    position = {au: i for i, au in enumerate(AU_ORDER)}
    prototypes = []
    for name in CLASS_NAMES:
        values = [0.0] * len(AU_ORDER)
        for au in CLASS_ACTIVE_AUS[name]:
            values[position[au]] = 1.0
        prototypes.append(AuGenome(tuple(values)))
    return PrototypeTable(prototypes=tuple(prototypes))


def identity_bias_offsets(seed: int) -> tuple[float, ...]:
    """Seeded per-class score offsets, uniform on [-0.5, 0.5]."""
    gen = np.random.Generator(np.random.PCG64(seed))
    draws = gen.uniform(-IDENTITY_BIAS_RANGE, IDENTITY_BIAS_RANGE, NUM_CLASSES)
    return tuple(float(b) for b in draws)


def with_identity_bias(table: PrototypeTable, seed: int) -> PrototypeTable:
    return replace(table, identity_bias=identity_bias_offsets(seed))


def occupancy_study(table: PrototypeTable, samples: int, rng) -> ExpressionVector:
    """Mean expression over uniformly random genomes.

    Characterizes how much of the search space each class occupies; classes
    whose prototypes activate more AUs tend to claim more of it.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    m = table.genome_length
    total = np.zeros(NUM_CLASSES)
    for _ in range(samples):
        genome = AuGenome(tuple(rng.uniform() for _ in range(m)))
        total += surrogate_evaluate(genome, table).probs
    mean = total / samples
    return ExpressionVector(tuple(float(x) for x in mean))


def save_table(table: PrototypeTable, path) -> None:
    """Write a table as plain text: one class per row, name then intensities.

    Sharpness and bias are carried in '#'-prefixed metadata lines so a
    saved table round-trips exactly.
    """
    lines = [
        "# prototype table: class name, then comma-separated AU intensities",
        f"# sharpness: {_fmt(table.sharpness)}",
        "# bias: " + ",".join(_fmt(b) for b in table.identity_bias),
    ]
    for name, proto in zip(CLASS_NAMES, table.prototypes):
        lines.append(name + "," + proto.to_text())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_table(path) -> PrototypeTable:
    """Parse a table file written by save_table (or hand-authored)."""
    sharpness = DEFAULT_SHARPNESS
    bias = (0.0,) * NUM_CLASSES
    rows: dict[str, AuGenome] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta = line[1:].strip()
                if meta.startswith("sharpness:"):
                    sharpness = float(meta.split(":", 1)[1])
                elif meta.startswith("bias:"):
                    bias = tuple(
                        float(v) for v in meta.split(":", 1)[1].split(",")
                    )
                continue
            name, _, values = line.partition(",")
            name = name.strip().lower()
            if name not in CLASS_NAMES:
                raise ValidationError(f"unknown class name in table: {name!r}")
            rows[name] = AuGenome.from_text(values)
    missing = [name for name in CLASS_NAMES if name not in rows]
    if missing:
        raise ValidationError(f"table is missing classes: {missing}")
    return PrototypeTable(
        prototypes=tuple(rows[name] for name in CLASS_NAMES),
        sharpness=sharpness,
        identity_bias=bias,
    )


def _fmt(x: float) -> str:
    return f"{x:.17g}"


class SurrogateEvaluator(EvaluatorInterface):
    """EvaluatorInterface over a prototype table; supplies no phenotypes."""

    def __init__(self, table: PrototypeTable | None = None):
        self.table = table if table is not None else default_prototypes()

    def evaluate(self, genome: AuGenome) -> tuple[ExpressionVector, str | None]:
        return surrogate_evaluate(genome, self.table), None
