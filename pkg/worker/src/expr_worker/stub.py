"""Analytic evaluation backend: prototype table in, expression out.

Pure standard-library reimplementation of the softmax-over-squared-
distance scoring, so protocol conformance suites can compare this worker
against an independent implementation component-for-component.

Table file format (shared with the search engine):
  - '# sharpness: <x>' and '# bias: <b1,...,b7>' metadata lines (optional,
    defaults 1.5 and zeros)
  - other '#' lines are comments
  - one row per class: '<name>,<v1>,...,<vM>' with intensities in [0, 1]
"""

from __future__ import annotations

import math
from dataclasses import dataclass

CLASS_NAMES = ("anger", "disgust", "fear", "happy", "sad", "surprise", "neutral")
DEFAULT_SHARPNESS = 1.5


@dataclass(frozen=True)
class StubTable:
    prototypes: tuple[tuple[float, ...], ...]
    sharpness: float
    bias: tuple[float, ...]

    @property
    def genome_length(self) -> int:
        return len(self.prototypes[0])


def parse_table(path) -> StubTable:
    sharpness = DEFAULT_SHARPNESS
    bias = (0.0,) * 7
    rows: dict[str, tuple[float, ...]] = {}
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
                    bias = tuple(float(v) for v in meta.split(":", 1)[1].split(","))
                continue
            name, _, values = line.partition(",")
            name = name.strip().lower()
            if name not in CLASS_NAMES:
                raise ValueError(f"unknown class name in table: {name!r}")
            rows[name] = tuple(float(v) for v in values.split(","))
    missing = [name for name in CLASS_NAMES if name not in rows]
    if missing:
        raise ValueError(f"table is missing classes: {missing}")
    lengths = {len(r) for r in rows.values()}
    if len(lengths) != 1:
        raise ValueError(f"prototype rows differ in length: {sorted(lengths)}")
    if len(bias) != 7:
        raise ValueError("bias must have 7 entries")
    if not sharpness > 0.0:
        raise ValueError("sharpness must be positive")
    return StubTable(
        prototypes=tuple(rows[name] for name in CLASS_NAMES),
        sharpness=sharpness,
        bias=bias,
    )


def parse_genome(text: str, expected_length: int) -> tuple[float, ...]:
    values = tuple(float(p) for p in text.split(","))
    if len(values) != expected_length:
        raise ValueError(
            f"genome has {len(values)} components, expected {expected_length}"
        )
    for v in values:
        if not math.isfinite(v) or not 0.0 <= v <= 1.0:
            raise ValueError(f"genome component outside [0, 1]: {v!r}")
    return values


def score_expression(genome: tuple[float, ...], table: StubTable) -> tuple[float, ...]:
    """Softmax over -sharpness * squared distance to each prototype + bias."""
    scores = []
    for prototype, bias in zip(table.prototypes, table.bias):
        sq = 0.0
        for g, p in zip(genome, prototype):
            d = p - g
            sq += d * d
        scores.append(bias - table.sharpness * sq)
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    total = math.fsum(exps)
    return tuple(e / total for e in exps)


def canonical(values) -> str:
    return ",".join(f"{v:.17g}" for v in values)
