"""Operator-facing command line: single runs, parameter sweeps, and the
random-genome occupancy study.  Everything emits plot-ready CSV; figures
are left to the user's own tooling.

Config files are flat key = value text (one pair per line, '#' comments,
blank lines ignored); every key has a command-line flag of the same name
which takes precedence.  Exit codes: 0 success, 2 invalid configuration,
3 evaluator failure, 4 I/O failure.
"""

from __future__ import annotations

import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import click

from . import engine
from .bridge import BridgeClient, BridgeConfig, BridgeError
from .engine import ArchiveRecord, RngState, RunResult
from .fitness import EvaluatorFailure, EvaluatorInterface
from .surrogate import (
    SurrogateEvaluator,
    default_prototypes,
    load_table,
    occupancy_study,
    with_identity_bias,
)
from .types import (
    CLASS_NAMES,
    ConfigInvalid,
    DistanceMetric,
    EvaluatorKind,
    ExpressionVector,
    RunConfig,
    SelectionStrategy,
    ValidationError,
    format_real,
    validate_target,
)

EXIT_CONFIG = 2
EXIT_EVALUATOR = 3
EXIT_IO = 4

STATS_HEADER = "generation,f_best,f_avg,f_min,distance_best,diversity,evaluations"
ARCHIVE_HEADER = "generation\tfitness\tdistance\tgenome\texpression\tphenotype_ref"
SWEEP_HEADER = (
    "axis,cell,population,generations,seed,generation,individual,fitness,distance"
)

DEFAULT_GRID = "30x80,50x50"

# Compound targets alongside the 7 one-hot classes, in recognizer order
# anger, disgust, fear, happy, sad, surprise, neutral.
COMPOUND_TARGETS = {
    "compound_happy_surprise": (0.0, 0.0, 0.0, 0.3, 0.0, 0.7, 0.0),
    "compound_happy_sad": (0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0),
    "compound_anger_disgust_fear": (0.3, 0.3, 0.4, 0.0, 0.0, 0.0, 0.0),
}


@dataclass
class RunReport:
    """A finished command: the engine result plus where its files went."""

    result: RunResult
    stats_path: Path
    archive_path: Path
    duration_s: float


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "1", "yes", "on"):
        return True
    if text in ("false", "0", "no", "off"):
        return False
    raise ConfigInvalid(f"not a boolean: {value!r}")


def _parse_int(value) -> int:
    try:
        return int(str(value), 10)
    except ValueError as e:
        raise ConfigInvalid(f"not an integer: {value!r}") from e


def _parse_float(value) -> float:
    try:
        return float(value)
    except ValueError as e:
        raise ConfigInvalid(f"not a number: {value!r}") from e


def _parse_target(value) -> ExpressionVector:
    if isinstance(value, ExpressionVector):
        return value
    try:
        parts = [float(p) for p in str(value).split(",")]
    except ValueError as e:
        raise ConfigInvalid(f"unparseable target: {value!r}") from e
    return validate_target(parts)


def _parse_choice(enum_cls):
    def parse(value):
        try:
            return enum_cls(str(value).strip().lower())
        except ValueError as e:
            options = ", ".join(m.value for m in enum_cls)
            raise ConfigInvalid(
                f"invalid value {value!r}; choose from: {options}"
            ) from e

    return parse


# config key -> (RunConfig field, parser)
CONFIG_KEYS = {
    "target": ("target", _parse_target),
    "genome_length": ("genome_length", _parse_int),
    "population": ("population_size", _parse_int),
    "generations": ("max_generations", _parse_int),
    "pc": ("base_crossover_prob", _parse_float),
    "pm": ("base_mutation_prob", _parse_float),
    "adaptive": ("adaptive", _parse_bool),
    "kc": ("k_c", _parse_float),
    "km": ("k_m", _parse_float),
    "selection": ("selection_strategy", _parse_choice(SelectionStrategy)),
    "metric": ("distance_metric", _parse_choice(DistanceMetric)),
    "epsilon": ("epsilon", _parse_float),
    "seed": ("rng_seed", _parse_int),
    "evaluator": ("evaluator", _parse_choice(EvaluatorKind)),
    "beta": ("surrogate_beta", _parse_float),
    "identity_bias_seed": ("identity_bias_seed", _parse_int),
    "table": ("prototype_table", str),
    "worker_cmd": ("worker_command", str),
    "image_ref": ("image_ref", str),
    "handshake_timeout_ms": ("handshake_timeout_ms", _parse_int),
    "request_timeout_ms": ("request_timeout_ms", _parse_int),
    "max_retries": ("max_retries", _parse_int),
    "pool_size": ("pool_size", _parse_int),
}

DEFAULT_TARGET = (0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0)  # one-hot happy


def parse_config_file(path) -> dict:
    """Read a flat key = value config document."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigInvalid(f"cannot read config file {path}: {e}") from e
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigInvalid(
                f"{path}:{lineno}: expected 'key = value', got {line!r}"
            )
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


def build_run_config(values: dict) -> RunConfig:
    """Turn merged config-file/flag values into a validated RunConfig."""
    kwargs = {"target": validate_target(DEFAULT_TARGET)}
    for key, value in values.items():
        if value is None:
            continue
        if key not in CONFIG_KEYS:
            raise ConfigInvalid(f"unknown config key: {key!r}")
        field, parser = CONFIG_KEYS[key]
        kwargs[field] = parser(value)
    return RunConfig(**kwargs)


def load_merged_config(config_path, flag_values: dict) -> dict:
    values = parse_config_file(config_path) if config_path else {}
    for key, value in flag_values.items():
        if value is not None:
            values[key] = value
    return values


def build_evaluator(config: RunConfig) -> EvaluatorInterface:
    """Evaluator factory.

    For the surrogate, --beta applies to the built-in table; a table file
    brings its own sharpness and bias.  --identity-bias-seed re-biases
    either table.
    """
    if config.evaluator is EvaluatorKind.BRIDGE:
        bridge_config = BridgeConfig(
            worker_command=config.worker_command,
            image_ref=config.image_ref,
            handshake_timeout_ms=config.handshake_timeout_ms,
            request_timeout_ms=config.request_timeout_ms,
            max_retries=config.max_retries,
            pool_size=config.pool_size,
        )
        return BridgeClient(bridge_config, config.genome_length)
    if config.prototype_table:
        try:
            table = load_table(config.prototype_table)
        except OSError as e:
            raise ConfigInvalid(
                f"cannot read prototype table {config.prototype_table}: {e}"
            ) from e
        if table.genome_length != config.genome_length:
            raise ConfigInvalid(
                f"table genome length {table.genome_length} does not match "
                f"configured genome_length {config.genome_length}"
            )
    else:
        table = replace(
            default_prototypes(config.genome_length),
            sharpness=config.surrogate_beta,
        )
    if config.identity_bias_seed is not None:
        table = with_identity_bias(table, config.identity_bias_seed)
    return SurrogateEvaluator(table)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _stats_csv(result: RunResult) -> str:
    lines = [STATS_HEADER]
    for generation, st in enumerate(result.stats_trace):
        lines.append(
            ",".join(
                (
                    str(generation),
                    format_real(st.f_best),
                    format_real(st.f_avg),
                    format_real(st.f_min),
                    format_real(1.0 / st.f_best - 1.0),
                    format_real(st.diversity),
                    str(st.evaluations),
                )
            )
        )
    return "\n".join(lines) + "\n"


def _archive_line(record: ArchiveRecord) -> str:
    return "\t".join(
        (
            str(record.generation),
            format_real(record.fitness),
            format_real(1.0 / record.fitness - 1.0),
            record.genome.to_text(),
            record.expression.to_text(),
            record.phenotype_ref or "",
        )
    )


def execute_run(config: RunConfig, out_dir: Path) -> RunReport:
    """Run one search, streaming the archive to disk as evaluations land.

    Outputs appear only on success: the archive streams to a temp file
    that is renamed at the end, and stats are written after the run.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    archive_path = out_dir / "archive.tsv"
    stats_path = out_dir / "stats.csv"
    tmp_path = archive_path.with_suffix(".tsv.tmp")
    started = time.perf_counter()
    try:
        with open(tmp_path, "w", encoding="utf-8") as archive_file:
            archive_file.write(ARCHIVE_HEADER + "\n")

            def stream(generation, individuals):
                for ind in individuals:
                    record = ArchiveRecord(
                        generation=generation,
                        genome=ind.genome,
                        expression=ind.expression,
                        fitness=ind.fitness,
                        phenotype_ref=ind.phenotype_ref,
                    )
                    archive_file.write(_archive_line(record) + "\n")

            with build_evaluator(config) as evaluator:
                result = engine.run(config, evaluator, on_evaluate=stream)
    except BaseException:
        tmp_path.unlink(missing_ok=True)
        raise
    os.replace(tmp_path, archive_path)
    _atomic_write(stats_path, _stats_csv(result))
    return RunReport(
        result=result,
        stats_path=stats_path,
        archive_path=archive_path,
        duration_s=time.perf_counter() - started,
    )


def _echo_summary(report: RunReport) -> None:
    result = report.result
    click.echo(
        f"termination: {result.reason.value} after "
        f"{result.population.generation} generations"
    )
    click.echo(
        f"f_best: {result.f_best:.6f}  distance: {result.distance_best:.6f}  "
        f"evaluations: {result.total_evaluations}  "
        f"duration: {report.duration_s:.2f}s"
    )
    click.echo(f"stats: {report.stats_path}")
    click.echo(f"archive: {report.archive_path}")


def _guarded(body):
    try:
        body()
    except click.ClickException:
        raise
    except (ConfigInvalid, ValidationError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except (EvaluatorFailure, BridgeError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_EVALUATOR)
    except BrokenPipeError:
        # stdout was closed downstream (e.g. piped into head): exit with
        # the usual SIGPIPE convention, quietly.
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        sys.exit(128 + 13)
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_IO)


_SHARED_FLAGS = [
    click.option("--config", "config_path", type=str, default=None,
                 help="Flat key = value config file."),
    click.option("--target", type=str, default=None,
                 help="7 comma-separated class weights summing to 1 "
                      "(anger,disgust,fear,happy,sad,surprise,neutral)."),
    click.option("--genome-length", "genome_length", type=int, default=None),
    click.option("--population", type=int, default=None),
    click.option("--generations", type=int, default=None),
    click.option("--pc", type=float, default=None,
                 help="Base crossover probability."),
    click.option("--pm", type=float, default=None,
                 help="Base mutation probability."),
    click.option("--adaptive", type=click.BOOL, default=None,
                 help="Scale operator probabilities per individual."),
    click.option("--kc", type=float, default=None,
                 help="Adaptive crossover gain (defaults to pc)."),
    click.option("--km", type=float, default=None,
                 help="Adaptive mutation gain (defaults to pm)."),
    click.option("--selection", type=str, default=None,
                 help="roulette_elitist or sort_truncation."),
    click.option("--metric", type=str, default=None, help="l2 or l1."),
    click.option("--epsilon", type=float, default=None,
                 help="Stop when f_best >= 1 - epsilon."),
    click.option("--seed", type=int, default=None),
    click.option("--evaluator", type=str, default=None,
                 help="surrogate or bridge."),
    click.option("--beta", type=float, default=None,
                 help="Surrogate sharpness (built-in table only)."),
    click.option("--identity-bias-seed", "identity_bias_seed", type=int,
                 default=None, help="Seed for per-class recognizer bias."),
    click.option("--table", type=str, default=None,
                 help="Prototype table file for the surrogate."),
    click.option("--worker-cmd", "worker_cmd", type=str, default=None,
                 help="Command spawning the bridge worker."),
    click.option("--image-ref", "image_ref", type=str, default=None,
                 help="Source image reference passed to the worker."),
    click.option("--handshake-timeout-ms", "handshake_timeout_ms", type=int,
                 default=None),
    click.option("--request-timeout-ms", "request_timeout_ms", type=int,
                 default=None),
    click.option("--max-retries", "max_retries", type=int, default=None),
    click.option("--pool-size", "pool_size", type=int, default=None),
]


def _with_shared_flags(fn):
    for flag in reversed(_SHARED_FLAGS):
        fn = flag(fn)
    return fn


@click.group()
def main():
    """Evolutionary search for action-unit genomes hitting a target
    expression mix.

    Exit codes: 0 success, 2 invalid configuration, 3 evaluator failure,
    4 I/O failure (141 when output is cut off by a closed pipe).
    """


@main.command("run")
@_with_shared_flags
@click.option("--out-dir", "out_dir", type=str, default="out",
              help="Directory for stats.csv and archive.tsv.")
def cmd_run(config_path, out_dir, **flags):
    """Run one search and write its stats CSV and evaluation archive."""

    def body():
        values = load_merged_config(config_path, flags)
        out = Path(values.pop("out_dir", out_dir))
        config = build_run_config(values)
        report = execute_run(config, out)
        _echo_summary(report)

    _guarded(body)


@main.command("sweep")
@click.option("--axis", type=click.Choice(["population_generation", "target_class"]),
              required=True)
@click.option("--grid", type=str, default=DEFAULT_GRID, show_default=True,
              help="population_generation cells, e.g. '30x80,50x50'.")
@click.option("--seeds", "n_seeds", type=int, default=5, show_default=True,
              help="Seeded repeats per cell (seed, seed+1, ...).")
@_with_shared_flags
@click.option("--out-dir", "out_dir", type=str, default="out",
              help="Directory for sweep.csv.")
def cmd_sweep(axis, grid, n_seeds, config_path, out_dir, **flags):
    """Sweep population/generation budgets or target classes.

    Emits one long-form CSV row per evaluated individual, so per-generation
    fitness scatter plots can be reproduced directly.  A failed cell is
    recorded in sweep_failures.csv and the sweep continues.
    """

    def body():
        values = load_merged_config(config_path, flags)
        out = Path(values.pop("out_dir", out_dir))
        base = build_run_config(values)
        if n_seeds < 1:
            raise ConfigInvalid("--seeds must be >= 1")
        cells = _sweep_cells(axis, grid, base)
        rows = [SWEEP_HEADER]
        failures = []
        for label, cell_config in cells:
            for k in range(n_seeds):
                config = replace(cell_config, rng_seed=base.rng_seed + k)
                try:
                    result = _run_in_memory(config)
                except (EvaluatorFailure, BridgeError) as e:
                    failures.append((label, config.rng_seed, str(e)))
                    click.echo(
                        f"cell {label} seed {config.rng_seed}: FAILED ({e})",
                        err=True,
                    )
                    continue
                rows.extend(_sweep_rows(axis, label, config, result))
                click.echo(
                    f"cell {label} seed {config.rng_seed}: "
                    f"{result.reason.value} gen {result.population.generation} "
                    f"f_best {result.f_best:.4f}"
                )
        out.mkdir(parents=True, exist_ok=True)
        sweep_path = out / "sweep.csv"
        _atomic_write(sweep_path, "\n".join(rows) + "\n")
        click.echo(f"sweep: {sweep_path}")
        if failures:
            failures_path = out / "sweep_failures.csv"
            lines = ["cell,seed,error"]
            lines.extend(
                f"{label},{seed},{err.replace(',', ';')}"
                for label, seed, err in failures
            )
            _atomic_write(failures_path, "\n".join(lines) + "\n")
            click.echo(f"failed cells recorded in {failures_path}", err=True)

    _guarded(body)


def _sweep_cells(axis, grid, base: RunConfig):
    if axis == "population_generation":
        cells = []
        for part in filter(None, (p.strip() for p in grid.split(","))):
            size_text, sep, gens_text = part.partition("x")
            if not sep:
                raise ConfigInvalid(f"grid cell {part!r} is not SxG")
            size, gens = _parse_int(size_text), _parse_int(gens_text)
            cells.append(
                (
                    f"s{size}_g{gens}",
                    replace(base, population_size=size, max_generations=gens),
                )
            )
        if not cells:
            raise ConfigInvalid("empty population_generation grid")
        return cells
    cells = [
        (
            f"onehot_{name}",
            replace(
                base,
                target=validate_target(
                    tuple(1.0 if i == k else 0.0 for i in range(7))
                ),
            ),
        )
        for k, name in enumerate(CLASS_NAMES)
    ]
    cells.extend(
        (label, replace(base, target=validate_target(probs)))
        for label, probs in COMPOUND_TARGETS.items()
    )
    return cells


def _run_in_memory(config: RunConfig) -> RunResult:
    with build_evaluator(config) as evaluator:
        return engine.run(config, evaluator)


def _sweep_rows(axis, label, config: RunConfig, result: RunResult):
    rows = []
    index = 0
    current_generation = -1
    for record in result.archive:
        if record.generation != current_generation:
            current_generation = record.generation
            index = 0
        rows.append(
            ",".join(
                (
                    axis,
                    label,
                    str(config.population_size),
                    str(config.max_generations),
                    str(config.rng_seed),
                    str(record.generation),
                    str(index),
                    format_real(record.fitness),
                    format_real(1.0 / record.fitness - 1.0),
                )
            )
        )
        index += 1
    return rows


@main.command("occupancy")
@click.option("--samples", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--beta", type=float, default=None,
              help="Surrogate sharpness (built-in table only).")
@click.option("--table", type=str, default=None,
              help="Prototype table file.")
@click.option("--out-dir", "out_dir", type=str, default="out")
def cmd_occupancy(samples, seed, beta, table, out_dir):
    """Mean recognizer output over uniformly random genomes."""

    def body():
        if samples < 1:
            raise ConfigInvalid("--samples must be >= 1")
        if table:
            try:
                proto_table = load_table(table)
            except OSError as e:
                raise ConfigInvalid(f"cannot read prototype table {table}: {e}") from e
        else:
            proto_table = default_prototypes()
            if beta is not None:
                proto_table = replace(proto_table, sharpness=beta)
        rng = RngState(seed)
        mean = occupancy_study(proto_table, samples, rng)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "occupancy.csv"
        _atomic_write(
            path,
            ",".join(CLASS_NAMES)
            + "\n"
            + ",".join(format_real(p) for p in mean.probs)
            + "\n",
        )
        for name, p in zip(CLASS_NAMES, mean.probs):
            click.echo(f"{name}: {p:.4f}")
        click.echo(f"occupancy: {path}")

    _guarded(body)


if __name__ == "__main__":
    main()
