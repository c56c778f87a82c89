"""Client for an external evaluation worker speaking protocol version 1.

The worker is a subprocess exchanging UTF-8, line-delimited JSON objects
over its standard input/output: one object per line, a trailing newline
terminating each message, unknown fields ignored.  See PROTOCOL.md for
the bit-exact message layout and a golden transcript.

Lifecycle: spawn, handshake (verifies protocol version and genome
length), any number of evaluate requests, then shutdown.  Shutdown is
sent on normal termination and on abort, and the worker process is
always reaped.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .fitness import EvaluatorFailure, EvaluatorInterface
from .types import AuGenome, ConfigInvalid, ExpressionVector, NUM_CLASSES

PROTOCOL_VERSION = 1

# Recognizer outputs carry softmax float noise; accept near-1 sums and
# renormalize exactly.
EXPRESSION_SUM_TOLERANCE = 1e-3

_SHUTDOWN_GRACE_S = 2.0


class BridgeError(RuntimeError):
    """Base for all worker-channel failures."""


class SpawnFailure(BridgeError):
    """The worker command could not be started."""


class HandshakeTimeout(BridgeError):
    """No (valid) handshake response arrived in time."""


class VersionMismatch(BridgeError):
    """The worker speaks a different protocol version."""


class GenomeLengthMismatch(BridgeError):
    """The worker's declared genome length differs from the run's."""


class RequestTimeout(BridgeError):
    """No response to a request arrived in time."""


class WorkerError(BridgeError):
    """The worker answered ok=false; its error string is the message."""


class WorkerExited(BridgeError):
    """The worker process exited before responding."""


class MalformedResponse(BridgeError):
    """A response line could not be parsed or violates the protocol."""


@dataclass(frozen=True)
class BridgeConfig:
    """How to reach the worker and what to tell it.

    image_ref names the source face the worker applies genomes to; it is
    fixed for the lifetime of a client (one image per run).
    """

    worker_command: str
    image_ref: str
    handshake_timeout_ms: int = 30000
    request_timeout_ms: int = 60000
    max_retries: int = 0
    pool_size: int = 1

    def __post_init__(self):
        if not self.worker_command:
            raise ConfigInvalid("worker_command must be non-empty")
        if not self.image_ref:
            raise ConfigInvalid("image_ref must be non-empty")
        if self.handshake_timeout_ms <= 0 or self.request_timeout_ms <= 0:
            raise ConfigInvalid("bridge timeouts must be positive")
        if self.max_retries < 0:
            raise ConfigInvalid("max_retries must be nonnegative")
        if self.pool_size < 1:
            raise ConfigInvalid("pool_size must be >= 1")


class _WorkerChannel:
    """One worker subprocess and its request/response stream.

    Request ids increase monotonically per channel, and exactly one
    request is outstanding at a time; a response with any other id is a
    protocol violation.
    """

    def __init__(self, config: BridgeConfig):
        self._config = config
        self._next_id = 1
        self._lines: queue.Queue = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                shlex.split(config.worker_command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as e:
            raise SpawnFailure(f"cannot spawn worker: {e}") from e
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def request(self, op: str, timeout_ms: int, **fields) -> dict:
        req_id = self._next_id
        self._next_id += 1
        payload = {"id": req_id, "op": op, **fields}
        line = json.dumps(payload, separators=(",", ":"))
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise WorkerExited(f"worker pipe closed while sending: {e}") from e
        return self._read_response(req_id, timeout_ms)

    def _read_response(self, req_id: int, timeout_ms: int) -> dict:
        deadline = time.monotonic() + timeout_ms / 1000.0
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise RequestTimeout(
                    f"no response to request {req_id} within {timeout_ms} ms"
                )
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                raise RequestTimeout(
                    f"no response to request {req_id} within {timeout_ms} ms"
                ) from None
            if line is None:
                code = self._proc.poll()
                raise WorkerExited(
                    f"worker exited (code {code}) before responding to "
                    f"request {req_id}"
                )
            stripped = line.strip()
            if not stripped:
                continue
            try:
                resp = json.loads(stripped)
            except ValueError as e:
                raise MalformedResponse(
                    f"unparseable response line: {stripped!r}"
                ) from e
            if not isinstance(resp, dict):
                raise MalformedResponse(f"response is not an object: {stripped!r}")
            if resp.get("id") != req_id:
                raise MalformedResponse(
                    f"response id {resp.get('id')!r} does not match "
                    f"outstanding request {req_id}"
                )
            if not resp.get("ok", False):
                raise WorkerError(str(resp.get("error", "worker reported failure")))
            return resp

    def alive(self) -> bool:
        return self._proc.poll() is None

    def close(self) -> None:
        """Send shutdown if possible, then make sure the process is reaped."""
        if self._proc.poll() is None:
            try:
                line = json.dumps(
                    {"id": self._next_id, "op": "shutdown"}, separators=(",", ":")
                )
                self._next_id += 1
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError, ValueError):
                pass
            try:
                self._proc.wait(timeout=_SHUTDOWN_GRACE_S)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc.wait()
        try:
            self._proc.stdin.close()
        except OSError:
            pass


def handshake(channel: _WorkerChannel, config: BridgeConfig,
              expected_genome_length: int) -> tuple[int, int]:
    """Verify protocol version and genome length with a fresh worker."""
    try:
        resp = channel.request(
            "handshake", config.handshake_timeout_ms, image_ref=config.image_ref
        )
    except RequestTimeout as e:
        raise HandshakeTimeout(str(e)) from e
    version = resp.get("protocol_version")
    if version != PROTOCOL_VERSION:
        raise VersionMismatch(
            f"worker speaks protocol {version!r}, expected {PROTOCOL_VERSION}"
        )
    length = resp.get("genome_length")
    if length != expected_genome_length:
        raise GenomeLengthMismatch(
            f"worker declares genome length {length!r}, "
            f"run expects {expected_genome_length}"
        )
    return version, length


def _parse_expression(resp: dict) -> ExpressionVector:
    text = resp.get("expression")
    if not isinstance(text, str):
        raise MalformedResponse(f"response lacks an expression: {resp!r}")
    parts = text.split(",")
    if len(parts) != NUM_CLASSES:
        raise MalformedResponse(
            f"expression has {len(parts)} components, expected {NUM_CLASSES}"
        )
    try:
        values = [float(p) for p in parts]
    except ValueError as e:
        raise MalformedResponse(f"unparseable expression: {text!r}") from e
    if any(not math.isfinite(v) or v < 0.0 for v in values):
        raise MalformedResponse(f"expression components invalid: {text!r}")
    total = math.fsum(values)
    if abs(total - 1.0) > EXPRESSION_SUM_TOLERANCE:
        raise MalformedResponse(
            f"expression sums to {total!r}, outside tolerance "
            f"{EXPRESSION_SUM_TOLERANCE}"
        )
    return ExpressionVector(tuple(v / total for v in values))


class BridgeClient(EvaluatorInterface):
    """EvaluatorInterface over one or more worker processes.

    With pool_size > 1, batch evaluations fan out across workers (one lane
    per worker, requests never interleaved on a channel) and results are
    merged back in genome order.
    """

    def __init__(self, config: BridgeConfig, genome_length: int):
        self.config = config
        self.genome_length = genome_length
        self._lanes: list[_WorkerChannel | None] = [None] * config.pool_size

    def _lane(self, idx: int) -> _WorkerChannel:
        lane = self._lanes[idx]
        if lane is None or not lane.alive():
            lane = _WorkerChannel(self.config)
            handshake(lane, self.config, self.genome_length)
            self._lanes[idx] = lane
        return lane

    def _restart_lane(self, idx: int) -> None:
        lane = self._lanes[idx]
        if lane is not None:
            lane.close()
        self._lanes[idx] = None

    def bridge_evaluate(
        self, genome: AuGenome, lane_idx: int = 0
    ) -> tuple[ExpressionVector, str | None]:
        """One evaluate round-trip; raises the specific protocol error."""
        lane = self._lane(lane_idx)
        resp = lane.request(
            "evaluate", self.config.request_timeout_ms, genome=genome.to_text()
        )
        expression = _parse_expression(resp)
        phenotype_ref = resp.get("phenotype_ref")
        if phenotype_ref is not None and not isinstance(phenotype_ref, str):
            raise MalformedResponse(f"phenotype_ref is not a string: {resp!r}")
        return expression, phenotype_ref

    def evaluate(self, genome: AuGenome) -> tuple[ExpressionVector, str | None]:
        return self._evaluate_with_retries(genome, 0)

    def _evaluate_with_retries(self, genome: AuGenome, lane_idx: int):
        last: BridgeError | None = None
        for _ in range(self.config.max_retries + 1):
            try:
                return self.bridge_evaluate(genome, lane_idx)
            except BridgeError as e:
                last = e
                self._restart_lane(lane_idx)
        raise EvaluatorFailure(f"bridge evaluation failed: {last}") from last

    def evaluate_batch(self, genomes):
        if self.config.pool_size == 1 or len(genomes) <= 1:
            return [self.evaluate(g) for g in genomes]
        lanes = min(self.config.pool_size, len(genomes))
        results: list = [None] * len(genomes)

        def work(lane_idx: int) -> None:
            for i in range(lane_idx, len(genomes), lanes):
                results[i] = self._evaluate_with_retries(genomes[i], lane_idx)

        with ThreadPoolExecutor(max_workers=lanes) as pool:
            futures = [pool.submit(work, idx) for idx in range(lanes)]
            for fut in futures:
                fut.result()
        return results

    def close(self) -> None:
        for idx in range(len(self._lanes)):
            lane = self._lanes[idx]
            if lane is not None:
                lane.close()
                self._lanes[idx] = None
