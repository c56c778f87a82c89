"""Protocol-v1 request loop: UTF-8 line-delimited JSON over stdio.

One response line per request line, always, including error paths; a
malformed input line gets a MalformedRequest reply and the loop keeps
going.  Shutdown requests are acknowledged and exit the process with
code 0.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import PROTOCOL_VERSION
from .stub import StubTable, canonical, parse_genome, parse_table, score_expression


class WorkerState:
    def __init__(self, backend, out_dir: str):
        self.backend = backend
        self.out_dir = out_dir.rstrip("/")
        self.sessions = 0

    def handle(self, request: dict) -> tuple[dict, bool]:
        """Return (response, keep_running)."""
        req_id = request.get("id", 0)
        op = request.get("op")
        if op == "handshake":
            self.sessions += 1
            image_ref = request.get("image_ref", "")
            if hasattr(self.backend, "start_session"):
                self.backend.start_session(image_ref, self.sessions)
            return (
                {
                    "id": req_id,
                    "ok": True,
                    "protocol_version": PROTOCOL_VERSION,
                    "genome_length": self.backend.genome_length,
                },
                True,
            )
        if op == "evaluate":
            expression, phenotype_ref = self._evaluate(request, req_id)
            return (
                {
                    "id": req_id,
                    "ok": True,
                    "expression": expression,
                    "phenotype_ref": phenotype_ref,
                },
                True,
            )
        if op == "shutdown":
            return {"id": req_id, "ok": True}, False
        raise ValueError(f"unknown op: {op!r}")

    def _evaluate(self, request: dict, req_id: int) -> tuple[str, str]:
        genome_text = request.get("genome")
        if not isinstance(genome_text, str):
            raise ValueError("evaluate request lacks a genome")
        genome = parse_genome(genome_text, self.backend.genome_length)
        if hasattr(self.backend, "evaluate"):
            probs, phenotype_ref = self.backend.evaluate(genome, req_id)
            return canonical(probs), phenotype_ref
        probs = score_expression(genome, self.backend.table)
        placeholder = f"{self.out_dir}/stub-{self.sessions:03d}-{req_id:06d}.png"
        return canonical(probs), placeholder


class StubBackend:
    def __init__(self, table: StubTable):
        self.table = table

    @property
    def genome_length(self) -> int:
        return self.table.genome_length


def serve(state: WorkerState, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for raw in stdin:
        line = raw.strip()
        if not line:
            continue
        req_id = 0
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request is not a JSON object")
        except ValueError as e:
            _reply(stdout, {"id": 0, "ok": False,
                            "error": f"MalformedRequest: {e}"})
            continue
        req_id = request.get("id", 0)
        try:
            response, keep_running = state.handle(request)
        except Exception as e:  # never crash the loop on a bad request
            _reply(stdout, {"id": req_id, "ok": False, "error": str(e)})
            continue
        _reply(stdout, response)
        if not keep_running:
            return 0
    return 0


def _reply(stdout, obj: dict) -> None:
    stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="expr-worker",
        description="Evaluation worker speaking the line-delimited "
                    "expression protocol, version 1.",
    )
    parser.add_argument("--mode", choices=["stub", "adapter"], default="stub")
    parser.add_argument("--table", help="prototype table file (stub mode)")
    parser.add_argument("--generator", help="TorchScript generator (adapter)")
    parser.add_argument("--recognizer", help="TorchScript recognizer (adapter)")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--out-dir", default="phenotypes",
                        help="where adapter phenotypes (or stub placeholder "
                             "paths) live")
    args = parser.parse_args(argv)

    if args.mode == "stub":
        if not args.table:
            parser.error("stub mode requires --table")
        try:
            table = parse_table(args.table)
        except (OSError, ValueError) as e:
            parser.error(f"cannot load table: {e}")
        backend = StubBackend(table)
    else:
        if not (args.generator and args.recognizer):
            parser.error("adapter mode requires --generator and --recognizer")
        from .adapter import AdapterBackend

        backend = AdapterBackend(
            args.generator, args.recognizer, args.device, args.out_dir
        )

    return serve(WorkerState(backend, args.out_dir))


if __name__ == "__main__":
    sys.exit(main())
