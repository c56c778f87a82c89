#!/usr/bin/env python3
"""Scriptable protocol-v1 worker for bridge-client tests.

Usage: stub_worker.py [mode] [genome_length] [state_path]

Modes select deliberate faults:
  echo            answer every evaluate with a one-hot of the argmax gene
                  bucket (index modulo 7); unique phenotype_ref per request
  wrong_length    handshake declares genome_length 10
  wrong_version   handshake declares protocol_version 2
  garbage_first   print one non-JSON line before behaving normally
  slow            sleep 2 s before answering evaluate
  exit_early      exit immediately, before reading anything
  exit_mid        exit without replying to the first evaluate
  bad_arity       return a 6-component expression
  low_sum         return an expression summing to 0.9995
  error           answer evaluate with ok=false
  fail_once       first process answers evaluate with ok=false; after a
                  restart (state file exists) behaves like echo
"""

import json
import os
import sys
import time


def canonical(values):
    return ",".join(f"{v:.17g}" for v in values)


def one_hot_of_argmax_bucket(genome_text):
    values = [float(p) for p in genome_text.split(",")]
    k = max(range(len(values)), key=lambda i: values[i]) % 7
    return canonical([1.0 if i == k else 0.0 for i in range(7)])


def reply(obj):
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "echo"
    genome_length = int(sys.argv[2]) if len(sys.argv) > 2 else 17
    state_path = sys.argv[3] if len(sys.argv) > 3 else None

    if mode == "exit_early":
        return 1
    if mode == "garbage_first":
        sys.stdout.write("%%% this is not json %%%\n")
        sys.stdout.flush()
    fail_this_process = False
    if mode == "fail_once":
        if state_path and not os.path.exists(state_path):
            open(state_path, "w").close()
            fail_this_process = True

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        req_id, op = req.get("id"), req.get("op")
        if op == "handshake":
            reply(
                {
                    "id": req_id,
                    "ok": True,
                    "protocol_version": 2 if mode == "wrong_version" else 1,
                    "genome_length": 10 if mode == "wrong_length" else genome_length,
                }
            )
        elif op == "evaluate":
            if mode == "slow":
                time.sleep(2.0)
            if mode == "exit_mid":
                return 3
            if mode == "error" or fail_this_process:
                reply({"id": req_id, "ok": False,
                       "error": "synthetic recognizer failure"})
                continue
            if mode == "bad_arity":
                reply({"id": req_id, "ok": True, "expression": "1,0,0,0,0,0"})
                continue
            if mode == "low_sum":
                scale = 0.9995
                expr = canonical([scale, 0, 0, 0, 0, 0, 0])
                reply({"id": req_id, "ok": True, "expression": expr,
                       "phenotype_ref": f"pheno/{req_id:06d}.png"})
                continue
            reply(
                {
                    "id": req_id,
                    "ok": True,
                    "expression": one_hot_of_argmax_bucket(req["genome"]),
                    "phenotype_ref": f"pheno/{req_id:06d}.png",
                }
            )
        elif op == "shutdown":
            reply({"id": req_id, "ok": True})
            return 0
        else:
            reply({"id": req_id, "ok": False, "error": f"unknown op {op!r}"})
    return 0


if __name__ == "__main__":
    sys.exit(main())
