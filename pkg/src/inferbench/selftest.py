"""Built-in models-under-test, spoken over the real wire protocol.

These let the harness test itself end to end without any external model:

  echo            outputs == inputs
  delay:<ms>      echo after sleeping <ms> per batch
  alloc:<MiB>     echo, but allocate and touch <MiB> on the first batch
  upper           upper-cased inputs
  translator-toy  reverses word order (a deterministic "translation" whose
                  BLEU against crafted references is known in advance)

Faults are injectable for harness error-path tests via --fault; a startup
sleep (--startup-sleep) exercises measurement-start semantics.
"""

from __future__ import annotations

import sys
import time

from . import protocol
from .scenario import read_offline_file


def transform_for_mode(mode: str):
    if mode == "echo":
        return lambda s: s
    if mode == "upper":
        return lambda s: s.upper()
    if mode == "translator-toy":
        return lambda s: " ".join(reversed(s.split()))
    if mode.startswith("delay:") or mode.startswith("alloc:"):
        return lambda s: s
    raise ValueError(f"unknown selftest mode: {mode!r}")


def _mode_delay_s(mode: str) -> float:
    if mode.startswith("delay:"):
        return float(mode.split(":", 1)[1]) / 1000.0
    return 0.0


def _mode_alloc_bytes(mode: str) -> int:
    if mode.startswith("alloc:"):
        return int(mode.split(":", 1)[1]) * 2**20
    return 0


def _precise_sleep(delay_s: float):
    # time.sleep alone overshoots by the OS timer slack (~0.5 ms); sleep
    # most of the interval, then spin the remainder so the delay mode is an
    # accurate latency fixture
    target = time.monotonic() + delay_s
    coarse = delay_s - 0.002
    if coarse > 0:
        time.sleep(coarse)
    while time.monotonic() < target:
        pass


def serve(mode: str, params: int = 0, name: str = "selftest",
          startup_sleep_s: float = 0.0, fault: str | None = None,
          fault_at: int = 0, chatter: bool = False, extra_delay_ms: float = 0.0,
          stdin=None, stdout=None) -> int:
    """Run the selftest model loop until stdin closes. Returns exit status."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    transform = transform_for_mode(mode)
    delay_s = _mode_delay_s(mode) + extra_delay_ms / 1000.0
    alloc_bytes = _mode_alloc_bytes(mode)
    ballast = None

    if chatter:
        stdout.write("loading checkpoint...\n")
        stdout.flush()
    if startup_sleep_s > 0:
        time.sleep(startup_sleep_s)
    stdout.write(protocol.encode_ready(params, name))
    stdout.flush()

    first_batch = True
    for raw in stdin:
        raw = raw.rstrip("\n")
        if not raw:
            continue
        decoded = protocol.decode_request(raw)
        if decoded[0] == "file":
            _, path, idx = decoded
            inputs = read_offline_file(path)
        else:
            inputs, idx = decoded

        if first_batch and alloc_bytes:
            # touch every page so the allocation lands in RSS
            ballast = bytearray(alloc_bytes)
            for off in range(0, alloc_bytes, 4096):
                ballast[off] = 1
            first_batch = False
        if delay_s:
            _precise_sleep(delay_s)

        outputs = [transform(x) for x in inputs]
        if fault and idx >= fault_at:
            if fault == "short-output":
                outputs = outputs[:-1]
            elif fault == "bad-index":
                idx += 1
            elif fault == "not-json":
                stdout.write("this is not json\n")
                stdout.flush()
                continue
            elif fault == "crash":
                print("selftest: injected crash", file=sys.stderr)
                return 17
            else:
                raise ValueError(f"unknown fault: {fault!r}")
        stdout.write(protocol.encode_response(outputs, idx))
        stdout.flush()
    return 0
