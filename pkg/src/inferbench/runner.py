"""Spawns the model-under-test and drives a batch plan through the protocol.

Measurement starts at the ready handshake: nothing the model does while
loading (checkpoint reads, warm caches) enters any metric. Dispatch is
closed-loop: the next request is written only after the previous response
has been fully read, so per-batch latency is well defined.

Timestamps are monotonic; the reader runs on its own thread so every read
is bounded by the response timeout and a dying model can never hang the
harness.
"""

from __future__ import annotations

import json
import os
import queue
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import protocol
from .errors import (
    ConfigError,
    ModelCrashed,
    ProtocolError,
    ReadyTimeout,
    ResponseTimeout,
    SpawnFailure,
)
from .scenario import BatchPlan, OfflineJob

DEFAULT_STARTUP_TIMEOUT_S = 300.0
DEFAULT_RESPONSE_TIMEOUT_S = 600.0
EXIT_GRACE_S = 10.0


@dataclass
class ModelManifest:
    name: str
    start_command: list[str]
    workdir: str = "."
    env: dict[str, str] = field(default_factory=dict)
    setup_command: list[str] | None = None
    params_override: int | None = None
    startup_timeout_s: float = DEFAULT_STARTUP_TIMEOUT_S
    response_timeout_s: float = DEFAULT_RESPONSE_TIMEOUT_S

    def __post_init__(self):
        if not self.start_command:
            raise ConfigError("manifest start_command must be non-empty")

    @classmethod
    def from_file(cls, path: str | Path) -> "ModelManifest":
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
        known = {
            "name", "start_command", "workdir", "env", "setup_command",
            "params_override", "startup_timeout_s", "response_timeout_s",
        }
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"{path}: unknown manifest keys {sorted(unknown)}")
        if "name" not in obj or "start_command" not in obj:
            raise ConfigError(f"{path}: manifest needs name and start_command")
        return cls(**obj)


@dataclass
class BatchRecord:
    dispatch_ts: float
    response_ts: float
    size: int
    outputs: list[str]


@dataclass
class RunRecord:
    ready_at: float
    batches: list[BatchRecord] = field(default_factory=list)
    run_end: float = 0.0
    peak_rss_bytes: int = 0
    exit_status: int | None = None

    @property
    def total_instances(self) -> int:
        return sum(b.size for b in self.batches)

    @property
    def outputs(self) -> list[str]:
        return [out for b in self.batches for out in b.outputs]


class _LineReader:
    """Reads model stdout lines on a thread so gets can be time-bounded."""

    _EOF = object()

    def __init__(self, stream):
        self._q = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream):
        for line in stream:
            # timestamp here, on the thread that performed the read: latency
            # then excludes queue hand-off and the consumer's wakeup delay
            self._q.put((time.monotonic(), line))
        self._q.put((time.monotonic(), self._EOF))

    def get_timed(self, timeout: float) -> tuple[float, str | None]:
        """(arrival timestamp, line without its newline), line None on EOF."""
        try:
            ts, item = self._q.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError
        if item is self._EOF:
            return ts, None
        return ts, item.rstrip("\n")

    def get(self, timeout: float) -> str | None:
        """One line without its newline, or None on EOF."""
        return self.get_timed(timeout)[1]


class ModelConnection:
    def __init__(self, proc: subprocess.Popen, manifest: ModelManifest,
                 ready: protocol.ReadySignal, ready_at: float, reader: _LineReader):
        self.proc = proc
        self.manifest = manifest
        self.ready = ready
        self.ready_at = ready_at
        self.reader = reader

    @property
    def params(self) -> int:
        if self.manifest.params_override is not None:
            return self.manifest.params_override
        return self.ready.params

    def close(self) -> int:
        """Close stdin, give the model a grace period, then kill."""
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            return self.proc.wait(timeout=EXIT_GRACE_S)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            return self.proc.wait()


def run_setup(manifest: ModelManifest) -> None:
    """Run the manifest's setup command (checkpoint download etc.), if any."""
    if not manifest.setup_command:
        return
    result = subprocess.run(
        manifest.setup_command,
        cwd=manifest.workdir,
        env={**os.environ, **manifest.env},
    )
    if result.returncode != 0:
        raise SpawnFailure(f"setup command failed with status {result.returncode}")


def spawn_and_handshake(manifest: ModelManifest,
                        log=lambda msg: print(msg, file=sys.stderr)) -> ModelConnection:
    """Start the model process and wait for its ready line.

    Startup chatter on stdout before the ready line is logged, not an error.
    The measurement clock zeroes at the moment ready is observed.
    """
    try:
        proc = subprocess.Popen(
            manifest.start_command,
            cwd=manifest.workdir,
            env={**os.environ, **manifest.env},
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=None,  # model diagnostics flow through to our stderr
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
    except OSError as e:
        raise SpawnFailure(f"cannot start {manifest.start_command[0]!r}: {e}")

    reader = _LineReader(proc.stdout)
    deadline = time.monotonic() + manifest.startup_timeout_s
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            proc.kill()
            raise ReadyTimeout(
                f"no ready line within {manifest.startup_timeout_s}s from {manifest.name}"
            )
        try:
            line = reader.get(timeout=remaining)
        except TimeoutError:
            proc.kill()
            raise ReadyTimeout(
                f"no ready line within {manifest.startup_timeout_s}s from {manifest.name}"
            )
        if line is None:
            status = proc.wait()
            raise ModelCrashed(f"{manifest.name} exited with status {status} before ready")
        ready = protocol.parse_ready(line)
        if ready is None:
            log(f"[{manifest.name}] startup: {line}")
            continue
        ready_at = time.monotonic()
        return ModelConnection(proc, manifest, ready, ready_at, reader)


def _exchange(conn: ModelConnection, request: str, expected_len: int,
              expected_index: int, record: RunRecord) -> BatchRecord:
    # dispatch is stamped before the write so latency includes request
    # serialization, and so it always precedes the reader's arrival stamp
    dispatch_ts = time.monotonic()
    try:
        conn.proc.stdin.write(request)
        conn.proc.stdin.flush()
    except (BrokenPipeError, OSError):
        raise ModelCrashed(f"{conn.manifest.name} pipe closed mid-run", partial_record=record)
    try:
        response_ts, line = conn.reader.get_timed(
            timeout=conn.manifest.response_timeout_s)
    except TimeoutError:
        raise ResponseTimeout(
            f"no response to batch {expected_index} within "
            f"{conn.manifest.response_timeout_s}s",
            partial_record=record,
        )
    if line is None:
        status = conn.proc.wait()
        raise ModelCrashed(
            f"{conn.manifest.name} exited with status {status} on batch {expected_index}",
            partial_record=record,
        )
    try:
        resp = protocol.decode_response(line, expected_len, expected_index)
    except ProtocolError as e:
        e.partial_record = record
        raise
    return BatchRecord(dispatch_ts=dispatch_ts, response_ts=response_ts,
                       size=expected_len, outputs=resp.outputs)


def run_online(conn: ModelConnection, plan: BatchPlan,
               warmup_batches: int = 0) -> RunRecord:
    """Closed-loop dispatch of an online plan (fixed/poisson/single_stream)."""
    record = RunRecord(ready_at=conn.ready_at)
    for w in range(warmup_batches):
        batch = plan.batches[w % len(plan.batches)]
        # warm-up exchanges reuse plan batches but never enter the record
        _exchange(conn, protocol.encode_request([i.input for i in batch], w),
                  len(batch), w, RunRecord(ready_at=conn.ready_at))
    base = warmup_batches
    for i, batch in enumerate(plan.batches):
        request = protocol.encode_request([inst.input for inst in batch], base + i)
        record.batches.append(_exchange(conn, request, len(batch), base + i, record))
    record.run_end = time.monotonic()
    return record


def run_offline(conn: ModelConnection, job: OfflineJob) -> RunRecord:
    """Single file-based request; one response carrying every output in file
    line order (the model may batch/sort internally)."""
    if not os.path.exists(job.path):
        raise ConfigError(f"offline instance file missing: {job.path}")
    record = RunRecord(ready_at=conn.ready_at)
    request = protocol.encode_offline_request(job.path, 0)
    record.batches.append(_exchange(conn, request, len(job.instances), 0, record))
    record.run_end = time.monotonic()
    return record
