"""Host-wide single-flight scheduler.

At most one benchmark run (or idle-baseline measurement) may execute on the
host at a time. Exclusion is backed by an atomically created lock file, so
independent harness processes exclude each other too. Waiters queue as
ticket files named by enqueue time; the oldest live ticket takes the slot
next, giving FIFO order.

The holder heartbeats into a sidecar file. A lock whose owner process is
dead (or, when liveness cannot be probed, whose heartbeat has been silent
for 3x the heartbeat period) is stale and is reclaimed with a warning: the
reclaimer atomically renames the stale lock aside before re-contending, so
two racing reclaimers can never both become holders.
"""

from __future__ import annotations

import json
import os
import socket
import sys
import time
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import psutil

from .errors import NotHolder, QueueTimeout

DEFAULT_LOCK_PATH = "/tmp/inferbench.lock"
LOCK_PATH_ENV = "INFERBENCH_LOCK"
HEARTBEAT_PERIOD_S = 2.0
POLL_S = 0.05


def default_lock_path() -> str:
    return os.environ.get(LOCK_PATH_ENV, DEFAULT_LOCK_PATH)


@dataclass
class JobTicket:
    job_id: str
    enqueued_at: float  # wall clock
    state: str = "queued"  # queued | running | done | failed
    _slot: "RunSlot | None" = field(default=None, repr=False)


class RunSlot:
    def __init__(self, lock_path: str | None = None,
                 heartbeat_period_s: float = HEARTBEAT_PERIOD_S,
                 log=lambda msg: print(msg, file=sys.stderr)):
        self.lock_path = Path(lock_path or default_lock_path())
        self.queue_dir = Path(str(self.lock_path) + ".queue")
        self.hb_path = Path(str(self.lock_path) + ".hb")
        self.heartbeat_period_s = heartbeat_period_s
        self.log = log
        self._token = None
        self._hb_stop = None
        self._hb_thread = None

    # --- queueing ---

    def acquire(self, job_id: str, timeout_s: float | None = None) -> JobTicket:
        """Block until this caller holds the exclusive run slot (FIFO)."""
        ticket = JobTicket(job_id=job_id, enqueued_at=time.time())
        self.queue_dir.mkdir(parents=True, exist_ok=True)
        ticket_path = self.queue_dir / f"{time.time_ns():020d}-{os.getpid()}-{uuid.uuid4().hex[:8]}"
        ticket_path.write_text(json.dumps(
            {"job_id": job_id, "pid": os.getpid(), "host": socket.gethostname()}
        ))
        deadline = None if timeout_s is None else time.monotonic() + timeout_s
        try:
            while True:
                if self._my_turn(ticket_path) and self._try_take(job_id):
                    ticket.state = "running"
                    ticket._slot = self
                    return ticket
                if deadline is not None and time.monotonic() > deadline:
                    raise QueueTimeout(f"gave up waiting for run slot after {timeout_s}s")
                time.sleep(POLL_S)
        finally:
            ticket_path.unlink(missing_ok=True)

    def _my_turn(self, ticket_path: Path) -> bool:
        entries = sorted(self.queue_dir.iterdir())
        for entry in entries:
            if entry == ticket_path:
                return True
            if self._waiter_dead(entry):
                entry.unlink(missing_ok=True)
                continue
            return False
        # our ticket vanished (cleanup raced); recreate by claiming the turn
        return True

    def _waiter_dead(self, entry: Path) -> bool:
        try:
            info = json.loads(entry.read_text())
        except (OSError, json.JSONDecodeError):
            return False  # being written right now; assume live
        if info.get("host") != socket.gethostname():
            return False
        pid = info.get("pid")
        return isinstance(pid, int) and not psutil.pid_exists(pid)

    # --- the lock itself ---

    def _try_take(self, job_id: str) -> bool:
        token = uuid.uuid4().hex
        payload = json.dumps({
            "pid": os.getpid(),
            "host": socket.gethostname(),
            "job_id": job_id,
            "acquired_at": time.time(),
            "token": token,
        })
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            self._reclaim_if_stale()
            return False
        with os.fdopen(fd, "w") as f:
            f.write(payload)
        self._token = token
        self._write_heartbeat()
        self._hb_stop = threading.Event()
        self._hb_thread = threading.Thread(target=self._hb_loop, daemon=True)
        self._hb_thread.start()
        return True

    def _write_heartbeat(self):
        tmp = Path(f"{self.hb_path}.{os.getpid()}.tmp")
        tmp.write_text(json.dumps({"token": self._token, "ts": time.time()}))
        os.rename(tmp, self.hb_path)

    def _hb_loop(self):
        while not self._hb_stop.is_set():
            self._hb_stop.wait(self.heartbeat_period_s)
            if self._hb_stop.is_set():
                return
            try:
                self._write_heartbeat()
            except OSError:
                return

    def _reclaim_if_stale(self):
        try:
            owner = json.loads(self.lock_path.read_text())
        except FileNotFoundError:
            return
        except (OSError, json.JSONDecodeError):
            owner = None  # corrupt lock: fall through to heartbeat probe

        if owner and owner.get("host") == socket.gethostname():
            pid = owner.get("pid")
            if isinstance(pid, int) and psutil.pid_exists(pid):
                return  # owner alive; not stale
        else:
            # cannot probe the owner process; rely on heartbeat age
            try:
                hb = json.loads(self.hb_path.read_text())
                if time.time() - hb.get("ts", 0) < 3 * self.heartbeat_period_s:
                    return
            except (OSError, json.JSONDecodeError, ValueError):
                pass  # no readable heartbeat: stale

        # atomically move the stale lock aside; only one reclaimer wins
        tomb = Path(f"{self.lock_path}.stale.{uuid.uuid4().hex[:8]}")
        try:
            os.rename(self.lock_path, tomb)
        except FileNotFoundError:
            return  # someone else reclaimed first
        self.log(f"[scheduler] reclaimed stale lock {self.lock_path} "
                 f"(owner {owner.get('pid') if owner else 'unknown'} is gone)")
        tomb.unlink(missing_ok=True)
        self.hb_path.unlink(missing_ok=True)

    def release(self, ticket: JobTicket, state: str = "done"):
        if ticket._slot is not self or self._token is None:
            raise NotHolder("release called without holding the run slot")
        self._hb_stop.set()
        self._hb_thread.join()
        self.hb_path.unlink(missing_ok=True)
        try:
            owner = json.loads(self.lock_path.read_text())
            if owner.get("token") == self._token:
                self.lock_path.unlink(missing_ok=True)
        except (OSError, json.JSONDecodeError):
            pass
        self._token = None
        ticket.state = state
        ticket._slot = None


def acquire(job_id: str, lock_path: str | None = None,
            timeout_s: float | None = None) -> JobTicket:
    """Module-level convenience: one RunSlot per ticket."""
    slot = RunSlot(lock_path)
    return slot.acquire(job_id, timeout_s=timeout_s)


def release(ticket: JobTicket, state: str = "done"):
    if ticket._slot is None:
        raise NotHolder("ticket does not hold the run slot")
    ticket._slot.release(ticket, state=state)
