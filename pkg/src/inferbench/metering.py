"""Power and memory metering.

Energy accounting: whole-machine wattage is sampled concurrently with a run,
the idle baseline is subtracted per sample (clamped at zero), and the net
power is integrated over the run window with the trapezoidal rule. CO2 is a
pure conversion through a configured carbon intensity.

Three meter backends:
  replay     wattage trace from a CSV (`t_s,watts`); deterministic, for tests
  synthetic  watts as a configured linear function of elapsed time
  rapl       host energy counters under /sys/class/powercap (where readable)

The harness does not drive a physical meter; any backend that yields
timestamped watts plugs into the same subtraction/integration math.
"""

from __future__ import annotations

import csv
import statistics
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import psutil

from .errors import (
    InsufficientSamples,
    MeterUnavailable,
    MeteringError,
    ProcessVanished,
    TraceGap,
)

DEFAULT_METER_ERROR_FRAC = 0.012  # manufacturer error band of the reference meter
DEFAULT_SAMPLE_PERIOD_S = 0.1
DEFAULT_MEMORY_PERIOD_MS = 50


@dataclass(frozen=True)
class PowerSample:
    t: float  # monotonic seconds
    watts: float


@dataclass
class PowerTrace:
    samples: list[PowerSample]
    idle_watts: float = 0.0
    meter_error_frac: float = DEFAULT_METER_ERROR_FRAC


@dataclass(frozen=True)
class EnergyReport:
    energy_wh: float
    co2_g: float
    intensity_g_per_kwh: float


# --- meter backends ---

class ReplayMeter:
    """Replays a recorded wattage trace; time 0 is the moment of attach()."""

    def __init__(self, samples: list[PowerSample]):
        if not samples:
            raise MeterUnavailable("replay trace is empty")
        for a, b in zip(samples, samples[1:]):
            if b.t <= a.t:
                raise MeteringError("replay trace timestamps must strictly increase")
        self.trace_samples = samples
        self._t0 = None

    @classmethod
    def from_csv(cls, path: str | Path) -> "ReplayMeter":
        samples = []
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != ["t_s", "watts"]:
                raise MeteringError(f"{path}: expected header t_s,watts")
            for row in reader:
                samples.append(PowerSample(t=float(row["t_s"]), watts=float(row["watts"])))
        return cls(samples)

    def attach(self):
        self._t0 = time.monotonic()

    def read_watts(self) -> float:
        if self._t0 is None:
            self.attach()
        return self.watts_at(time.monotonic() - self._t0)

    def watts_at(self, t: float) -> float:
        s = self.trace_samples
        if t <= s[0].t:
            return s[0].watts
        if t >= s[-1].t:
            return s[-1].watts
        for a, b in zip(s, s[1:]):
            if a.t <= t <= b.t:
                frac = (t - a.t) / (b.t - a.t)
                return a.watts + frac * (b.watts - a.watts)
        return s[-1].watts

    def full_trace(self) -> list[PowerSample]:
        return list(self.trace_samples)


class SyntheticMeter:
    """watts(t) = base + slope * t since attach; for tests and dry runs."""

    def __init__(self, base_watts: float, slope_w_per_s: float = 0.0):
        self.base_watts = base_watts
        self.slope = slope_w_per_s
        self._t0 = None

    def attach(self):
        self._t0 = time.monotonic()

    def read_watts(self) -> float:
        if self._t0 is None:
            self.attach()
        return self.base_watts + self.slope * (time.monotonic() - self._t0)


class RaplMeter:
    """Whole-package power from Linux powercap energy counters."""

    BASE = Path("/sys/class/powercap")

    def __init__(self):
        self._domains = sorted(self.BASE.glob("intel-rapl:*/energy_uj"))
        if not self._domains:
            raise MeterUnavailable("no powercap energy counters found")
        try:
            self._last = (time.monotonic(), self._read_uj())
        except OSError as e:
            raise MeterUnavailable(f"cannot read energy counters: {e}")

    def _read_uj(self) -> int:
        return sum(int(p.read_text()) for p in self._domains)

    def attach(self):
        self._last = (time.monotonic(), self._read_uj())

    def read_watts(self) -> float:
        now = time.monotonic()
        uj = self._read_uj()
        t_prev, uj_prev = self._last
        self._last = (now, uj)
        dt = now - t_prev
        if dt <= 0:
            return 0.0
        duj = uj - uj_prev
        if duj < 0:  # counter wrap
            duj = 0
        return duj / dt / 1e6


def make_meter(spec: dict):
    """Build a meter from its config spec: {"backend": ..., ...}."""
    backend = spec.get("backend")
    if backend == "replay":
        return ReplayMeter.from_csv(spec["trace"])
    if backend == "synthetic":
        return SyntheticMeter(float(spec.get("base_watts", 0.0)),
                              float(spec.get("slope_w_per_s", 0.0)))
    if backend == "rapl":
        return RaplMeter()
    raise MeterUnavailable(f"unknown meter backend: {backend!r}")


# --- sampling during a run ---

class PowerSampler:
    """Periodically reads a meter into an append-only buffer on a thread.

    Never touches the runner's timestamping paths; the integrator consumes
    the buffer only after stop().
    """

    def __init__(self, meter, period_s: float = DEFAULT_SAMPLE_PERIOD_S):
        self.meter = meter
        self.period_s = period_s
        self.samples: list[PowerSample] = []
        self._stop = threading.Event()
        self._thread = None

    def start(self):
        self.meter.attach()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def _loop(self):
        while not self._stop.is_set():
            self.samples.append(PowerSample(t=time.monotonic(), watts=self.meter.read_watts()))
            self._stop.wait(self.period_s)

    def stop(self) -> list[PowerSample]:
        self._stop.set()
        if self._thread:
            self._thread.join()
        # one final sample so the trace covers the run end
        self.samples.append(PowerSample(t=time.monotonic(), watts=self.meter.read_watts()))
        return self.samples


def measure_idle_baseline(meter, duration_s: float = 10.0,
                          period_s: float = DEFAULT_SAMPLE_PERIOD_S) -> float:
    """Mean wattage over a quiet window; the caller must hold the run slot.

    A replay meter is averaged over its whole recorded trace instead of
    being replayed in real time.
    """
    if hasattr(meter, "full_trace"):
        samples = meter.full_trace()
    else:
        sampler = PowerSampler(meter, period_s)
        sampler.start()
        time.sleep(duration_s)
        samples = sampler.stop()
    if len(samples) < 5:
        raise InsufficientSamples(f"only {len(samples)} idle samples (need >= 5)")
    return statistics.fmean(s.watts for s in samples)


# --- integration ---

def _interp(samples: list[PowerSample], t: float) -> float:
    if t <= samples[0].t:
        return samples[0].watts
    if t >= samples[-1].t:
        return samples[-1].watts
    for a, b in zip(samples, samples[1:]):
        if a.t <= t <= b.t:
            frac = (t - a.t) / (b.t - a.t) if b.t > a.t else 0.0
            return a.watts + frac * (b.watts - a.watts)
    return samples[-1].watts


def integrate_energy(trace: PowerTrace, run_start: float, run_end: float,
                     intensity_g_per_kwh: float = 0.0) -> EnergyReport:
    """Trapezoidal integral of max(0, watts - idle) over the run window.

    Net power is clamped at zero per sample so idle-baseline drift can never
    produce negative energy.
    """
    if run_end <= run_start:
        raise MeteringError("run_end must be after run_start")
    samples = trace.samples
    if len(samples) < 2:
        raise InsufficientSamples("need at least 2 power samples to integrate")

    diffs = [b.t - a.t for a, b in zip(samples, samples[1:])]
    period = statistics.median(diffs)
    for a, b in zip(samples, samples[1:]):
        if a.t < run_end and b.t > run_start and (b.t - a.t) > 5 * period:
            raise TraceGap(
                f"power trace gap of {b.t - a.t:.3f}s inside the run window "
                f"(sampling period ~{period:.3f}s)"
            )
    if samples[0].t > run_start + 5 * period or samples[-1].t < run_end - 5 * period:
        raise TraceGap("power trace does not cover the run window")

    points = [(run_start, _interp(samples, run_start))]
    points += [(s.t, s.watts) for s in samples if run_start < s.t < run_end]
    points.append((run_end, _interp(samples, run_end)))

    joules = 0.0
    for (t0, w0), (t1, w1) in zip(points, points[1:]):
        n0 = max(0.0, w0 - trace.idle_watts)
        n1 = max(0.0, w1 - trace.idle_watts)
        joules += 0.5 * (n0 + n1) * (t1 - t0)
    energy_wh = joules / 3600.0
    return EnergyReport(
        energy_wh=energy_wh,
        co2_g=co2_from_energy(energy_wh, intensity_g_per_kwh),
        intensity_g_per_kwh=intensity_g_per_kwh,
    )


def co2_from_energy(energy_wh: float, intensity_g_per_kwh: float) -> float:
    """Grams of CO2 for the given energy at the configured carbon intensity."""
    if energy_wh < 0 or intensity_g_per_kwh < 0:
        raise MeteringError("energy and intensity must be non-negative")
    return energy_wh / 1000.0 * intensity_g_per_kwh


# --- memory ---

class MemorySampler:
    """Tracks peak RSS over a process tree (model process plus children)."""

    def __init__(self, pid: int, period_ms: float = DEFAULT_MEMORY_PERIOD_MS):
        self.period_s = period_ms / 1000.0
        self.peak_rss_bytes = 0
        self._stop = threading.Event()
        self._thread = None
        try:
            self._proc = psutil.Process(pid)
        except psutil.NoSuchProcess:
            raise ProcessVanished(f"pid {pid} not found")

    def _rss(self) -> int:
        total = 0
        try:
            procs = [self._proc] + self._proc.children(recursive=True)
        except psutil.NoSuchProcess:
            raise ProcessVanished(f"pid {self._proc.pid} vanished")
        for p in procs:
            try:
                total += p.memory_info().rss
            except psutil.NoSuchProcess:
                continue
        return total

    def start(self):
        self.peak_rss_bytes = max(self.peak_rss_bytes, self._rss())
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def _loop(self):
        while not self._stop.is_set():
            try:
                self.peak_rss_bytes = max(self.peak_rss_bytes, self._rss())
            except ProcessVanished:
                return  # run failure is reported elsewhere; keep the max seen
            self._stop.wait(self.period_s)

    def stop(self) -> int:
        self._stop.set()
        if self._thread:
            self._thread.join()
        return self.peak_rss_bytes
