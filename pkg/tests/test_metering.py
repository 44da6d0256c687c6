import math
import subprocess
import sys
import time

import pytest
from hypothesis import given, strategies as st

from inferbench import metering
from inferbench.errors import (
    InsufficientSamples,
    MeterUnavailable,
    MeteringError,
    ProcessVanished,
    TraceGap,
)
from inferbench.metering import (
    EnergyReport,
    MemorySampler,
    PowerSample,
    PowerTrace,
    ReplayMeter,
    SyntheticMeter,
    co2_from_energy,
    integrate_energy,
    make_meter,
    measure_idle_baseline,
)

from conftest import write_trace_csv


def trace_of(pairs, idle=0.0):
    return PowerTrace(samples=[PowerSample(t=t, watts=w) for t, w in pairs],
                      idle_watts=idle)


# --- idle baseline ---

def test_baseline_constant_trace():
    meter = ReplayMeter([PowerSample(t=i, watts=100.0) for i in range(31)])
    assert measure_idle_baseline(meter) == 100.0


def test_baseline_alternating_trace():
    meter = ReplayMeter([PowerSample(t=i, watts=90.0 if i % 2 else 110.0)
                         for i in range(30)])
    assert measure_idle_baseline(meter) == 100.0


def test_baseline_insufficient_samples():
    meter = ReplayMeter([PowerSample(t=i, watts=100.0) for i in range(3)])
    with pytest.raises(InsufficientSamples):
        measure_idle_baseline(meter)


def test_baseline_live_synthetic():
    idle = measure_idle_baseline(SyntheticMeter(42.0), duration_s=0.3, period_s=0.02)
    assert idle == pytest.approx(42.0)


# --- energy integration (hand-computed oracles) ---

def test_energy_constant_trace():
    # 300 W for half an hour over a 100 W idle: (300-100) * 0.5 h = 100 Wh
    trace = trace_of([(0.0, 300.0), (900.0, 300.0), (1800.0, 300.0)], idle=100.0)
    report = integrate_energy(trace, 0.0, 1800.0)
    assert report.energy_wh == pytest.approx(100.0, rel=1e-9)


def test_energy_trace_equal_to_idle_is_zero():
    trace = trace_of([(0.0, 100.0), (10.0, 100.0), (20.0, 100.0)], idle=100.0)
    assert integrate_energy(trace, 0.0, 20.0).energy_wh == 0.0


def test_energy_linear_ramp():
    # net power ramps 0 -> 200 W over one hour: triangle area = 100 Wh
    pairs = [(t, 100.0 + 200.0 * t / 3600.0) for t in range(0, 3601, 60)]
    trace = trace_of(pairs, idle=100.0)
    report = integrate_energy(trace, 0.0, 3600.0)
    assert report.energy_wh == pytest.approx(100.0, rel=1e-9)


def test_energy_refinement_under_halved_period():
    # smooth (quadratic) trace: halving the sampling period moves the
    # integral by well under 0.5%
    def watts(t):
        return 150.0 + 50.0 * (t / 100.0) ** 2

    coarse = trace_of([(t, watts(t)) for t in range(0, 101, 10)], idle=100.0)
    fine = trace_of([(t / 2, watts(t / 2)) for t in range(0, 201, 10)], idle=100.0)
    e_coarse = integrate_energy(coarse, 0.0, 100.0).energy_wh
    e_fine = integrate_energy(fine, 0.0, 100.0).energy_wh
    assert abs(e_coarse - e_fine) / e_fine < 0.005


def test_energy_clamps_negative_net_power():
    trace = trace_of([(0.0, 50.0), (10.0, 50.0), (20.0, 50.0)], idle=100.0)
    assert integrate_energy(trace, 0.0, 20.0).energy_wh == 0.0


def test_energy_window_interpolation():
    # integrate only the middle half of a constant 200 W trace
    trace = trace_of([(0.0, 200.0), (100.0, 200.0)], idle=0.0)
    report = integrate_energy(trace, 25.0, 75.0)
    assert report.energy_wh == pytest.approx(200.0 * 50.0 / 3600.0, rel=1e-9)


def test_energy_monotone_in_window_length():
    trace = trace_of([(float(t), 200.0) for t in range(0, 101, 5)], idle=50.0)
    e1 = integrate_energy(trace, 0.0, 50.0).energy_wh
    e2 = integrate_energy(trace, 0.0, 100.0).energy_wh
    assert 0 <= e1 <= e2


def test_energy_trace_gap():
    trace = trace_of([(0.0, 200.0), (1.0, 200.0), (2.0, 200.0), (50.0, 200.0)])
    with pytest.raises(TraceGap):
        integrate_energy(trace, 0.0, 50.0)


def test_energy_bad_window():
    trace = trace_of([(0.0, 200.0), (10.0, 200.0)])
    with pytest.raises(MeteringError):
        integrate_energy(trace, 10.0, 10.0)


# --- CO2 ---

def test_co2_hand_computed():
    assert co2_from_energy(100.0, 432.0) == pytest.approx(43.2)


def test_co2_zero_energy():
    assert co2_from_energy(0.0, 500.0) == 0.0


def test_co2_unit_identity():
    assert co2_from_energy(1000.0, 1.0) == 1.0


@given(st.floats(0, 1e6), st.floats(0, 1e4))
def test_co2_identity_exact(energy_wh, intensity):
    assert co2_from_energy(energy_wh, intensity) == energy_wh / 1000.0 * intensity


def test_energy_report_identity():
    trace = trace_of([(0.0, 300.0), (1800.0, 300.0)], idle=100.0)
    report = integrate_energy(trace, 0.0, 1800.0, intensity_g_per_kwh=432.0)
    assert report.co2_g == report.energy_wh / 1000.0 * report.intensity_g_per_kwh


# --- meter construction ---

def test_replay_meter_from_csv(tmp_path):
    path = write_trace_csv(tmp_path / "trace.csv", [(0.0, 100.0), (1.0, 110.0)])
    meter = make_meter({"backend": "replay", "trace": path})
    assert meter.watts_at(0.5) == pytest.approx(105.0)


def test_replay_meter_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,power\n0,1\n")
    with pytest.raises(MeteringError):
        ReplayMeter.from_csv(path)


def test_unknown_backend():
    with pytest.raises(MeterUnavailable):
        make_meter({"backend": "quantum"})


def test_synthetic_meter_slope():
    meter = SyntheticMeter(100.0, slope_w_per_s=10.0)
    meter.attach()
    w = meter.read_watts()
    assert 100.0 <= w < 105.0


# --- memory ---

def test_memory_sampler_tracks_subprocess():
    proc = subprocess.Popen([sys.executable, "-c", "import time; time.sleep(2)"])
    try:
        sampler = MemorySampler(proc.pid, period_ms=20)
        sampler.start()
        time.sleep(0.3)
        peak = sampler.stop()
        assert peak > 1024 * 1024  # a python process is at least a MiB
    finally:
        proc.kill()
        proc.wait()


def test_memory_sampler_dead_process():
    proc = subprocess.Popen([sys.executable, "-c", "pass"])
    proc.wait()
    with pytest.raises(ProcessVanished):
        sampler = MemorySampler(proc.pid)
        sampler._rss()
