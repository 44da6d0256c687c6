"""Command-line interface.

Commands:
  run               execute the configured scenarios against a model manifest
  baseline          measure and persist the idle power baseline
  report            combine report files into radar-normalized JSON + a table
  selftest-model    run this package as a model-under-test (for testing)
  validate-adapter  spawn a manifest and check protocol conformance

Exit codes: 0 ok, 2 config, 3 protocol, 4 model crash, 5 metering.
Config precedence: command-line flags override config-file keys.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time
from pathlib import Path

from . import __version__, metering, metrics, protocol, scenario, scheduler, selftest
from .errors import ConfigError, HarnessError, IncompatibleScenarios
from .runner import (
    ModelManifest,
    run_offline,
    run_online,
    run_setup,
    spawn_and_handshake,
)
from .metering import MemorySampler, PowerSampler, PowerTrace, make_meter


def _log(msg: str):
    print(msg, file=sys.stderr)


def _write_atomic(path: Path, payload: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(payload, encoding="utf-8")
    os.rename(tmp, path)


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}")


def _scenario_config(entry: dict, default_seed: int) -> scenario.ScenarioConfig:
    return scenario.ScenarioConfig(
        kind=entry["kind"],
        instance_count=int(entry["instance_count"]),
        seed=int(entry.get("seed", default_seed)),
        batch_size=int(entry.get("batch_size", 1)),
        poisson_mean=float(entry.get("poisson_mean", 0.0)),
    )


def _session_state_path(cfg: dict) -> Path:
    return Path(cfg.get("state_file") or Path(cfg["output_dir"]) / "session.json")


def _idle_watts(cfg: dict, meter) -> float:
    state_path = _session_state_path(cfg)
    if state_path.exists():
        state = json.loads(state_path.read_text())
        if "idle_watts" in state:
            return float(state["idle_watts"])
    idle = metering.measure_idle_baseline(
        meter, duration_s=float(cfg.get("baseline_duration_s", 10.0))
    )
    state_path.parent.mkdir(parents=True, exist_ok=True)
    _write_atomic(state_path, json.dumps({"idle_watts": idle, "measured_at": time.time()}))
    return idle


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.output_dir is not None:
        cfg["output_dir"] = args.output_dir
    if args.intensity is not None:
        cfg["intensity_g_per_kwh"] = args.intensity

    for key in ("manifest", "datasets", "scenarios", "seed", "meter", "output_dir"):
        if key not in cfg:
            raise ConfigError(f"run config missing key {key!r}")
    intensity = float(cfg.get("intensity_g_per_kwh", 0.0))
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = ModelManifest.from_file(cfg["manifest"])
    test_data = scenario.load_dataset(cfg["datasets"]["test"])
    scenario_cfgs = [_scenario_config(e, int(cfg["seed"])) for e in cfg["scenarios"]]

    train_data = None
    if any(sc.kind == "offline" for sc in scenario_cfgs):
        train_path = cfg["datasets"].get("train")
        if not train_path:
            raise ConfigError("offline scenario requires datasets.train")
        train_data = scenario.load_dataset(train_path)

    run_setup(manifest)
    slot = scheduler.RunSlot(cfg.get("lock_path"))
    failures = 0
    for sc in scenario_cfgs:
        try:
            _run_one_scenario(cfg, manifest, sc, test_data, train_data,
                              intensity, out_dir, slot)
            _log(f"[run] {manifest.name}.{sc.kind}: ok")
        except HarnessError as e:
            _log(f"[run] {manifest.name}.{sc.kind}: FAILED: {e}")
            failures += 1
    return 0 if failures == 0 else 1


def _run_one_scenario(cfg, manifest, sc, test_data, train_data,
                      intensity, out_dir, slot):
    started_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
    ticket = slot.acquire(f"{manifest.name}.{sc.kind}",
                          timeout_s=cfg.get("queue_timeout_s"))
    try:
        meter = make_meter(cfg["meter"])
        idle_watts = _idle_watts(cfg, meter)

        offline_path = out_dir / f"offline.{manifest.name}.{sc.seed}.txt"
        plan = scenario.build_plan(test_data, sc, train_data=train_data,
                                   offline_path=offline_path)

        conn = spawn_and_handshake(manifest, log=_log)
        try:
            mem = MemorySampler(conn.proc.pid)
            mem.start()
            power = PowerSampler(meter)
            power.start()
            try:
                if sc.kind == "offline":
                    record = run_offline(conn, plan)
                else:
                    record = run_online(conn, plan,
                                        warmup_batches=int(cfg.get("warmup_batches", 0)))
            finally:
                samples = power.stop()
                record_peak = mem.stop()
        finally:
            exit_status = conn.close()
        record.peak_rss_bytes = record_peak
        record.exit_status = exit_status

        trace = PowerTrace(samples=samples, idle_watts=idle_watts)
        energy = metering.integrate_energy(
            trace, record.batches[0].dispatch_ts, record.run_end,
            intensity_g_per_kwh=intensity,
        )

        references = None
        if sc.kind == "fixed":
            order = [inst for batch in plan.batches for inst in batch]
            references = [list(inst.references) for inst in order]
            if any(not r for r in references):
                references = None  # dataset carries no references; skip accuracy
        header = {
            "harness_version": __version__,
            "seed": sc.seed,
            "idle_watts": idle_watts,
            "intensity_g_per_kwh": intensity,
            "started_at": started_at,
            "finished_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        report = metrics.assemble_report(
            manifest.name, sc.kind, record, energy, conn.params,
            references=references,
            accuracy_metric=cfg.get("accuracy_metric", "bleu"),
            header=header,
        )
        _write_report(out_dir, manifest.name, sc.kind, report)
        slot.release(ticket)
    except BaseException:
        try:
            slot.release(ticket, state="failed")
        except HarnessError:
            pass
        raise


def _write_report(out_dir: Path, model: str, kind: str, report) -> Path:
    payload = json.dumps(report.to_dict(), indent=2)
    stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%dT%H%M%S%f")
    archive = out_dir / f"{model}.{kind}.{stamp}.report.json"
    _write_atomic(archive, payload)
    latest = out_dir / f"{model}.{kind}.report.json"
    _write_atomic(latest, payload)

    index_path = out_dir / "latest.json"
    index = {}
    if index_path.exists():
        try:
            index = json.loads(index_path.read_text())
        except json.JSONDecodeError:
            index = {}
    index[f"{model}.{kind}"] = archive.name
    _write_atomic(index_path, json.dumps(index, indent=2))
    return latest


def cmd_baseline(args) -> int:
    meter = make_meter(json.loads(args.meter))
    slot = scheduler.RunSlot(args.lock_path)
    ticket = slot.acquire("baseline")
    try:
        idle = metering.measure_idle_baseline(meter, duration_s=args.duration)
    finally:
        slot.release(ticket)
    state_path = Path(args.state)
    state_path.parent.mkdir(parents=True, exist_ok=True)
    _write_atomic(state_path, json.dumps({"idle_watts": idle, "measured_at": time.time()}))
    print(f"idle baseline: {idle:.3f} W (stored in {state_path})")
    return 0


def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        with open(path, encoding="utf-8") as f:
            reports.append(json.load(f))
    normalized = metrics.radar_normalize(reports)
    out = {
        "models": [r["model"] for r in reports],
        "scenario": reports[0]["scenario"],
        "normalized": normalized,
    }
    payload = json.dumps(out, indent=2)
    if args.out:
        _write_atomic(Path(args.out), payload)
    else:
        print(payload)

    # human-readable table
    names = out["models"]
    width = max(10, max(len(n) for n in names) + 2)
    header = "metric".ljust(12) + "".join(n.rjust(width) for n in names)
    print(header, file=sys.stderr)
    for metric, values in normalized.items():
        row = metric.ljust(12) + "".join(f"{v:.3f}".rjust(width) for v in values)
        print(row, file=sys.stderr)
    return 0


def cmd_selftest_model(args) -> int:
    return selftest.serve(
        mode=args.mode,
        params=args.params,
        name=args.name,
        startup_sleep_s=args.startup_sleep,
        fault=args.fault,
        fault_at=args.fault_at,
        chatter=args.chatter,
        extra_delay_ms=args.extra_delay_ms,
    )


def cmd_validate_adapter(args) -> int:
    manifest = ModelManifest.from_file(args.manifest)
    run_setup(manifest)
    conn = spawn_and_handshake(manifest, log=_log)
    try:
        probe = ["hello adapter", "zwei\nzeilen"]
        conn.proc.stdin.write(protocol.encode_request(probe, 0))
        conn.proc.stdin.flush()
        line = conn.reader.get(timeout=manifest.response_timeout_s)
        if line is None:
            raise ConfigError("adapter closed stdout after one request")
        protocol.decode_response(line, len(probe), 0)
    finally:
        conn.close()
    print(f"{manifest.name}: protocol conformance ok "
          f"(ready params={conn.ready.params}, name={conn.ready.model_name!r})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inferbench",
                                description="Inference efficiency benchmarking harness")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run configured scenarios against a model")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--output-dir")
    run_p.add_argument("--intensity", type=float,
                       help="carbon intensity in g CO2 per kWh")
    run_p.set_defaults(func=cmd_run)

    base_p = sub.add_parser("baseline", help="measure and store idle power")
    base_p.add_argument("--meter", required=True, help="meter spec as JSON")
    base_p.add_argument("--duration", type=float, default=10.0)
    base_p.add_argument("--state", required=True, help="session state file to write")
    base_p.add_argument("--lock-path", dest="lock_path")
    base_p.set_defaults(func=cmd_baseline)

    rep_p = sub.add_parser("report", help="combine reports into radar JSON + table")
    rep_p.add_argument("reports", nargs="+")
    rep_p.add_argument("--out")
    rep_p.set_defaults(func=cmd_report)

    st_p = sub.add_parser("selftest-model", help="act as a model-under-test")
    st_p.add_argument("--mode", required=True,
                      help="echo | delay:<ms> | alloc:<MiB> | upper | translator-toy")
    st_p.add_argument("--params", type=int, default=0)
    st_p.add_argument("--name", default="selftest")
    st_p.add_argument("--startup-sleep", type=float, default=0.0)
    st_p.add_argument("--fault", choices=["short-output", "bad-index", "not-json", "crash"])
    st_p.add_argument("--fault-at", type=int, default=0)
    st_p.add_argument("--chatter", action="store_true")
    st_p.add_argument("--extra-delay-ms", type=float, default=0.0)
    st_p.set_defaults(func=cmd_selftest_model)

    val_p = sub.add_parser("validate-adapter",
                           help="spawn a manifest and check protocol conformance")
    val_p.add_argument("--manifest", required=True)
    val_p.set_defaults(func=cmd_validate_adapter)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HarnessError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
