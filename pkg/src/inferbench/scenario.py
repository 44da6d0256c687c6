"""Seed-deterministic batch planning for the four evaluation scenarios.

Scenarios:
  fixed          shuffle the evaluation set, group into user-sized batches
  poisson        sample with replacement; batch sizes ~ Pois(mean), zeros redrawn
  single_stream  sample without replacement, one instance per batch
  offline        sample from the *training* split, matched to a target mean
                 input length, delivered to the model as a file in one request

The same (dataset, config) always yields the same plan: all randomness comes
from a PCG64 stream keyed by the config seed (see sampling module).
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ConfigError,
    CountExceedsDataset,
    EmptyDataset,
    LengthMatchFailure,
)
from .sampling import SeededStream

SCENARIO_KINDS = ("fixed", "poisson", "single_stream", "offline")

# Table of which metrics each scenario produces (#params is always reported).
_SCENARIO_METRICS = {
    "fixed": frozenset({"accuracy", "throughput", "latency", "memory", "energy"}),
    "poisson": frozenset({"throughput", "latency", "memory", "energy"}),
    "single_stream": frozenset({"latency", "memory", "energy"}),
    "offline": frozenset({"throughput", "memory", "energy"}),
}


@dataclass(frozen=True)
class Instance:
    id: str
    input: str
    references: tuple[str, ...] = ()


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    instance_count: int
    seed: int
    batch_size: int = 1
    poisson_mean: float = 0.0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(f"unknown scenario kind: {self.kind!r}")
        if self.instance_count <= 0:
            raise ConfigError("instance_count must be positive")
        if self.kind in ("fixed", "offline") and self.batch_size <= 0:
            raise ConfigError("batch_size must be positive")
        if self.kind == "poisson" and self.poisson_mean <= 0:
            raise ConfigError("poisson scenario requires poisson_mean > 0")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")


@dataclass
class BatchPlan:
    batches: list[list[Instance]]
    scenario: ScenarioConfig
    total_instances: int
    total_output_words: int | None = None  # filled post-run

    def __post_init__(self):
        assert sum(len(b) for b in self.batches) == self.total_instances


@dataclass
class OfflineJob:
    path: str
    instances: list[Instance]
    scenario: ScenarioConfig
    mean_input_len: float


def scenario_metrics(kind: str) -> frozenset[str]:
    try:
        return _SCENARIO_METRICS[kind]
    except KeyError:
        raise ConfigError(f"unknown scenario kind: {kind!r}")


def load_dataset(path: str | Path) -> list[Instance]:
    """Load a JSONL dataset: one {"id","input","references"} object per line."""
    instances = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}:{lineno}: bad JSON: {e}")
            try:
                inst = Instance(
                    id=str(obj["id"]),
                    input=str(obj["input"]),
                    references=tuple(str(r) for r in obj.get("references", [])),
                )
            except KeyError as e:
                raise ConfigError(f"{path}:{lineno}: missing field {e}")
            if inst.id in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate instance id {inst.id!r}")
            seen.add(inst.id)
            instances.append(inst)
    return instances


def input_length(inst: Instance) -> int:
    """Whitespace-token count of the input; the unit for length matching."""
    return len(inst.input.split())


def plan_fixed(data: list[Instance], cfg: ScenarioConfig) -> BatchPlan:
    """Shuffle, take the first instance_count, group into batch_size chunks."""
    assert cfg.kind == "fixed"
    if not data:
        raise EmptyDataset("fixed scenario needs a non-empty dataset")
    if cfg.instance_count > len(data):
        raise CountExceedsDataset(
            f"instance_count {cfg.instance_count} exceeds dataset size {len(data)}"
        )
    stream = SeededStream(cfg.seed)
    order = stream.shuffle(data)[: cfg.instance_count]
    batches = [
        order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)
    ]
    return BatchPlan(batches=batches, scenario=cfg, total_instances=len(order))


def plan_poisson(data: list[Instance], cfg: ScenarioConfig) -> BatchPlan:
    """Sample with replacement; batch sizes ~ Pois(mean) with zeros redrawn.

    One interleaved stream: for each batch, draw its size, then its members.
    The final batch is truncated so totals match instance_count exactly.
    """
    assert cfg.kind == "poisson"
    if not data:
        raise EmptyDataset("poisson scenario needs a non-empty dataset")
    stream = SeededStream(cfg.seed)
    batches = []
    remaining = cfg.instance_count
    while remaining > 0:
        size = min(stream.poisson_positive(cfg.poisson_mean), remaining)
        batches.append([data[stream.randint(len(data))] for _ in range(size)])
        remaining -= size
    return BatchPlan(batches=batches, scenario=cfg, total_instances=cfg.instance_count)


def plan_single_stream(data: list[Instance], cfg: ScenarioConfig) -> BatchPlan:
    """instance_count instances without replacement, each its own batch."""
    assert cfg.kind == "single_stream"
    if not data:
        raise EmptyDataset("single_stream scenario needs a non-empty dataset")
    if cfg.instance_count > len(data):
        raise CountExceedsDataset(
            f"instance_count {cfg.instance_count} exceeds dataset size {len(data)}"
        )
    stream = SeededStream(cfg.seed)
    chosen = stream.sample_without_replacement(data, cfg.instance_count)
    return BatchPlan(
        batches=[[inst] for inst in chosen],
        scenario=cfg,
        total_instances=cfg.instance_count,
    )


# Offline length matching: resample up to this many times at the relative
# tolerance, then greedily swap instances toward the target before giving up.
LENGTH_MATCH_TOLERANCE = 0.02
LENGTH_MATCH_ATTEMPTS = 1000
LENGTH_MATCH_SWAPS = 10000


def plan_offline(
    train_data: list[Instance],
    target_avg_len: float,
    cfg: ScenarioConfig,
    path: str | Path,
) -> OfflineJob:
    """Sample from the training split with mean input length matched to the
    evaluation set, and write the instance file handed to the model.

    Sampling from the training split (not the test split) avoids handing the
    model groups of duplicated test instances it could batch together.
    """
    assert cfg.kind == "offline"
    if not train_data:
        raise EmptyDataset("offline scenario needs a non-empty training split")
    if cfg.instance_count > len(train_data):
        raise CountExceedsDataset(
            f"instance_count {cfg.instance_count} exceeds training size {len(train_data)}"
        )
    if target_avg_len <= 0:
        raise ConfigError("target_avg_len must be positive")

    stream = SeededStream(cfg.seed)
    tol = LENGTH_MATCH_TOLERANCE

    sample = None
    for _ in range(LENGTH_MATCH_ATTEMPTS):
        candidate = stream.sample_without_replacement(train_data, cfg.instance_count)
        mean_len = statistics.fmean(input_length(i) for i in candidate)
        if abs(mean_len - target_avg_len) / target_avg_len <= tol:
            sample = candidate
            break

    if sample is None:
        sample = _swap_repair(train_data, target_avg_len, cfg.instance_count, stream)
    if sample is None:
        raise LengthMatchFailure(
            f"could not match target mean length {target_avg_len} "
            f"within {tol:.0%} after {LENGTH_MATCH_ATTEMPTS} attempts"
        )

    mean_len = statistics.fmean(input_length(i) for i in sample)
    write_offline_file(path, sample)
    return OfflineJob(
        path=str(path), instances=sample, scenario=cfg, mean_input_len=mean_len
    )


def _swap_repair(train_data, target_avg_len, count, stream):
    """Greedy repair: swap the sample member contributing most to the error
    for an unused instance that moves the mean toward the target."""
    sample = stream.sample_without_replacement(train_data, count)
    in_sample = {i.id for i in sample}
    pool = [i for i in train_data if i.id not in in_sample]
    total = sum(input_length(i) for i in sample)
    target_total = target_avg_len * count

    for _ in range(LENGTH_MATCH_SWAPS):
        if abs(total / count - target_avg_len) / target_avg_len <= LENGTH_MATCH_TOLERANCE:
            return sample
        if not pool:
            return None
        err = total - target_total
        # removing the longest member most reduces a positive error, the
        # shortest a negative one
        victim_idx = max(
            range(len(sample)),
            key=lambda k: input_length(sample[k]) if err > 0 else -input_length(sample[k]),
        )
        need = input_length(sample[victim_idx]) - err / 1.0
        repl_idx = min(
            range(len(pool)), key=lambda k: abs(input_length(pool[k]) - need)
        )
        new_total = total - input_length(sample[victim_idx]) + input_length(pool[repl_idx])
        if abs(new_total - target_total) >= abs(total - target_total):
            return None  # no improving swap left
        sample[victim_idx], pool[repl_idx] = pool[repl_idx], sample[victim_idx]
        total = new_total

    if abs(total / count - target_avg_len) / target_avg_len <= LENGTH_MATCH_TOLERANCE:
        return sample
    return None


# Offline instance file: plain text, one escaped input per line, file line
# order == sampled order; the model must return outputs in the same order.

def escape_offline_line(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n").replace("\r", "\\r")


def unescape_offline_line(line: str) -> str:
    out = []
    i = 0
    while i < len(line):
        c = line[i]
        if c == "\\" and i + 1 < len(line):
            nxt = line[i + 1]
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "r":
                out.append("\r")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(c)
        i += 1
    return "".join(out)


def write_offline_file(path: str | Path, instances: list[Instance]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(escape_offline_line(inst.input) + "\n")


def read_offline_file(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [unescape_offline_line(line.rstrip("\n")) for line in f]


def build_plan(data, cfg, train_data=None, offline_path=None):
    """Dispatch to the right planner; offline returns an OfflineJob."""
    if cfg.kind == "fixed":
        return plan_fixed(data, cfg)
    if cfg.kind == "poisson":
        return plan_poisson(data, cfg)
    if cfg.kind == "single_stream":
        return plan_single_stream(data, cfg)
    if cfg.kind == "offline":
        if train_data is None or offline_path is None:
            raise ConfigError("offline scenario requires a training split and file path")
        target = statistics.fmean(input_length(i) for i in data) if data else 0.0
        return plan_offline(train_data, target, cfg, offline_path)
    raise ConfigError(f"unknown scenario kind: {cfg.kind!r}")
