"""Turns run records into the efficiency report.

Conventions fixed here (and documented in the README):
  - words/s counts *output* words by default; a word is a maximal run of
    non-whitespace characters.
  - percentiles are nearest-rank (the ceil(q/100*n)-th order statistic).
  - latency is per batch: one measurement per request, not per instance.
  - BLEU is the built-in corpus implementation below; scores are comparable
    within this harness but not guaranteed bit-identical to external tools.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, asdict

from .errors import (
    DegenerateRange,
    EmptyHypothesisSet,
    IncompatibleScenarios,
    LengthMismatch,
    ZeroDuration,
)
from .scenario import scenario_metrics
from .runner import RunRecord

BYTES_PER_GIB = 2**30


def count_words(text: str) -> int:
    """Number of maximal runs of non-whitespace characters."""
    return len(text.split())


def throughput(record: RunRecord, outputs: list[str]) -> tuple[float, float]:
    """(instances/s, words/s) over the span from first dispatch to last response."""
    if not record.batches:
        raise ZeroDuration("no batches in record")
    span = record.batches[-1].response_ts - record.batches[0].dispatch_ts
    if span <= 0:
        raise ZeroDuration("run span is zero")
    inst_s = record.total_instances / span
    words_s = sum(count_words(o) for o in outputs) / span
    return inst_s, words_s


@dataclass(frozen=True)
class LatencyStats:
    mean_ms: float
    p50_ms: float
    p90_ms: float
    p99_ms: float
    max_ms: float
    n: int


def nearest_rank(sorted_values: list[float], q: float) -> float:
    """q-th percentile as the ceil(q/100*n)-th order statistic."""
    n = len(sorted_values)
    rank = max(1, math.ceil(q / 100.0 * n))
    return sorted_values[rank - 1]


def latency_stats(record: RunRecord) -> LatencyStats:
    """Per-batch latency distribution in milliseconds."""
    if not record.batches:
        raise ZeroDuration("no batches in record")
    lats = sorted((b.response_ts - b.dispatch_ts) * 1000.0 for b in record.batches)
    return LatencyStats(
        mean_ms=sum(lats) / len(lats),
        p50_ms=nearest_rank(lats, 50),
        p90_ms=nearest_rank(lats, 90),
        p99_ms=nearest_rank(lats, 99),
        max_ms=lats[-1],
        n=len(lats),
    )


# --- accuracy ---

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def bleu_tokenize(text: str) -> list[str]:
    """Whitespace words with every punctuation character split off as its
    own token. Fixed for the lifetime of the harness so scores stay
    comparable across runs."""
    return _TOKEN_RE.findall(text)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: list[str], references: list[list[str]],
                max_n: int = 4) -> float:
    """Corpus BLEU in [0, 100].

    Geometric mean of modified n-gram precisions (n = 1..max_n) times the
    brevity penalty. Add-one smoothing applies only to n >= 2 precisions
    whose clipped count is zero; a zero unigram precision zeroes the score.
    """
    if len(hypotheses) != len(references):
        raise LengthMismatch(len(references), len(hypotheses))
    if not hypotheses:
        raise EmptyHypothesisSet("corpus_bleu needs at least one hypothesis")
    for refs in references:
        if not refs:
            raise EmptyHypothesisSet("every instance needs at least one reference")

    clipped = [0] * (max_n + 1)
    totals = [0] * (max_n + 1)
    hyp_len = 0
    ref_len = 0
    for hyp, refs in zip(hypotheses, references):
        hyp_tok = bleu_tokenize(hyp)
        ref_toks = [bleu_tokenize(r) for r in refs]
        hyp_len += len(hyp_tok)
        # effective reference length: closest to the hypothesis, ties shorter
        ref_len += min((len(rt) for rt in ref_toks),
                       key=lambda L: (abs(L - len(hyp_tok)), L))
        for n in range(1, max_n + 1):
            counts = _ngrams(hyp_tok, n)
            if not counts:
                continue
            max_ref = Counter()
            for rt in ref_toks:
                for gram, cnt in _ngrams(rt, n).items():
                    if cnt > max_ref[gram]:
                        max_ref[gram] = cnt
            clipped[n] += sum(min(cnt, max_ref[gram]) for gram, cnt in counts.items())
            totals[n] += sum(counts.values())

    if totals[1] == 0 or clipped[1] == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        num, den = clipped[n], totals[n]
        if n >= 2 and num == 0:
            num, den = num + 1, den + 1
        if den == 0:  # every hypothesis shorter than n tokens
            num, den = 1, 1
        log_sum += math.log(num / den)
    geo = math.exp(log_sum / max_n)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return bp * geo * 100.0


def exact_match(hypotheses: list[str], references: list[list[str]]) -> float:
    """Fraction of hypotheses equal (after trimming) to any of their references."""
    if len(hypotheses) != len(references):
        raise LengthMismatch(len(references), len(hypotheses))
    if not hypotheses:
        raise EmptyHypothesisSet("exact_match needs at least one hypothesis")
    hits = sum(
        1 for hyp, refs in zip(hypotheses, references)
        if hyp.strip() in {r.strip() for r in refs}
    )
    return hits / len(hypotheses)


# --- report ---

@dataclass
class MetricsReport:
    model: str
    scenario: str
    params: int
    peak_mem_gib: float
    energy_wh: float
    co2_g: float
    throughput_inst_s: float | None = None
    throughput_words_s: float | None = None
    latency: LatencyStats | None = None
    gpu_mem_gib: float | None = None
    accuracy: dict | None = None  # {"metric": name, "value": score}
    header: dict | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


def assemble_report(model_name: str, kind: str, record: RunRecord,
                    energy_report, params: int,
                    references: list[list[str]] | None = None,
                    accuracy_metric: str = "bleu",
                    gpu_mem_gib: float | None = None,
                    header: dict | None = None) -> MetricsReport:
    """Build the per-(model, scenario) report with exactly the metric fields
    the scenario defines; everything else stays null."""
    wanted = scenario_metrics(kind)
    report = MetricsReport(
        model=model_name,
        scenario=kind,
        params=params,
        peak_mem_gib=record.peak_rss_bytes / BYTES_PER_GIB,
        energy_wh=energy_report.energy_wh,
        co2_g=energy_report.co2_g,
        gpu_mem_gib=gpu_mem_gib,
        header=header,
    )
    if "throughput" in wanted:
        inst_s, words_s = throughput(record, record.outputs)
        report.throughput_inst_s = inst_s
        report.throughput_words_s = words_s
    if "latency" in wanted:
        report.latency = latency_stats(record)
    if "accuracy" in wanted and references is not None:
        if accuracy_metric == "bleu":
            value = corpus_bleu(record.outputs, references)
        elif accuracy_metric == "exact_match":
            value = exact_match(record.outputs, references)
        else:
            raise IncompatibleScenarios(f"unknown accuracy metric {accuracy_metric!r}")
        report.accuracy = {"metric": accuracy_metric, "value": value}
    return report


# --- radar normalization ---

_LOWER_BETTER = ("latency", "memory", "energy", "params")
_HIGHER_BETTER = ("throughput", "accuracy")


def _metric_value(report: dict, metric: str):
    if metric == "latency":
        lat = report.get("latency")
        return lat["p50_ms"] if lat else None
    if metric == "memory":
        return report.get("peak_mem_gib")
    if metric == "energy":
        return report.get("energy_wh")
    if metric == "params":
        p = report.get("params")
        return math.log10(max(p, 1)) if p is not None else None
    if metric == "throughput":
        return report.get("throughput_inst_s")
    if metric == "accuracy":
        acc = report.get("accuracy")
        return acc["value"] if acc else None
    return None


def radar_normalize(reports: list[dict]) -> dict[str, list[float]]:
    """Scale each metric across reports to [0, 1] with outer = better.

    Lower-is-better metrics map through min/x (params on a log10 scale),
    higher-is-better through x/max; per-metric ranking order is preserved.
    Metrics missing from any report are dropped.
    """
    if len(reports) < 1:
        raise IncompatibleScenarios("need at least one report")
    kinds = {r.get("scenario") for r in reports}
    if len(kinds) > 1:
        raise IncompatibleScenarios(f"reports mix scenarios: {sorted(kinds)}")

    out: dict[str, list[float]] = {}
    for metric in _LOWER_BETTER + _HIGHER_BETTER:
        values = [_metric_value(r, metric) for r in reports]
        if any(v is None for v in values):
            continue
        if metric in _LOWER_BETTER:
            lo = min(values)
            out[metric] = [1.0 if v == lo else (lo / v if v > 0 else 1.0) for v in values]
        else:
            hi = max(values)
            out[metric] = [1.0 if v == hi else (v / hi if hi > 0 else 1.0) for v in values]
    return out
