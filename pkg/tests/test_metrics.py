import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from inferbench import metrics
from inferbench.errors import (
    EmptyHypothesisSet,
    IncompatibleScenarios,
    LengthMismatch,
    ZeroDuration,
)
from inferbench.metrics import (
    LatencyStats,
    bleu_tokenize,
    corpus_bleu,
    count_words,
    exact_match,
    latency_stats,
    nearest_rank,
    radar_normalize,
    throughput,
)
from inferbench.runner import BatchRecord, RunRecord


# --- independent brute-force BLEU oracle ---
#
# Shares only the pinned tokenizer rule with the implementation under test;
# n-gram clipping is done by explicit occurrence matching against reference
# positions rather than Counter arithmetic.

def _occurrences(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def oracle_bleu(hypotheses, references, max_n=4):
    clipped = {n: 0 for n in range(1, max_n + 1)}
    total = {n: 0 for n in range(1, max_n + 1)}
    hyp_len = 0
    ref_len = 0
    for hyp, refs in zip(hypotheses, references):
        h = bleu_tokenize(hyp)
        rs = [bleu_tokenize(r) for r in refs]
        hyp_len += len(h)
        ref_len += sorted((len(rt) for rt in rs),
                          key=lambda L: (abs(L - len(h)), L))[0]
        for n in range(1, max_n + 1):
            h_occ = _occurrences(h, n)
            total[n] += len(h_occ)
            for gram in set(h_occ):
                in_hyp = sum(1 for g in h_occ if g == gram)
                best = 0
                for rt in rs:
                    in_ref = sum(1 for g in _occurrences(rt, n) if g == gram)
                    best = max(best, in_ref)
                clipped[n] += min(in_hyp, best)
    if total[1] == 0 or clipped[1] == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        num, den = clipped[n], total[n]
        if n >= 2 and num == 0:
            num, den = num + 1, den + 1
        if den == 0:
            num, den = 1, 1
        log_sum += math.log(num / den)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return bp * math.exp(log_sum / max_n) * 100.0


# --- word counting ---

def test_count_words_examples():
    assert count_words("Hello world") == 2
    assert count_words("") == 0
    assert count_words("  a\tb\nc ") == 3


# --- throughput ---

def _record(pairs, sizes, outputs_per_batch):
    batches = [BatchRecord(dispatch_ts=d, response_ts=r, size=s, outputs=o)
               for (d, r), s, o in zip(pairs, sizes, outputs_per_batch)]
    return RunRecord(ready_at=0.0, batches=batches, run_end=pairs[-1][1])


def test_throughput_hand_computed():
    # 1000 instances over a 50 s span -> 20 inst/s
    record = _record([(0.0, 25.0), (25.0, 50.0)], [500, 500],
                     [["x"] * 500, ["x"] * 500])
    inst_s, _ = throughput(record, record.outputs)
    assert inst_s == pytest.approx(20.0)


def test_throughput_words_per_second():
    # 100 outputs of "a b c" over 10 s -> 30 words/s
    record = _record([(0.0, 10.0)], [100], [["a b c"] * 100])
    inst_s, words_s = throughput(record, record.outputs)
    assert inst_s == pytest.approx(10.0)
    assert words_s == pytest.approx(30.0)


def test_throughput_zero_duration():
    record = _record([(5.0, 5.0)], [10], [["x"] * 10])
    with pytest.raises(ZeroDuration):
        throughput(record, record.outputs)


# --- latency ---

def test_latency_nearest_rank():
    record = _record([(0.0, 0.010), (1.0, 1.020), (2.0, 2.030), (3.0, 3.040)],
                     [1] * 4, [["x"]] * 4)
    stats = latency_stats(record)
    assert stats.p50_ms == pytest.approx(20.0)
    assert stats.mean_ms == pytest.approx(25.0)
    assert stats.p90_ms == pytest.approx(40.0)
    assert stats.max_ms == pytest.approx(40.0)
    assert stats.n == 4


def test_latency_singleton():
    record = _record([(0.0, 0.007)], [1], [["x"]])
    stats = latency_stats(record)
    assert stats.mean_ms == stats.p50_ms == stats.p99_ms == stats.max_ms == pytest.approx(7.0)


def test_latency_constant():
    record = _record([(float(i), float(i) + 0.050) for i in range(100)],
                     [1] * 100, [["x"]] * 100)
    assert latency_stats(record).p99_ms == pytest.approx(50.0)


def test_nearest_rank_definition():
    values = sorted([10.0, 20.0, 30.0, 40.0])
    assert nearest_rank(values, 50) == 20.0
    assert nearest_rank(values, 75) == 30.0
    assert nearest_rank(values, 99) == 40.0


@given(st.lists(st.floats(0, 1e4), min_size=1, max_size=50))
def test_latency_invariants(lats):
    record = _record([(float(i), float(i) + l / 1000.0) for i, l in enumerate(lats)],
                     [1] * len(lats), [["x"]] * len(lats))
    s = latency_stats(record)
    assert s.p50_ms <= s.p90_ms <= s.p99_ms <= s.max_ms
    assert s.mean_ms <= s.max_ms + 1e-9


# --- BLEU ---

def test_bleu_identity_corpus_is_100():
    hyps = ["the cat sat on the mat", "ein kleiner Hund", "x"]
    assert corpus_bleu(hyps, [[h] for h in hyps]) == pytest.approx(100.0)


def test_bleu_repeated_unigram_clipping():
    # "the" occurs once in the reference, so 4 hypothesis copies clip to 1/4
    score = corpus_bleu(["the the the the"], [["the cat"]])
    assert score == pytest.approx(oracle_bleu(["the the the the"], [["the cat"]]))


def test_bleu_brevity_penalty_half_length():
    # hypothesis half the reference length: BP = e^(1-2)
    hyp = ["a b c d"]
    ref = [["a b c d e f g h"]]
    full_precision_score = corpus_bleu(hyp, [["a b c d"]])
    score = corpus_bleu(hyp, ref)
    assert full_precision_score == pytest.approx(100.0)
    assert score == pytest.approx(oracle_bleu(hyp, ref))
    assert score / 100.0 == pytest.approx(math.exp(1 - 2), rel=1e-6)


def test_bleu_permutation_invariant():
    hyps = ["a b c", "d e f g", "h i"]
    refs = [["a b c"], ["d e g f"], ["i h"]]
    s1 = corpus_bleu(hyps, refs)
    s2 = corpus_bleu(list(reversed(hyps)), list(reversed(refs)))
    assert s1 == pytest.approx(s2)


def test_bleu_tokenizer_splits_punctuation():
    assert bleu_tokenize("Hello, world!") == ["Hello", ",", "world", "!"]


def test_bleu_errors():
    with pytest.raises(LengthMismatch):
        corpus_bleu(["a"], [])
    with pytest.raises(EmptyHypothesisSet):
        corpus_bleu([], [])
    with pytest.raises(EmptyHypothesisSet):
        corpus_bleu(["a"], [[]])


def test_bleu_matches_oracle_on_random_corpora():
    vocab = [f"w{i}" for i in range(10)]
    rng = random.Random(42)
    for _ in range(300):
        n_sent = rng.randint(1, 5)
        hyps, refs = [], []
        for _ in range(n_sent):
            hyps.append(" ".join(rng.choices(vocab, k=rng.randint(0, 8))))
            refs.append([" ".join(rng.choices(vocab, k=rng.randint(1, 8)))
                         for _ in range(rng.randint(1, 3))])
        if all(len(h) == 0 for h in hyps):
            continue
        assert corpus_bleu(hyps, refs) == pytest.approx(oracle_bleu(hyps, refs), abs=1e-9)


# --- exact match ---

def test_exact_match_counting():
    refs = [["a"], ["b"], ["c"], ["d"]]
    assert exact_match(["a", "b", "c", "d"], refs) == 1.0
    assert exact_match(["x", "y", "z", "q"], refs) == 0.0
    assert exact_match(["a", "b", "c", "q"], refs) == 0.75
    assert exact_match(["  a "], [["a"]]) == 1.0


# --- radar ---

def _report(model, scenario="fixed", **kv):
    base = {"model": model, "scenario": scenario, "params": 10**8,
            "peak_mem_gib": 1.0, "energy_wh": 1.0,
            "throughput_inst_s": None, "latency": None, "accuracy": None}
    base.update(kv)
    return base


def test_radar_throughput_higher_better():
    reports = [_report("a", throughput_inst_s=10.0), _report("b", throughput_inst_s=20.0)]
    assert radar_normalize(reports)["throughput"] == [0.5, 1.0]


def test_radar_latency_lower_better():
    reports = [
        _report("a", latency={"p50_ms": 30.0}),
        _report("b", latency={"p50_ms": 60.0}),
    ]
    assert radar_normalize(reports)["latency"] == [1.0, 0.5]


def test_radar_params_log_scale():
    reports = [_report("a", params=10**8), _report("b", params=10**9)]
    assert radar_normalize(reports)["params"] == pytest.approx([1.0, 8 / 9])


def test_radar_degenerate_range_all_ones():
    reports = [_report("a", energy_wh=2.0), _report("b", energy_wh=2.0)]
    assert radar_normalize(reports)["energy"] == [1.0, 1.0]


def test_radar_preserves_ranking():
    reports = [_report(m, energy_wh=e) for m, e in
               [("a", 5.0), ("b", 1.0), ("c", 3.0)]]
    values = radar_normalize(reports)["energy"]
    assert values[1] > values[2] > values[0]


def test_radar_mixed_scenarios_rejected():
    with pytest.raises(IncompatibleScenarios):
        radar_normalize([_report("a", scenario="fixed"),
                         _report("b", scenario="offline")])
