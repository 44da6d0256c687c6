import json
import sys

import pytest

from inferbench.scenario import Instance


def selftest_cmd(mode, **kwargs):
    """argv for running the built-in selftest model as a subprocess."""
    cmd = [sys.executable, "-m", "inferbench.cli", "selftest-model", "--mode", mode]
    for key, value in kwargs.items():
        flag = "--" + key.replace("_", "-")
        if value is True:
            cmd.append(flag)
        elif value is not None:
            cmd += [flag, str(value)]
    return cmd


def make_instances(n, words_per_input=3, prefix="inst", with_reversed_refs=False):
    instances = []
    for k in range(n):
        text = " ".join(f"w{k}x{j}" for j in range(words_per_input))
        refs = (" ".join(reversed(text.split())),) if with_reversed_refs else ()
        instances.append(Instance(id=f"{prefix}{k}", input=text, references=refs))
    return instances


def write_jsonl(path, instances):
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps({
                "id": inst.id,
                "input": inst.input,
                "references": list(inst.references),
            }) + "\n")
    return str(path)


def write_trace_csv(path, samples):
    with open(path, "w", encoding="utf-8") as f:
        f.write("t_s,watts\n")
        for t, w in samples:
            f.write(f"{t},{w}\n")
    return str(path)


@pytest.fixture
def lock_path(tmp_path):
    return str(tmp_path / "bench.lock")
