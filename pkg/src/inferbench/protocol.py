"""Line-oriented wire format between the harness and a model-under-test.

One UTF-8 JSON object per newline-terminated line:

  request   {"batch":["<input>", ...],"i":<int>}
  request   {"file":"<path>","i":0}            (offline: inputs come from a file)
  response  {"outputs":["<output>", ...],"i":<int>}
  ready     {"ready":true,"params":<int>,"name":"<string>"}

JSON escaping guarantees no raw newline ever appears inside a line, so any
payload string round-trips. Key order and compact separators are fixed so
independent adapter implementations can be compared byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import MalformedLine, LengthMismatch, IndexMismatch


@dataclass(frozen=True)
class ReadySignal:
    params: int
    model_name: str


@dataclass(frozen=True)
class ResponseLine:
    outputs: list[str]
    batch_index: int


def _dumps(obj) -> str:
    # ensure_ascii=False so output matches JSON.stringify-style encoders byte
    # for byte; the stream is UTF-8 either way.
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def encode_request(batch: list[str], batch_index: int) -> str:
    """Encode one online request as a single newline-terminated line."""
    if not batch:
        raise ValueError("batch must be non-empty")
    return _dumps({"batch": batch, "i": batch_index}) + "\n"


def encode_offline_request(path: str, batch_index: int = 0) -> str:
    """Encode the offline request: the model reads inputs from `path`."""
    return _dumps({"file": path, "i": batch_index}) + "\n"


def encode_response(outputs: list[str], batch_index: int) -> str:
    return _dumps({"outputs": outputs, "i": batch_index}) + "\n"


def encode_ready(params: int, name: str) -> str:
    return _dumps({"ready": True, "params": params, "name": name}) + "\n"


def decode_request(line: str):
    """Parse a request line; returns (batch, index) or ("file", path, index).

    Used by the selftest models and by protocol tests; the harness side only
    encodes requests.
    """
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise MalformedLine(line, str(e))
    if not isinstance(obj, dict):
        raise MalformedLine(line, "not an object")
    idx = obj.get("i")
    if not isinstance(idx, int) or idx < 0:
        raise MalformedLine(line, "missing or negative index")
    has_batch = "batch" in obj
    has_file = "file" in obj
    if has_batch == has_file:
        raise MalformedLine(line, "exactly one of batch/file required")
    if has_file:
        path = obj["file"]
        if not isinstance(path, str):
            raise MalformedLine(line, "file must be a string")
        return ("file", path, idx)
    batch = obj["batch"]
    if not isinstance(batch, list) or not batch or not all(isinstance(x, str) for x in batch):
        raise MalformedLine(line, "batch must be a non-empty list of strings")
    return (batch, idx)


def decode_response(line: str, expected_len: int, expected_index: int) -> ResponseLine:
    """Parse and validate one response line from the model."""
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise MalformedLine(line, str(e))
    if not isinstance(obj, dict) or "outputs" not in obj or "i" not in obj:
        raise MalformedLine(line, "missing outputs/i")
    outputs = obj["outputs"]
    if not isinstance(outputs, list) or not all(isinstance(x, str) for x in outputs):
        raise MalformedLine(line, "outputs must be a list of strings")
    idx = obj["i"]
    if not isinstance(idx, int):
        raise MalformedLine(line, "index must be an integer")
    if idx != expected_index:
        raise IndexMismatch(expected_index, idx, line)
    if len(outputs) != expected_len:
        raise LengthMismatch(expected_len, len(outputs), line)
    return ResponseLine(outputs=outputs, batch_index=idx)


def parse_ready(line: str) -> ReadySignal | None:
    """Return a ReadySignal if `line` is the ready message, else None.

    Anything that is not a well-formed ready object is treated as startup
    chatter, not an error.
    """
    stripped = line.strip()
    if not stripped.startswith("{"):
        return None
    try:
        obj = json.loads(stripped)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict) or obj.get("ready") is not True:
        return None
    params = obj.get("params")
    name = obj.get("name")
    if not isinstance(params, int) or params < 0 or not isinstance(name, str):
        return None
    return ReadySignal(params=params, model_name=name)
