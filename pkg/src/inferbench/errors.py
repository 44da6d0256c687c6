"""Exception hierarchy shared across the harness.

Exit-code classes used by the CLI:
  2 config, 3 protocol, 4 model crash, 5 metering.
"""


class HarnessError(Exception):
    """Base class for all harness failures."""

    exit_code = 1


class ConfigError(HarnessError):
    exit_code = 2


# --- protocol ---

class ProtocolError(HarnessError):
    exit_code = 3


class MalformedLine(ProtocolError):
    def __init__(self, line, reason="unparseable"):
        super().__init__(f"malformed protocol line ({reason}): {line!r}")
        self.line = line


class LengthMismatch(ProtocolError):
    def __init__(self, expected, got, line=""):
        super().__init__(f"expected {expected} outputs, got {got}: {line!r}")
        self.expected = expected
        self.got = got


class IndexMismatch(ProtocolError):
    def __init__(self, expected, got, line=""):
        super().__init__(f"expected batch index {expected}, got {got}: {line!r}")
        self.expected = expected
        self.got = got


# --- scenario planning ---

class EmptyDataset(ConfigError):
    pass


class CountExceedsDataset(ConfigError):
    pass


class LengthMatchFailure(ConfigError):
    pass


# --- runner ---

class SpawnFailure(HarnessError):
    exit_code = 4


class ReadyTimeout(HarnessError):
    exit_code = 4


class ResponseTimeout(HarnessError):
    exit_code = 4

    def __init__(self, msg, partial_record=None):
        super().__init__(msg)
        self.partial_record = partial_record


class ModelCrashed(HarnessError):
    exit_code = 4

    def __init__(self, msg, partial_record=None):
        super().__init__(msg)
        self.partial_record = partial_record


# --- metering ---

class MeteringError(HarnessError):
    exit_code = 5


class MeterUnavailable(MeteringError):
    pass


class InsufficientSamples(MeteringError):
    pass


class TraceGap(MeteringError):
    pass


class ProcessVanished(MeteringError):
    pass


# --- metrics ---

class ZeroDuration(HarnessError):
    pass


class EmptyHypothesisSet(HarnessError):
    pass


class DegenerateRange(HarnessError):
    pass


class IncompatibleScenarios(ConfigError):
    pass


# --- scheduler ---

class LockCorrupt(HarnessError):
    pass


class QueueTimeout(HarnessError):
    pass


class NotHolder(HarnessError):
    pass
