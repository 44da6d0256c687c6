"""Inference efficiency benchmarking harness.

Measures throughput, latency, peak memory, energy/CO2, parameter count, and
task accuracy of an arbitrary model-under-test run as a subprocess speaking
a JSON-lines stdio protocol, across four serving scenarios.
"""

__version__ = "0.1.0"
