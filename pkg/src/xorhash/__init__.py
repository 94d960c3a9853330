"""Cycle-level model of a replicated, XOR-banked parallel hash table."""
from .config import ConfigError, SimConfig, StageLatencies
from .engine import run, measure_latency, SimReport, RunResult
from .h3hash import H3Matrix, h3_hash, h3_new
from .query import Op, Outcome, Query, QueryResult, Trace

__all__ = [
    "ConfigError", "SimConfig", "StageLatencies", "run", "measure_latency", "SimReport", "RunResult",
    "H3Matrix", "h3_hash", "h3_new", "Op", "Outcome", "Query", "QueryResult", "Trace",
]
__version__ = "0.1.0"
