"""Cycle loop, metrics and reports."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import _jit
from ._jit import njit
from .config import SimConfig
from .fabric import Fabric, dispatch_trace
from .h3hash import h3_new, hash_limbs
from .pe import FULL, MATCH, PE, MutationMessage, pe_configs, resolve_row
from .query import Op, Outcome, QueryResult
from .xorstore import (
    DisciplineViolation,
    Replica,
    decode_row,
    encode_delete_cell,
    encode_upsert_cell,
    limbs_to_int,
    write_cell,
)

OP_NAMES = ("search", "insert", "update", "delete")
_FOUND = int(Outcome.FOUND)


@njit
def execute_trace(ops, keys, values, buckets, accept, pe_of, order, p, k, t0, fault_upsert, data, occ):
    """Run the accepted queries through PEs and the propagation ring.

    ``data``/``occ`` are the ``(p, k, E, S, ...)`` replica arrays, updated in
    place. Each query is evaluated in cycle ``accept + t0`` against its PE's
    replica as it stood at the end of the previous cycle; writes of that
    cycle (local commits plus ring hops) land afterwards.
    """
    n = ops.shape[0]
    S = data.shape[3]
    kl = keys.shape[1]
    vl = values.shape[1]
    L = kl + vl
    outcome = np.full(n, -1, dtype=np.int8)
    found = np.zeros((n, vl), dtype=np.uint64)
    slot_out = np.full(n, -1, dtype=np.int64)
    eval_cycle = np.full(n, -1, dtype=np.int64)
    complete = np.full(n, -1, dtype=np.int64)
    violations = 0
    n_order = order.shape[0]
    if n_order == 0:
        return outcome, found, slot_out, eval_cycle, complete, 0, violations

    msg_cycle = np.full((k, p), -1, dtype=np.int64)
    msg_entry = np.zeros((k, p), dtype=np.int64)
    msg_slot = np.zeros((k, p), dtype=np.int64)
    msg_word = np.zeros((k, p, L), dtype=np.uint64)
    msg_occ = np.zeros((k, p), dtype=np.uint8)
    last_write = np.full((p, k), -1, dtype=np.int64)
    row_data = np.empty((S, L), dtype=np.uint64)
    row_occ = np.empty(S, dtype=np.uint8)
    kv = np.empty(L, dtype=np.uint64)
    word = np.empty(L, dtype=np.uint64)

    end = accept[order[n_order - 1]] + t0 + p - 1
    ptr = 0
    upserts = 0
    for t in range(end + 1):
        while ptr < n_order and accept[order[ptr]] + t0 == t:
            q = order[ptr]
            ptr += 1
            r = pe_of[q]
            e = buckets[q]
            op = ops[q]
            rd = data[r]
            ro = occ[r]
            decode_row(rd, ro, e, row_data, row_occ)
            code, s = resolve_row(row_data, row_occ, keys[q], op == 1 or op == 2)
            eval_cycle[q] = t
            slot_out[q] = s
            complete[q] = t
            o_bit = -1
            if op == 0:
                if code == MATCH:
                    outcome[q] = 1
                    for j in range(vl):
                        found[q, j] = row_data[s, kl + j]
                else:
                    outcome[q] = 0
            elif op == 1 or op == 2:
                if code == FULL:
                    outcome[q] = 5
                else:
                    for j in range(kl):
                        kv[j] = keys[q, j]
                    for j in range(vl):
                        kv[kl + j] = values[q, j]
                    o_bit = encode_upsert_cell(rd, ro, r, e, s, kv, word)
                    if upserts == fault_upsert:
                        word[0] ^= np.uint64(1)
                    upserts += 1
                    outcome[q] = 3 if code == MATCH else 2
            else:
                if code == MATCH:
                    o_bit = encode_delete_cell(rd, ro, r, e, s, word)
                    outcome[q] = 4
                else:
                    outcome[q] = 0
            if o_bit >= 0:
                i = t % p
                msg_cycle[r, i] = t
                msg_entry[r, i] = e
                msg_slot[r, i] = s
                msg_occ[r, i] = o_bit
                for j in range(L):
                    msg_word[r, i, j] = word[j]
                complete[q] = t + p - 1
        for o in range(k):
            for d in range(p):
                c = t - d
                if c < 0:
                    break
                i = c % p
                if msg_cycle[o, i] != c:
                    continue
                rep = (o + d) % p
                if last_write[rep, o] == t:
                    violations += 1
                last_write[rep, o] = t
                write_cell(data[rep], occ[rep], o, msg_entry[o, i], msg_slot[o, i], msg_word[o, i], msg_occ[o, i])
    return outcome, found, slot_out, eval_cycle, complete, end + 1, violations


@dataclass
class SimReport:
    config: dict
    total_cycles: int
    steady_cycles: int
    completed_queries: int
    rejected_queries: int
    mops: float
    mops_steady: float
    latency: dict
    deferred_cycles: int
    discipline_violations: int
    backend: str = field(default_factory=_jit.backend_name)

    def to_tree(self):
        return {
            "config": self.config,
            "backend": self.backend,
            "total_cycles": self.total_cycles,
            "steady_cycles": self.steady_cycles,
            "completed_queries": self.completed_queries,
            "rejected_queries": self.rejected_queries,
            "mops": self.mops,
            "mops_steady": self.mops_steady,
            "deferred_cycles": self.deferred_cycles,
            "discipline_violations": self.discipline_violations,
            "latency": self.latency,
        }

    def to_json(self):
        return json.dumps(self.to_tree(), indent=2, sort_keys=True)

    CSV_HEADER = ("op", "metric", "value")

    def csv_rows(self):
        rows = [
            ("all", "total_cycles", self.total_cycles),
            ("all", "steady_cycles", self.steady_cycles),
            ("all", "completed_queries", self.completed_queries),
            ("all", "rejected_queries", self.rejected_queries),
            ("all", "mops", self.mops),
            ("all", "mops_steady", self.mops_steady),
            ("all", "deferred_cycles", self.deferred_cycles),
            ("all", "discipline_violations", self.discipline_violations),
        ]
        for op, stats in self.latency.items():
            for metric, value in stats.items():
                if metric != "histogram":
                    rows.append((op, metric, value))
        return rows

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        w.writerows(self.csv_rows())
        return buf.getvalue()


@dataclass
class RunResult:
    """Per-query columns from one simulation."""

    ops: np.ndarray
    keys: np.ndarray
    buckets: np.ndarray
    outcome: np.ndarray
    found: np.ndarray
    slot: np.ndarray
    issue_cycle: np.ndarray
    accept_cycle: np.ndarray
    eval_cycle: np.ndarray
    complete_cycle: np.ndarray
    pe: np.ndarray
    key_bits: int
    value_bits: int
    data: np.ndarray = None
    occ: np.ndarray = None

    def __len__(self):
        return len(self.ops)

    def found_value(self, i):
        if self.outcome[i] != _FOUND:
            return None
        return limbs_to_int(self.found[i])

    def result(self, i):
        return QueryResult(
            i,
            Outcome(int(self.outcome[i])),
            self.found_value(i),
            int(self.issue_cycle[i]),
            int(self.accept_cycle[i]),
            int(self.complete_cycle[i]),
        )

    def results(self):
        return [self.result(i) for i in range(len(self))]

    def replica(self, r):
        """Rebuild replica ``r`` from the final state arrays."""
        p, k, E, S, _ = self.data.shape
        rep = Replica(k, E, S, self.key_bits, self.value_bits)
        rep.data[...] = self.data[r]
        rep.occ[...] = self.occ[r]
        return rep

    def decoded_state(self, r=0):
        """``(occupied[E,S], data[E,S,limbs])`` of replica ``r``."""
        return (
            np.bitwise_xor.reduce(self.occ[r], axis=0).astype(bool),
            np.bitwise_xor.reduce(self.data[r], axis=0),
        )

    def replicas_identical(self):
        if self.data is None or self.data.shape[0] == 1:
            return True
        occ0, data0 = self.decoded_state(0)
        for r in range(1, self.data.shape[0]):
            occ, data = self.decoded_state(r)
            if not np.array_equal(occ, occ0) or not np.array_equal(data[occ0], data0[occ0]):
                return False
        return True

    CSV_HEADER = ("trace_index", "op", "key", "outcome", "issue", "accept", "complete")

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        width = (self.key_bits + 3) // 4
        for i in range(len(self)):
            key = format(limbs_to_int(self.keys[i]), f"0{width}x")
            w.writerow(
                (
                    i,
                    Op(int(self.ops[i])).letter,
                    key,
                    Outcome(int(self.outcome[i])).name,
                    int(self.issue_cycle[i]),
                    int(self.accept_cycle[i]),
                    int(self.complete_cycle[i]),
                )
            )


def _summary(cycles, clock_mhz):
    if cycles.size == 0:
        return {"count": 0}
    values, counts = np.unique(cycles, return_counts=True)
    return {
        "count": int(cycles.size),
        "cycles_min": int(cycles.min()),
        "cycles_max": int(cycles.max()),
        "cycles_mean": float(cycles.mean()),
        "ns_min": float(cycles.min()) / clock_mhz * 1000.0,
        "ns_max": float(cycles.max()) / clock_mhz * 1000.0,
        "ns_mean": float(cycles.mean()) / clock_mhz * 1000.0,
        "histogram": {str(int(v)): int(c) for v, c in zip(values, counts)},
    }


def measure_latency(results, clock_mhz):
    """Per-op latency (accept to completion) in cycles and ns.

    Mutations are split into those that committed a write and those that
    did not (insert into a full bucket, delete miss).
    """
    if len(results) == 0:
        raise ValueError("no results to measure")
    ok = results.accept_cycle >= 0
    lat = results.complete_cycle - results.accept_cycle
    committed = np.isin(results.outcome, (Outcome.INSERTED, Outcome.UPDATED, Outcome.DELETED))
    out = {"search": _summary(lat[ok & (results.ops == Op.SEARCH)], clock_mhz)}
    for code in (Op.INSERT, Op.UPDATE, Op.DELETE):
        sel = ok & (results.ops == code)
        out[OP_NAMES[code]] = _summary(lat[sel & committed], clock_mhz)
        out[OP_NAMES[code] + "_uncommitted"] = _summary(lat[sel & ~committed], clock_mhz)
    return out


def _report(config, res, total_cycles, deferred_cycles, violations):
    completed = int(np.count_nonzero(res.accept_cycle >= 0))
    rejected = len(res) - completed
    if completed:
        # accept span, then p + t0 drain cycles so every write has landed
        steady = int(res.accept_cycle.max()) + 1
        total_cycles = max(total_cycles, steady + config.p + config.t0)
    else:
        steady = 0
    mops = completed / total_cycles * config.clock_mhz if total_cycles else 0.0
    mops_steady = completed / steady * config.clock_mhz if steady else 0.0
    return SimReport(
        config=config.to_dict(),
        total_cycles=int(total_cycles),
        steady_cycles=int(steady),
        completed_queries=completed,
        rejected_queries=rejected,
        mops=mops,
        mops_steady=mops_steady,
        latency=measure_latency(res, config.clock_mhz) if len(res) else {},
        deferred_cycles=int(deferred_cycles),
        discipline_violations=int(violations),
    )


def run(config, trace, matrix=None, fault_upsert=-1):
    """Simulate ``trace`` on ``config``; returns ``(SimReport, RunResult)``.

    ``fault_upsert`` corrupts the key bit 0 of the n-th committed upsert
    word (test-only negative control).
    """
    if trace.key_bits != config.key_bits or trace.value_bits != config.value_bits:
        raise ValueError(
            f"trace widths {trace.key_bits}/{trace.value_bits} do not match config "
            f"{config.key_bits}/{config.value_bits}"
        )
    trace.check_widths()
    if matrix is None:
        matrix = h3_new(config.key_bits, config.index_bits, config.seed)
    buckets = hash_limbs(matrix, trace.keys) if len(trace) else np.zeros(0, dtype=np.int64)
    p, k = config.p, config.k
    is_nsq = trace.ops != Op.SEARCH
    issue, accept, pe, order, deferred, dispatch_cycles = dispatch_trace(
        is_nsq, p, k, config.overflow_mode == "reject"
    )
    limbs = trace.keys.shape[1] + trace.values.shape[1]
    data = np.zeros((p, k, config.entries, config.slots, limbs), dtype=np.uint64)
    occ = np.zeros((p, k, config.entries, config.slots), dtype=np.uint8)
    outcome, found, slot, eval_cycle, complete, cycles, violations = execute_trace(
        trace.ops, trace.keys, trace.values, buckets, accept, pe, order, p, k, config.t0, fault_upsert, data, occ
    )
    rejected = accept < 0
    outcome[rejected] = Outcome.CAPACITY_VIOLATION
    complete[rejected] = issue[rejected]
    res = RunResult(
        ops=trace.ops,
        keys=trace.keys,
        buckets=buckets,
        outcome=outcome,
        found=found,
        slot=slot,
        issue_cycle=issue,
        accept_cycle=accept,
        eval_cycle=eval_cycle,
        complete_cycle=complete,
        pe=pe,
        key_bits=config.key_bits,
        value_bits=config.value_bits,
        data=data,
        occ=occ,
    )
    if violations:
        raise DisciplineViolation(f"{violations} same-cycle double writes to a bank")
    return _report(config, res, max(cycles, dispatch_cycles), deferred, violations), res


def run_stepwise(config, trace, matrix=None):
    """Object-level cycle loop over :class:`PE` and :class:`Fabric`.

    Much slower than :func:`run`; kept as an independently orchestrated
    model that the fused kernel is checked against.
    """
    if matrix is None:
        matrix = h3_new(config.key_bits, config.index_bits, config.seed)
    p, k = config.p, config.k
    replicas = [Replica(k, config.entries, config.slots, config.key_bits, config.value_bits) for _ in range(p)]
    pes = [PE(c, replicas[c.pe_id], matrix) for c in pe_configs(p, k, config.latencies)]
    fabric = Fabric(p, k, config.overflow_mode)
    queries = list(trace)
    results = {}
    issue = {}
    head = 0
    pending = []
    cycle = 0
    while head < len(queries) or pending or any(pe.pipeline for pe in pes) or fabric.in_flight:
        while len(pending) < p and head < len(queries):
            issue[head] = cycle
            pending.append(queries[head])
            head += 1
        assignments, leftover = fabric.dispatch(pending, cycle)
        for pe_idx, q in assignments:
            pes[pe_idx].accept(q, cycle, issue[q.trace_index])
        if config.overflow_mode == "defer":
            pending = leftover
        else:
            for r in leftover:
                results[r.trace_index] = QueryResult(
                    r.trace_index, r.outcome, None, issue[r.trace_index], -1, issue[r.trace_index]
                )
            pending = []
        for pe in pes:
            out = pe.step(cycle)
            if isinstance(out, MutationMessage):
                fabric.emit(out)
            elif out is not None:
                results[out.trace_index] = out
        for msg in fabric.propagate_step(replicas, cycle):
            results[msg.trace_index] = QueryResult(
                msg.trace_index, msg.outcome, None, issue[msg.trace_index], msg.accept_cycle, cycle
            )
        cycle += 1
    return [results[i] for i in range(len(queries))], replicas
