"""Sequential oracle replay and relaxed-consistency error accounting."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import run
from .h3hash import h3_new
from .query import Op, Outcome
from .workload import gen_uniform
from .xorstore import limbs_to_int

# plain ints: enum attribute lookups dominate the replay loops otherwise
_SEARCH, _DELETE = int(Op.SEARCH), int(Op.DELETE)
_FOUND = int(Outcome.FOUND)
NONE, FOUND, INSERTED, UPDATED, DELETED, INSERT_FAILED = (
    Outcome.NONE, Outcome.FOUND, Outcome.INSERTED, Outcome.UPDATED, Outcome.DELETED, Outcome.INSERT_FAILED
)


class OracleTable:
    """Plain bucket array: match first, then the lowest open slot."""

    def __init__(self, entries, slots):
        self.entries = entries
        self.slots = slots
        self.buckets = {}

    def apply(self, op, bucket, key, value=None):
        row = self.buckets.setdefault(bucket, [None] * self.slots)
        hit = next((s for s, cell in enumerate(row) if cell is not None and cell[0] == key), None)
        if op == _SEARCH:
            return (FOUND, row[hit][1]) if hit is not None else (NONE, None)
        if op == _DELETE:
            if hit is None:
                return NONE, None
            row[hit] = None
            return DELETED, None
        if hit is not None:
            row[hit] = (key, value)
            return UPDATED, None
        free = next((s for s, cell in enumerate(row) if cell is None), None)
        if free is None:
            return INSERT_FAILED, None
        row[free] = (key, value)
        return INSERTED, None

    def contents(self):
        """``{(bucket, slot): (key, value)}`` for occupied slots."""
        return {(b, s): cell for b, row in self.buckets.items() for s, cell in enumerate(row) if cell is not None}


def commit_order(result):
    """Serialization of a run: by evaluation cycle, reads before writes, then PE.

    Each query observes its replica in its evaluation cycle, and a mutation
    commits to its own replica in that same cycle after all reads.
    """
    idx = np.flatnonzero(result.accept_cycle >= 0)
    nsq = (result.ops[idx] != Op.SEARCH).astype(np.int64)
    keys = np.lexsort((result.pe[idx], nsq, result.eval_cycle[idx]))
    return idx[keys]


def reference_replay(config, trace, order, buckets):
    """Outcomes a fully consistent table yields under ``order``.

    Returns ``(outcome, value)`` lists indexed by trace position; queries
    not in ``order`` get ``(CAPACITY_VIOLATION, None)``.
    """
    table = OracleTable(config.entries, config.slots)
    keys = trace.key_ints()
    values = trace.value_ints()
    outcomes = [Outcome.CAPACITY_VIOLATION] * len(trace)
    found = [None] * len(trace)
    ops, buckets = trace.ops.tolist(), np.asarray(buckets).tolist()
    upsert = (int(Op.INSERT), int(Op.UPDATE))
    for i in np.asarray(order).tolist():
        op = ops[i]
        outcomes[i], found[i] = table.apply(op, buckets[i], keys[i], values[i] if op in upsert else None)
    return outcomes, found, table


@dataclass
class ErrorReport:
    n_err: int = 0
    errors: list = field(default_factory=list)  # (trace_index, conflicting_index, gap)
    derived: int = 0
    unexplained_mismatches: int = 0
    unexplained: list = field(default_factory=list)  # trace indices
    duplicates: int = 0
    window: int = 0


def duplicate_keys(result, r=0):
    """Count (bucket, key) pairs stored in more than one slot of replica ``r``."""
    occ, data = result.decoded_state(r)
    kl = result.keys.shape[1]
    keys = data[..., :kl]
    S = occ.shape[1]
    dup = np.zeros(occ.shape[0], dtype=np.int64)
    for a in range(S):
        for b in range(a + 1, S):
            same = occ[:, a] & occ[:, b] & np.all(keys[:, a] == keys[:, b], axis=-1)
            dup += same
    return int(dup.sum())


def classify(sim, oracle, trace, config, order=None):
    """Attribute every simulator/oracle mismatch.

    A mismatch is an error when a mutation to the same bucket was still in
    flight, i.e. accepted at most ``p + t0 - 1`` cycles before the query's
    evaluation cycle and serialized before it. Mutations that raced another
    mutation on their bucket leave the bucket diverged from the oracle;
    later mismatches there are counted as ``derived`` rather than as new
    errors. Anything else is unexplained.
    """
    exp_outcome, exp_value = oracle
    if order is None:
        order = commit_order(sim)
    window = config.p + config.t0 - 1
    report = ErrorReport(window=config.p + config.t0)
    keys = trace.key_ints()
    buckets, evals, accepts = sim.buckets.tolist(), sim.eval_cycle.tolist(), sim.accept_cycle.tolist()
    outcomes = sim.outcome.tolist()
    nsq = (trace.ops != _SEARCH).tolist()
    recent = {}
    tainted = set()
    for i in order.tolist() if hasattr(order, "tolist") else order:
        b = buckets[i]
        t = evals[i]
        q = recent.get(b)
        if q:
            while q and t - q[0][0] > window:
                q.pop(0)
        conflict = None
        for a, j in reversed(q or ()):
            if keys[j] == keys[i]:
                conflict = (a, j)
                break
            if conflict is None:
                conflict = (a, j)
        got = outcomes[i]
        value = sim.found_value(i) if got == _FOUND else None
        if got != exp_outcome[i] or value != exp_value[i]:
            if conflict is not None:
                report.n_err += 1
                report.errors.append((i, conflict[1], t - conflict[0]))
            elif b in tainted:
                report.derived += 1
            else:
                report.unexplained_mismatches += 1
                report.unexplained.append(i)
        if nsq[i]:
            if conflict is not None:
                tainted.add(b)
            recent.setdefault(b, []).append((accepts[i], i))
    if sim.data is not None:
        report.duplicates = duplicate_keys(sim)
    return report


def verify_trace(config, trace, matrix=None, fault_upsert=-1):
    """Simulate, replay and classify one trace; returns ``(report, result, errors, oracle_table)``."""
    if matrix is None:
        matrix = h3_new(config.key_bits, config.index_bits, config.seed)
    sim_report, result = run(config, trace, matrix, fault_upsert=fault_upsert)
    order = commit_order(result)
    outcomes, found, table = reference_replay(config, trace, order, result.buckets)
    errors = classify(result, (outcomes, found), trace, config, order)
    return sim_report, result, errors, table


def final_state_matches(result, table, key_bits):
    """True when replica 0 decodes to exactly the oracle's occupied slots."""
    occ, data = result.decoded_state(0)
    kl = result.keys.shape[1]
    got = {}
    for e, s in zip(*np.nonzero(occ)):
        got[(int(e), int(s))] = (limbs_to_int(data[e, s, :kl]), limbs_to_int(data[e, s, kl:]))
    return got == table.contents()


def bound(p, t0, theta):
    return min(1.0, (p * p + p * t0) / theta)


@dataclass
class BoundCheck:
    trials: list  # (trial, n_err, duplicates, unexplained, derived)
    table: list  # (theta, empirical, bound)

    @property
    def ok(self):
        return all(emp <= b for _, emp, b in self.table) and all(t[3] == 0 for t in self.trials)

    TRIAL_HEADER = ("trial", "n_err", "duplicates", "unexplained", "derived")
    BOUND_HEADER = ("theta", "empirical", "bound")

    def trials_csv(self):
        return _csv(self.TRIAL_HEADER, self.trials)

    def bound_csv(self):
        return _csv(self.BOUND_HEADER, self.table)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _trial(args):
    config, spec, i, fault = args
    trace = gen_uniform(replace(spec, seed=spec.seed + i), config)
    _, _, err, _ = verify_trace(config, trace, fault_upsert=fault)
    return (i, err.n_err, err.duplicates, err.unexplained_mismatches, err.derived)


def check_bound(config, workload_spec, trials, theta_list, jobs=1, fault_upsert=-1):
    """Empirical ``P(n_err >= theta)`` over seeded trials against the tail bound."""
    args = [(config, workload_spec, i, fault_upsert) for i in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_trial, args, chunksize=max(1, trials // (4 * jobs))))
    else:
        rows = [_trial(a) for a in args]
    n_err = np.array([r[1] for r in rows])
    table = [
        (theta, float(np.mean(n_err >= theta)) if trials else 0.0, bound(config.p, config.t0, theta))
        for theta in theta_list
    ]
    return BoundCheck(rows, table)
