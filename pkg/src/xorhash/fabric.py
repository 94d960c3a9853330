"""Query dispatch and the inter-PE mutation ring."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .query import Outcome, QueryResult
from .xorstore import DisciplineViolation, apply_write


@njit
def assign_batch(batch_nsq, p, k, cursors, busy, assigned):
    """Place one cycle's batch onto PEs.

    Mutations go round-robin over the ``k`` mutation-capable PEs (at most
    ``k`` per cycle); searches then take the remaining PEs round-robin.
    ``cursors`` holds ``[search_cursor, nsq_cursor]`` and is updated in
    place. ``assigned[i]`` is the PE for batch element ``i`` or -1.
    """
    m = batch_nsq.shape[0]
    for i in range(p):
        busy[i] = False
    used = 0
    for i in range(m):
        assigned[i] = -1
        if batch_nsq[i] and used < k:
            c = cursors[1]
            cand = c
            for t in range(k):
                cand = (c + t) % k
                if not busy[cand]:
                    break
            busy[cand] = True
            assigned[i] = cand
            cursors[1] = (cand + 1) % k
            used += 1
    for i in range(m):
        if not batch_nsq[i]:
            c = cursors[0]
            cand = c
            for t in range(p):
                cand = (c + t) % p
                if not busy[cand]:
                    break
            busy[cand] = True
            assigned[i] = cand
            cursors[0] = (cand + 1) % p


@njit
def dispatch_trace(is_nsq, p, k, reject):
    """Dispatch a whole trace; the schedule depends on op types only.

    Each cycle the batch is the deferred queue topped up from the trace head
    to ``p`` queries. Returns ``(issue, accept, pe, order, deferred_cycles,
    cycles)`` where ``order`` lists accepted trace indices by accept cycle.
    Rejected queries keep ``accept == -1``.
    """
    n = is_nsq.shape[0]
    issue = np.full(n, -1, dtype=np.int64)
    accept = np.full(n, -1, dtype=np.int64)
    pe = np.full(n, -1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    queue = np.empty(p, dtype=np.int64)
    batch = np.zeros(p, dtype=np.bool_)
    busy = np.zeros(p, dtype=np.bool_)
    assigned = np.empty(p, dtype=np.int64)
    cursors = np.zeros(2, dtype=np.int64)
    n_order = 0
    qlen = 0
    head = 0
    cycle = 0
    deferred_cycles = 0
    while head < n or qlen > 0:
        while qlen < p and head < n:
            queue[qlen] = head
            issue[head] = cycle
            head += 1
            qlen += 1
        for i in range(qlen):
            batch[i] = is_nsq[queue[i]]
        assign_batch(batch[:qlen], p, k, cursors, busy, assigned)
        kept = 0
        for i in range(qlen):
            q = queue[i]
            if assigned[i] >= 0:
                accept[q] = cycle
                pe[q] = assigned[i]
                order[n_order] = q
                n_order += 1
            elif not reject:
                queue[kept] = q
                kept += 1
        if kept > 0:
            deferred_cycles += 1
        qlen = kept
        cycle += 1
    return issue, accept, pe, order[:n_order], deferred_cycles, cycle


@dataclass
class DispatchPolicy:
    search_rr_cursor: int = 0
    nsq_rr_cursor: int = 0
    overflow_mode: str = "defer"


class Fabric:
    """Stateful per-cycle dispatcher plus the propagation ring."""

    def __init__(self, p, k, overflow_mode="defer"):
        if overflow_mode not in ("defer", "reject"):
            raise ValueError(f"unknown overflow mode {overflow_mode!r}")
        self.p = p
        self.k = k
        self.policy = DispatchPolicy(overflow_mode=overflow_mode)
        self.in_flight = []
        self._busy = np.zeros(p, dtype=np.bool_)
        self._assigned = np.empty(p, dtype=np.int64)

    def dispatch(self, batch, cycle):
        """Assign up to ``p`` queries to PEs for ``cycle``.

        Returns ``(assignments, leftover)``: ``assignments`` is a list of
        ``(pe_index, query)``. In defer mode ``leftover`` holds the queries to
        retry next cycle, in order; in reject mode it holds one
        CAPACITY_VIOLATION result per dropped query.
        """
        if len(batch) > self.p:
            raise ValueError(f"batch of {len(batch)} exceeds {self.p} PEs")
        if not batch:
            return [], []
        nsq = np.array([q.op.is_nsq for q in batch], dtype=np.bool_)
        cursors = np.array([self.policy.search_rr_cursor, self.policy.nsq_rr_cursor], dtype=np.int64)
        assign_batch(nsq, self.p, self.k, cursors, self._busy, self._assigned)
        self.policy.search_rr_cursor, self.policy.nsq_rr_cursor = int(cursors[0]), int(cursors[1])
        assignments, leftover = [], []
        for q, pe in zip(batch, self._assigned[: len(batch)]):
            if pe >= 0:
                assignments.append((int(pe), q))
            elif self.policy.overflow_mode == "defer":
                leftover.append(q)
            else:
                leftover.append(QueryResult(q.trace_index, Outcome.CAPACITY_VIOLATION, None, cycle, -1, cycle))
        return assignments, leftover

    def emit(self, message):
        self.in_flight.append(message)

    def propagate_step(self, replicas, cycle):
        """Write every in-flight message into its next replica.

        Hop 1 is the originating PE's own replica; hop ``h`` lands in replica
        ``origin + h - 1`` (mod p). Returns messages that finished their
        ``p``-th hop this cycle.
        """
        retired = []
        touched = set()
        for msg in self.in_flight:
            r = (msg.origin_pe + msg.hops_done) % self.p
            if (r, msg.owner) in touched:
                raise DisciplineViolation(f"replica {r} bank {msg.owner}: two writes in cycle {cycle}")
            touched.add((r, msg.owner))
            apply_write(replicas[r].banks[msg.owner], msg.entry, msg.slot, msg.word, cycle)
            msg.hops_done += 1
            if msg.hops_done == self.p:
                retired.append(msg)
        self.in_flight = [m for m in self.in_flight if m.hops_done < self.p]
        return retired


def dispatch(fabric, batch, cycle):
    return fabric.dispatch(batch, cycle)


def propagate_step(fabric, replicas, cycle):
    return fabric.propagate_step(replicas, cycle)
