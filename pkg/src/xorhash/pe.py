"""Processing engine pipeline model.

A PE hashes a query, reads the bucket row from every bank of its local
replica, runs it through the decode tree (and, for mutations, the encode
tree) and resolves the outcome. Stage latencies only shape timing: the row
snapshot is taken in the cycle the query leaves the pipeline, so a PE always
observes its own earlier mutations. Staleness therefore only comes from
other PEs' writes still travelling the propagation ring.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._jit import njit
from .config import StageLatencies
from .h3hash import h3_hash
from .query import Op, Outcome, QueryResult

MATCH, OPEN, FULL, NOT_FOUND = 0, 1, 2, 3


class RoutingError(RuntimeError):
    """A query was offered to a PE that cannot serve it."""


@dataclass(frozen=True)
class PEConfig:
    pe_id: int
    mutation_capable: bool
    owner_id: Optional[int] = None
    stage_latencies: StageLatencies = field(default_factory=StageLatencies)

    def __post_init__(self):
        if self.mutation_capable and self.owner_id is None:
            raise ValueError("a mutation-capable PE needs an owner_id")
        if not self.mutation_capable and self.owner_id is not None:
            raise ValueError("a search-only PE owns no bank")
        self.stage_latencies.validate()

    @property
    def t0(self):
        return self.stage_latencies.t0


def pe_configs(p, k, latencies=None):
    """PEs 0..k-1 are mutation capable and own banks 0..k-1."""
    latencies = latencies or StageLatencies()
    return [PEConfig(i, i < k, i if i < k else None, latencies) for i in range(p)]


@dataclass(frozen=True)
class ResolveOutcome:
    kind: str  # "match", "open", "full", "not_found"
    slot: Optional[int] = None

    @classmethod
    def match(cls, slot):
        return cls("match", slot)

    @classmethod
    def open(cls, slot):
        return cls("open", slot)


BUCKET_FULL = ResolveOutcome("full")
NOT_FOUND_OUTCOME = ResolveOutcome("not_found")


def resolve(decoded_row, query):
    """Match first, then (for upserts) the lowest open slot."""
    for s, cell in enumerate(decoded_row):
        if cell.occupied and cell.key == query.key:
            return ResolveOutcome.match(s)
    if query.op in (Op.INSERT, Op.UPDATE):
        for s, cell in enumerate(decoded_row):
            if not cell.occupied:
                return ResolveOutcome.open(s)
        return BUCKET_FULL
    return NOT_FOUND_OUTCOME


@njit
def resolve_row(row_data, row_occ, key, upsert):
    """Array form of :func:`resolve`; returns ``(code, slot)``."""
    S = row_data.shape[0]
    kl = key.shape[0]
    for s in range(S):
        if row_occ[s]:
            same = True
            for j in range(kl):
                if row_data[s, j] != key[j]:
                    same = False
                    break
            if same:
                return MATCH, s
    if upsert:
        for s in range(S):
            if not row_occ[s]:
                return OPEN, s
        return FULL, -1
    return NOT_FOUND, -1


@dataclass
class MutationMessage:
    """Encoded write travelling the PE ring; ``word`` never changes en route."""

    owner: int
    origin_pe: int
    entry: int
    slot: int
    word: object  # EncodedSlot
    created_cycle: int
    trace_index: int = -1
    outcome: Outcome = Outcome.NONE
    accept_cycle: int = -1
    hops_done: int = 0


@dataclass
class InFlightQuery:
    query: object
    bucket: int
    accept_cycle: int
    issue_cycle: int
    stage_counter: int
    decoded_row: list = field(default_factory=list)
    outcome: Optional[ResolveOutcome] = None
    encoded_word: object = None


class PE:
    """Cycle-stepped processing engine bound to one replica."""

    def __init__(self, config, replica, matrix):
        self.config = config
        self.replica = replica
        self.matrix = matrix
        self.pipeline = deque()
        self._last_accept = None

    @property
    def pe_id(self):
        return self.config.pe_id

    def accept(self, query, cycle, issue_cycle=None):
        if query.op.is_nsq and not self.config.mutation_capable:
            raise RoutingError(f"PE {self.pe_id} is search-only; cannot take {query.op.name}")
        if self._last_accept == cycle:
            raise RoutingError(f"PE {self.pe_id} already accepted a query in cycle {cycle}")
        self._last_accept = cycle
        bucket = h3_hash(self.matrix, query.key)
        self.pipeline.append(
            InFlightQuery(query, bucket, cycle, cycle if issue_cycle is None else issue_cycle, self.config.t0)
        )
        return True

    def step(self, cycle):
        """Advance the pipeline by one cycle.

        Returns a :class:`QueryResult` for searches and for mutations that
        produce no write, a :class:`MutationMessage` for committing
        mutations, or None when nothing leaves the pipeline this cycle.
        """
        for f in self.pipeline:
            f.stage_counter -= 1
        if not self.pipeline or self.pipeline[0].accept_cycle + self.config.t0 != cycle:
            return None
        f = self.pipeline.popleft()
        return self._finish(f, cycle)

    def _finish(self, f, cycle):
        q, rep, e = f.query, self.replica, f.bucket
        f.decoded_row = [rep.decode_slot(e, s) for s in range(rep.slots)]
        f.outcome = resolve(f.decoded_row, q)

        def done(outcome, value=None):
            return QueryResult(q.trace_index, outcome, value, f.issue_cycle, f.accept_cycle, cycle)

        if q.op == Op.SEARCH:
            if f.outcome.kind == "match":
                return done(Outcome.FOUND, f.decoded_row[f.outcome.slot].value)
            return done(Outcome.NONE)
        owner = self.config.owner_id
        if q.op in (Op.INSERT, Op.UPDATE):
            if f.outcome.kind == "full":
                return done(Outcome.INSERT_FAILED)
            f.encoded_word = rep.encode_upsert(owner, e, f.outcome.slot, q.key, q.value)
            result = Outcome.UPDATED if f.outcome.kind == "match" else Outcome.INSERTED
        else:
            if f.outcome.kind != "match":
                return done(Outcome.NONE)
            f.encoded_word = rep.encode_delete(owner, e, f.outcome.slot)
            result = Outcome.DELETED
        return MutationMessage(
            owner, self.pe_id, e, f.outcome.slot, f.encoded_word, cycle, q.trace_index, result, f.accept_cycle
        )


def pe_accept(pe, query, cycle):
    return pe.accept(query, cycle)


def pe_step(pe, cycle):
    return pe.step(cycle)
