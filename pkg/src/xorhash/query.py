"""Queries, results and the columnar trace container."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

from .xorstore import ints_to_limb_array, limb_array_to_ints, limbs_to_int, n_limbs


class Op(IntEnum):
    SEARCH = 0
    INSERT = 1
    UPDATE = 2
    DELETE = 3

    @property
    def letter(self):
        return "SIUD"[self]

    @property
    def is_nsq(self):
        return self != Op.SEARCH


class Outcome(IntEnum):
    NONE = 0
    FOUND = 1
    INSERTED = 2
    UPDATED = 3
    DELETED = 4
    INSERT_FAILED = 5
    CAPACITY_VIOLATION = 6


@dataclass(frozen=True)
class Query:
    op: Op
    key: int
    value: Optional[int] = None
    trace_index: int = -1

    def __post_init__(self):
        upsert = self.op in (Op.INSERT, Op.UPDATE)
        if upsert and self.value is None:
            raise ValueError(f"{self.op.name} needs a value")
        if not upsert and self.value is not None:
            raise ValueError(f"{self.op.name} takes no value")


@dataclass(frozen=True)
class QueryResult:
    trace_index: int
    outcome: Outcome
    value: Optional[int]
    issue_cycle: int
    accept_cycle: int
    complete_cycle: int


class Trace:
    """Columnar query trace: op codes plus key/value limb arrays."""

    def __init__(self, ops, keys, values, key_bits, value_bits):
        self.ops = np.ascontiguousarray(ops, dtype=np.int8)
        self.keys = np.ascontiguousarray(keys, dtype=np.uint64).reshape(len(self.ops), n_limbs(key_bits))
        self.values = np.ascontiguousarray(values, dtype=np.uint64).reshape(len(self.ops), n_limbs(value_bits))
        self.key_bits = key_bits
        self.value_bits = value_bits

    def __len__(self):
        return len(self.ops)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.key_bits == other.key_bits
            and self.value_bits == other.value_bits
            and np.array_equal(self.ops, other.ops)
            and np.array_equal(self.keys, other.keys)
            and np.array_equal(self.values, other.values)
        )

    @classmethod
    def from_queries(cls, queries, key_bits, value_bits):
        queries = list(queries)
        ops = np.array([int(q.op) for q in queries], dtype=np.int8)
        keys = ints_to_limb_array([q.key for q in queries], key_bits)
        values = ints_to_limb_array([q.value or 0 for q in queries], value_bits)
        return cls(ops, keys, values, key_bits, value_bits)

    def query(self, i):
        op = Op(int(self.ops[i]))
        value = limbs_to_int(self.values[i]) if op in (Op.INSERT, Op.UPDATE) else None
        return Query(op, limbs_to_int(self.keys[i]), value, i)

    def __iter__(self):
        keys = limb_array_to_ints(self.keys)
        values = limb_array_to_ints(self.values)
        for i, code in enumerate(self.ops):
            op = Op(int(code))
            yield Query(op, keys[i], values[i] if op in (Op.INSERT, Op.UPDATE) else None, i)

    def key_ints(self):
        return limb_array_to_ints(self.keys)

    def value_ints(self):
        return limb_array_to_ints(self.values)

    def check_widths(self):
        """Raise if any key or value exceeds its declared width."""
        for name, arr, bits in (("key", self.keys, self.key_bits), ("value", self.values, self.value_bits)):
            rem = bits % 64
            if rem and len(arr) and np.any(arr[:, -1] >> np.uint64(rem)):
                i = int(np.argmax(arr[:, -1] >> np.uint64(rem) != 0))
                raise ValueError(f"trace record {i}: {name} does not fit in {bits} bits")
