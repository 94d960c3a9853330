"""Class H3 hashing over GF(2).

A key of ``key_bits`` bits is hashed by XOR-ing together the matrix rows
selected by the key's set bits. Bit ``m`` of the key (0-based, LSB first)
selects ``rows[m]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(state):
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


@dataclass(frozen=True)
class H3Matrix:
    key_bits: int
    index_bits: int
    rows: tuple

    def __post_init__(self):
        if len(self.rows) != self.key_bits:
            raise ValueError(f"expected {self.key_bits} rows, got {len(self.rows)}")
        limit = 1 << self.index_bits
        for m, row in enumerate(self.rows):
            if not 0 <= row < limit:
                raise ValueError(f"row {m} = {row:#x} does not fit in {self.index_bits} bits")

    def to_text(self):
        """Serialize as a header line plus one hex row per line."""
        width = (self.index_bits + 3) // 4
        lines = [f"h3 key_bits={self.key_bits} index_bits={self.index_bits}"]
        lines += [format(r, f"0{width}x") for r in self.rows]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines or not lines[0].startswith("h3 "):
            raise ValueError("missing 'h3 key_bits=.. index_bits=..' header")
        fields = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
        try:
            key_bits = int(fields["key_bits"])
            index_bits = int(fields["index_bits"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad H3 header: {lines[0]!r}") from exc
        rows = tuple(int(ln, 16) for ln in lines[1:])
        return cls(key_bits, index_bits, rows)


def h3_new(key_bits, index_bits, seed):
    """Draw a reproducible H3 matrix from a 64-bit seed."""
    if key_bits < 1 or index_bits < 1:
        raise ValueError("key_bits and index_bits must both be >= 1")
    state = seed & MASK64
    words_per_row = (index_bits + 63) // 64
    mask = (1 << index_bits) - 1
    rows = []
    for _ in range(key_bits):
        row = 0
        for w in range(words_per_row):
            state, out = splitmix64(state)
            row |= out << (64 * w)
        rows.append(row & mask)
    return H3Matrix(key_bits, index_bits, tuple(rows))


def h3_hash(matrix, key):
    if key < 0 or key >> matrix.key_bits:
        raise ValueError(f"key {key:#x} does not fit in {matrix.key_bits} bits")
    h = 0
    m = 0
    while key:
        if key & 1:
            h ^= matrix.rows[m]
        key >>= 1
        m += 1
    return h


@lru_cache(maxsize=64)
def byte_tables(matrix):
    """Per-key-byte lookup tables: ``tables[b][v]`` is the hash of ``v << 8*b``.

    Linearity lets a key hash be assembled from one lookup per key byte.
    The result is cached per matrix and must not be modified.
    """
    if matrix.index_bits > 63:
        raise ValueError("vectorized hashing supports index_bits <= 63")
    n_bytes = (matrix.key_bits + 7) // 8
    rows = np.zeros(8 * n_bytes, dtype=np.uint64)
    rows[: matrix.key_bits] = np.array(matrix.rows, dtype=np.uint64)
    tables = np.zeros((n_bytes, 256), dtype=np.uint64)
    for b in range(n_bytes):
        for bit in range(8):
            size = 1 << bit
            tables[b, size : 2 * size] = tables[b, :size] ^ rows[8 * b + bit]
    tables.flags.writeable = False
    return tables


def hash_limbs(matrix, keys):
    """Hash an ``(n, limbs)`` uint64 array of keys; returns int64 bucket indices."""
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    if keys.ndim == 1:
        keys = keys[:, None]
    tables = byte_tables(matrix)
    out = np.zeros(keys.shape[0], dtype=np.uint64)
    for b in range(tables.shape[0]):
        limb, shift = divmod(8 * b, 64)
        byte = (keys[:, limb] >> np.uint64(shift)) & np.uint64(0xFF)
        out ^= tables[b][byte.astype(np.intp)]
    return out.astype(np.int64)


# GF(2) linear algebra over the row space, used to build adversarial traces.


def _eliminate(matrix):
    """Return ``(pivots, kernel)``.

    ``pivots`` maps a leading bit to ``(vector, combination)`` where
    ``combination`` is the key whose hash is ``vector``. ``kernel`` holds
    linearly independent keys that hash to zero.
    """
    pivots = {}
    kernel = []
    for m, row in enumerate(matrix.rows):
        v, c = row, 1 << m
        while v:
            top = v.bit_length() - 1
            if top not in pivots:
                pivots[top] = (v, c)
                break
            pv, pc = pivots[top]
            v ^= pv
            c ^= pc
        if not v:
            kernel.append(c)
    return pivots, kernel


def rank(matrix):
    return len(_eliminate(matrix)[0])


def kernel_basis(matrix):
    """Basis of keys hashing to 0; its size is ``key_bits - rank``."""
    return _eliminate(matrix)[1]


def preimage(matrix, bucket):
    """One key hashing to ``bucket``, or None when the bucket is unreachable."""
    pivots, _ = _eliminate(matrix)
    t, c = bucket, 0
    while t:
        top = t.bit_length() - 1
        if top not in pivots:
            return None
        pv, pc = pivots[top]
        t ^= pv
        c ^= pc
    return c
