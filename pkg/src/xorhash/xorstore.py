"""XOR-encoded banked storage.

A replica holds ``k`` single-read single-write banks. Each bank cell stores
an encoded fragment of a slot: ``data`` (key and value bits) and a one-bit
occupancy fragment. The logical slot is the XOR of the fragments across all
banks, so a mutation owner only ever rewrites its own bank.

Cells are kept as uint64 limbs: the key limbs first, then the value limbs.
XOR is bitwise, so the limb layout never changes the algebra.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jit import njit


class DisciplineViolation(RuntimeError):
    """A bank saw two writes in one cycle, or a write from a foreign owner."""


def n_limbs(bits):
    return (bits + 63) // 64


def int_to_limbs(value, n):
    return [(value >> (64 * i)) & 0xFFFFFFFFFFFFFFFF for i in range(n)]


def limbs_to_int(limbs):
    out = 0
    for i, limb in enumerate(limbs):
        out |= int(limb) << (64 * i)
    return out


def ints_to_limb_array(values, bits):
    """Pack Python ints into an ``(n, limbs)`` uint64 array."""
    nl = n_limbs(bits)
    arr = np.zeros((len(values), nl), dtype=np.uint64)
    if nl == 1:
        arr[:, 0] = np.fromiter(values, dtype=np.uint64, count=len(values))
        return arr
    for i, v in enumerate(values):
        arr[i] = int_to_limbs(v, nl)
    return arr


def limb_array_to_ints(arr):
    arr = np.asarray(arr)
    if arr.shape[1] == 1:
        return [int(v) for v in arr[:, 0]]
    return [limbs_to_int(row) for row in arr]


# Array kernels. ``data`` is a ``(k, entries, slots, limbs)`` uint64 array and
# ``occ`` a ``(k, entries, slots)`` uint8 array for one replica.


@njit
def decode_cell(data, occ, entry, slot, out):
    """XOR all banks of one cell into ``out``; returns the occupancy bit."""
    k = data.shape[0]
    for j in range(data.shape[3]):
        acc = np.uint64(0)
        for b in range(k):
            acc ^= data[b, entry, slot, j]
        out[j] = acc
    o = 0
    for b in range(k):
        o ^= occ[b, entry, slot]
    return o


@njit
def decode_row(data, occ, entry, row_data, row_occ):
    for s in range(data.shape[2]):
        row_occ[s] = decode_cell(data, occ, entry, s, row_data[s])


@njit
def encode_upsert_cell(data, occ, owner, entry, slot, kv, out):
    """Word for ``owner``'s bank so that the cell decodes to ``kv``, occupied."""
    k = data.shape[0]
    for j in range(data.shape[3]):
        acc = kv[j]
        for b in range(k):
            if b != owner:
                acc ^= data[b, entry, slot, j]
        out[j] = acc
    o = 1
    for b in range(k):
        if b != owner:
            o ^= occ[b, entry, slot]
    return o


@njit
def encode_delete_cell(data, occ, owner, entry, slot, out):
    """Word for ``owner``'s bank clearing occupancy; data residue is kept."""
    k = data.shape[0]
    for j in range(data.shape[3]):
        out[j] = data[owner, entry, slot, j]
    o = 0
    for b in range(k):
        if b != owner:
            o ^= occ[b, entry, slot]
    return o


@njit
def write_cell(data, occ, bank, entry, slot, word, occ_bit):
    for j in range(data.shape[3]):
        data[bank, entry, slot, j] = word[j]
    occ[bank, entry, slot] = occ_bit


@dataclass(frozen=True)
class EncodedSlot:
    data: int
    occ: int


@dataclass(frozen=True)
class DecodedSlot:
    occupied: bool
    key: int
    value: int


@dataclass(frozen=True)
class XorMemSpec:
    m: int
    n: int

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("an XOR memory needs at least one read and one write port")


def blocks_required(spec, shared_read_ports):
    """SRAM blocks for an mRnW XOR memory.

    Dedicated write-side read ports cost n*(n-1+m) blocks; sharing the read
    ports between reads and write encoding brings it down to m*n.
    """
    if shared_read_ports:
        return spec.m * spec.n
    return spec.n * (spec.n - 1 + spec.m)


class Bank:
    """One bank of a replica; a view into the replica arrays."""

    def __init__(self, replica, owner):
        self.replica = replica
        self.owner = owner
        self.last_write_cycle = None

    @property
    def cells(self):
        return self.replica.data[self.owner], self.replica.occ[self.owner]

    def read(self, entry, slot):
        r = self.replica
        return EncodedSlot(r._word_to_int(r.data[self.owner, entry, slot]), int(r.occ[self.owner, entry, slot]))


class Replica:
    """One PE's full copy of the table, split across ``k`` banks."""

    def __init__(self, k, entries, slots, key_bits, value_bits):
        if k < 1:
            raise ValueError("a replica needs at least one bank")
        self.k = k
        self.entries = entries
        self.slots = slots
        self.key_bits = key_bits
        self.value_bits = value_bits
        self.key_limbs = n_limbs(key_bits)
        self.value_limbs = n_limbs(value_bits)
        limbs = self.key_limbs + self.value_limbs
        self.data = np.zeros((k, entries, slots, limbs), dtype=np.uint64)
        self.occ = np.zeros((k, entries, slots), dtype=np.uint8)
        self.banks = [Bank(self, b) for b in range(k)]

    @property
    def width(self):
        return self.key_bits + self.value_bits

    # (key || value) as one int <-> limb vector
    def _kv_to_word(self, key, value):
        return np.array(
            int_to_limbs(key, self.key_limbs) + int_to_limbs(value, self.value_limbs), dtype=np.uint64
        )

    def _word_to_int(self, limbs):
        key = limbs_to_int(limbs[: self.key_limbs])
        value = limbs_to_int(limbs[self.key_limbs :])
        return (key << self.value_bits) | value

    def _int_to_word(self, data):
        key, value = data >> self.value_bits, data & ((1 << self.value_bits) - 1)
        return self._kv_to_word(key, value)

    def decode_slot(self, entry, slot):
        out = np.empty(self.data.shape[3], dtype=np.uint64)
        o = decode_cell(self.data, self.occ, entry, slot, out)
        return DecodedSlot(
            bool(o), limbs_to_int(out[: self.key_limbs]), limbs_to_int(out[self.key_limbs :])
        )

    def encode_upsert(self, owner, entry, slot, key, value):
        self._check_owner(owner)
        kv = self._kv_to_word(key, value)
        out = np.empty_like(kv)
        o = encode_upsert_cell(self.data, self.occ, owner, entry, slot, kv, out)
        return EncodedSlot(self._word_to_int(out), int(o))

    def encode_delete(self, owner, entry, slot):
        self._check_owner(owner)
        out = np.empty(self.data.shape[3], dtype=np.uint64)
        o = encode_delete_cell(self.data, self.occ, owner, entry, slot, out)
        return EncodedSlot(self._word_to_int(out), int(o))

    def write(self, owner, entry, slot, word, cycle=None):
        """Store ``word`` in bank ``owner``; at most one write per bank per cycle."""
        self._check_owner(owner)
        apply_write(self.banks[owner], entry, slot, word, cycle)

    def _check_owner(self, owner):
        if not 0 <= owner < self.k:
            raise DisciplineViolation(f"owner {owner} has no bank in a {self.k}-bank replica")

    def decoded_table(self):
        """``(occupied[E,S], keys, values)`` with keys/values as nested int lists."""
        data = np.bitwise_xor.reduce(self.data, axis=0)
        occ = np.bitwise_xor.reduce(self.occ, axis=0).astype(bool)
        keys = [[limbs_to_int(data[e, s, : self.key_limbs]) for s in range(self.slots)] for e in range(self.entries)]
        vals = [[limbs_to_int(data[e, s, self.key_limbs :]) for s in range(self.slots)] for e in range(self.entries)]
        return occ, keys, vals

    def dump(self):
        """Flat snapshot: bank-major, entry-major, slot-major.

        Each cell is one occupancy byte followed by the big-endian
        ``key || value`` word padded to whole bytes.
        """
        nbytes = (self.width + 7) // 8
        out = bytearray()
        for b in range(self.k):
            for e in range(self.entries):
                for s in range(self.slots):
                    out.append(int(self.occ[b, e, s]))
                    out += self._word_to_int(self.data[b, e, s]).to_bytes(nbytes, "big")
        return bytes(out)

    def dump_hex(self):
        nbytes = 1 + (self.width + 7) // 8
        raw = self.dump()
        return "".join(raw[i : i + nbytes].hex() + "\n" for i in range(0, len(raw), nbytes))

    def load(self, raw):
        nbytes = (self.width + 7) // 8
        cell = 1 + nbytes
        expected = self.k * self.entries * self.slots * cell
        if len(raw) != expected:
            raise ValueError(f"snapshot holds {len(raw)} bytes, geometry needs {expected}")
        i = 0
        for b in range(self.k):
            for e in range(self.entries):
                for s in range(self.slots):
                    self.occ[b, e, s] = raw[i]
                    self.data[b, e, s] = self._int_to_word(int.from_bytes(raw[i + 1 : i + cell], "big"))
                    i += cell


def decode_slot(replica, entry, slot):
    return replica.decode_slot(entry, slot)


def encode_upsert(replica, owner, entry, slot, key, value):
    return replica.encode_upsert(owner, entry, slot, key, value)


def encode_delete(replica, owner, entry, slot):
    return replica.encode_delete(owner, entry, slot)


def apply_write(bank, entry, slot, word, cycle=None):
    """Replace one cell of ``bank`` verbatim with ``word``.

    When ``cycle`` is given, a second write to the same bank in that cycle
    raises :class:`DisciplineViolation`.
    """
    if cycle is not None:
        if bank.last_write_cycle == cycle:
            raise DisciplineViolation(
                f"bank {bank.owner}: second write in cycle {cycle} (entry {entry}, slot {slot})"
            )
        bank.last_write_cycle = cycle
    r = bank.replica
    write_cell(r.data, r.occ, bank.owner, entry, slot, r._int_to_word(word.data), word.occ & 1)
    return bank
