"""Trace generation and the plain-text trace format.

Format: one query per line, ``<op> <key-hex> [<value-hex>]`` with op one of
S/I/U/D, keys and values as fixed-width lowercase hex. ``#`` starts a
comment. Files ending in ``.gz`` are read and written gzip-compressed.
"""
from __future__ import annotations

import gzip
from dataclasses import dataclass, field

import numpy as np

from .h3hash import hash_limbs, kernel_basis, preimage
from .query import Op, Trace
from .xorstore import int_to_limbs, limbs_to_int, n_limbs


class TraceFormatError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    total_queries: int = 10_000
    nsq_fraction: float = 0.5
    op_mix: tuple = (0.5, 0.25, 0.25)  # insert, update, delete weights within NSQ
    key_space_bits: int = 32
    distribution: str = "uniform"  # or "same_bucket"
    target_bucket: int = 0
    hit_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.total_queries < 0:
            raise WorkloadError("total_queries must be >= 0")
        if not 0.0 <= self.nsq_fraction <= 1.0:
            raise WorkloadError(f"nsq_fraction must be in [0, 1], got {self.nsq_fraction}")
        if len(self.op_mix) != 3 or min(self.op_mix) < 0 or sum(self.op_mix) <= 0:
            raise WorkloadError("op_mix needs three non-negative insert/update/delete weights")
        if self.key_space_bits < 1:
            raise WorkloadError("key_space_bits must be >= 1")
        if self.distribution not in ("uniform", "same_bucket"):
            raise WorkloadError(f"unknown distribution {self.distribution!r}")
        if not 0.0 <= self.hit_probability <= 1.0:
            raise WorkloadError("hit_probability must be in [0, 1]")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise WorkloadError(f"unknown workload field {sorted(unknown)[0]!r}")
        if "op_mix" in d:
            d["op_mix"] = tuple(d["op_mix"])
        return cls(**d)


def _random_limbs(rng, n, bits):
    nl = n_limbs(bits)
    out = rng.integers(0, 2**64, size=(n, nl), dtype=np.uint64, endpoint=False)
    rem = bits - 64 * (nl - 1)
    if rem < 64:
        out[:, -1] &= np.uint64((1 << rem) - 1)
    return out


def _op_codes(spec, config, rng):
    """Op types with at most ``k`` mutations in every aligned ``p``-batch."""
    p, k = config.p, config.k
    if spec.nsq_fraction > config.k / config.p + 1e-12:
        raise WorkloadError(
            f"nsq_fraction {spec.nsq_fraction} exceeds the NSQ ratio k/p = {k}/{p}; "
            "the trace would stall the mutation PEs"
        )
    n = spec.total_queries
    n_batches = -(-n // p)
    target = spec.nsq_fraction * p
    base = int(np.floor(target))
    extra = rng.random(n_batches) < (target - base)
    per_batch = np.minimum(base + extra, k)
    nsq = np.zeros((n_batches, p), dtype=bool)
    ranks = np.argsort(rng.random((n_batches, p)), axis=1)
    nsq[ranks < per_batch[:, None]] = True
    nsq = nsq.reshape(-1)[:n]
    weights = np.asarray(spec.op_mix, dtype=float)
    kinds = rng.choice(np.array([Op.INSERT, Op.UPDATE, Op.DELETE], dtype=np.int8), size=n, p=weights / weights.sum())
    return np.where(nsq, kinds, np.int8(Op.SEARCH)).astype(np.int8)


def _reuse_keys(ops, keys, hit_probability, rng):
    """Point searches, updates and deletes at earlier inserts with ``hit_probability``."""
    n = len(ops)
    ins_pos = np.flatnonzero(ops == Op.INSERT)
    earlier = np.searchsorted(ins_pos, np.arange(n))
    hit = (ops != Op.INSERT) & (rng.random(n) < hit_probability) & (earlier > 0)
    pick = (rng.random(n) * earlier).astype(np.int64)
    idx = np.flatnonzero(hit)
    keys[idx] = keys[ins_pos[pick[idx]]]
    return keys


def _assemble(ops, keys, config, rng):
    values = _random_limbs(rng, len(ops), config.value_bits)
    values[(ops == Op.SEARCH) | (ops == Op.DELETE)] = 0
    full = np.zeros((len(ops), n_limbs(config.key_bits)), dtype=np.uint64)
    full[:, : keys.shape[1]] = keys
    return Trace(ops, full, values, config.key_bits, config.value_bits)


def gen_uniform(spec, config):
    """Uniform keys over ``key_space_bits``, op types per the mix."""
    if spec.key_space_bits > config.key_bits:
        raise WorkloadError("key_space_bits exceeds the configured key width")
    rng = np.random.default_rng(spec.seed)
    ops = _op_codes(spec, config, rng)
    keys = _random_limbs(rng, len(ops), spec.key_space_bits)
    keys = _reuse_keys(ops, keys, spec.hit_probability, rng)
    return _assemble(ops, keys, config, rng)


def same_bucket_keys(matrix, target_bucket, count, key_space_bits, rng):
    """Distinct keys within ``key_space_bits`` that all hash to ``target_bucket``.

    Keys are one preimage XOR random combinations of the hash kernel; if the
    preimage set is smaller than ``count`` it is cycled.
    """
    from .h3hash import H3Matrix

    sub = H3Matrix(key_space_bits, matrix.index_bits, matrix.rows[:key_space_bits])
    base = preimage(sub, target_bucket)
    if base is None:
        raise WorkloadError(f"bucket {target_bucket:#x} is outside the hash's row space")
    basis = kernel_basis(sub)
    dim = min(len(basis), 62)
    if dim == 0:
        combos = np.zeros(count, dtype=np.uint64)
    elif count >= 1 << dim:
        combos = np.arange(count, dtype=np.uint64) % np.uint64(1 << dim)
    else:
        combos = np.unique(rng.integers(0, 1 << dim, size=count, dtype=np.uint64))
        while combos.size < count:
            more = rng.integers(0, 1 << dim, size=count - combos.size, dtype=np.uint64)
            combos = np.unique(np.concatenate([combos, more]))
        combos = rng.permutation(combos)[:count]
    nl = n_limbs(key_space_bits)
    keys = np.tile(np.array(int_to_limbs(base, nl), dtype=np.uint64), (count, 1))
    for i in range(dim):
        vec = np.array(int_to_limbs(basis[i], nl), dtype=np.uint64)
        sel = ((combos >> np.uint64(i)) & np.uint64(1)).astype(bool)
        keys[sel] ^= vec
    return keys


def gen_same_bucket(spec, config, matrix, target_bucket=None):
    """Adversarial trace: every key hashes to one bucket."""
    if target_bucket is None:
        target_bucket = spec.target_bucket
    if spec.key_space_bits > config.key_bits:
        raise WorkloadError("key_space_bits exceeds the configured key width")
    if spec.key_space_bits <= matrix.index_bits:
        raise WorkloadError("key space must be wider than the bucket index to have collisions")
    rng = np.random.default_rng(spec.seed)
    ops = _op_codes(spec, config, rng)
    keys = same_bucket_keys(matrix, target_bucket, len(ops), spec.key_space_bits, rng)
    keys = _reuse_keys(ops, keys, spec.hit_probability, rng)
    return _assemble(ops, keys, config, rng)


def gen_conflict_free(spec, config, matrix):
    """Uniform trace where queries sharing a bucket are at least ``p + t0`` cycles apart.

    Assumes the engine accepts ``p`` queries per cycle (no deferral), which
    the op placement guarantees. Needs ``entries`` comfortably larger than
    the number of queries in one window.
    """
    rng = np.random.default_rng(spec.seed)
    ops = _op_codes(spec, config, rng)
    gap = config.p + config.t0
    nl = n_limbs(spec.key_space_bits)
    last_use = {}
    inserted = []  # (key limbs, bucket)
    keys = np.zeros((len(ops), nl), dtype=np.uint64)
    pool, pool_buckets, pos = None, None, 0

    def fresh():
        nonlocal pool, pool_buckets, pos
        if pool is None or pos == len(pool):
            pool = _random_limbs(rng, 256, spec.key_space_bits)
            pool_buckets = hash_limbs(matrix, pool).tolist()
            pos = 0
        pos += 1
        return pool[pos - 1], pool_buckets[pos - 1]

    insert = int(Op.INSERT)
    for i, op in enumerate(ops.tolist()):
        cycle = i // config.p
        chosen = None
        if op != insert and inserted and rng.random() < spec.hit_probability:
            for _ in range(8):
                cand, b = inserted[int(rng.integers(len(inserted)))]
                if cycle - last_use.get(b, -gap - 1) > gap:
                    chosen, bucket = cand, b
                    break
        while chosen is None:
            cand, b = fresh()
            if cycle - last_use.get(b, -gap - 1) > gap:
                chosen, bucket = cand, b
        keys[i] = chosen
        last_use[bucket] = cycle
        if op == insert:
            inserted.append((chosen, bucket))
    return _assemble(ops, keys, config, rng)


def trace_write(path, trace):
    kw = (trace.key_bits + 3) // 4
    vw = (trace.value_bits + 3) // 4
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt", encoding="ascii", newline="\n") as fh:
        fh.write(f"# key_bits={trace.key_bits} value_bits={trace.value_bits}\n")
        keys = trace.key_ints()
        values = trace.value_ints()
        for i, code in enumerate(trace.ops):
            op = Op(int(code))
            if op in (Op.INSERT, Op.UPDATE):
                fh.write(f"{op.letter} {keys[i]:0{kw}x} {values[i]:0{vw}x}\n")
            else:
                fh.write(f"{op.letter} {keys[i]:0{kw}x}\n")


_LETTERS = {"S": Op.SEARCH, "I": Op.INSERT, "U": Op.UPDATE, "D": Op.DELETE}


def parse_trace_lines(lines, key_bits=None, value_bits=None):
    ops, keys, values = [], [], []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if line.startswith("#"):
            for tok in line[1:].split():
                name, _, val = tok.partition("=")
                if name == "key_bits" and key_bits is None:
                    key_bits = int(val)
                elif name == "value_bits" and value_bits is None:
                    value_bits = int(val)
            continue
        if not line:
            continue
        parts = line.split()
        op = _LETTERS.get(parts[0])
        if op is None:
            raise TraceFormatError(lineno, f"unknown op {parts[0]!r}")
        want = 3 if op in (Op.INSERT, Op.UPDATE) else 2
        if len(parts) != want:
            raise TraceFormatError(lineno, f"{op.name} takes {want - 1} field(s), got {len(parts) - 1}")
        try:
            key = int(parts[1], 16)
            value = int(parts[2], 16) if want == 3 else 0
        except ValueError as exc:
            raise TraceFormatError(lineno, f"bad hex field: {exc}") from None
        if key_bits is None:
            key_bits = 4 * len(parts[1])
        if want == 3 and value_bits is None:
            value_bits = 4 * len(parts[2])
        if key >> key_bits:
            raise TraceFormatError(lineno, f"key does not fit in {key_bits} bits")
        if value_bits is not None and value >> value_bits:
            raise TraceFormatError(lineno, f"value does not fit in {value_bits} bits")
        ops.append(op)
        keys.append(key)
        values.append(value)
    key_bits = key_bits or 64
    value_bits = value_bits or 64
    kl, vl = n_limbs(key_bits), n_limbs(value_bits)
    key_arr = np.array([int_to_limbs(k, kl) for k in keys], dtype=np.uint64).reshape(len(keys), kl)
    val_arr = np.array([int_to_limbs(v, vl) for v in values], dtype=np.uint64).reshape(len(values), vl)
    return Trace(np.array(ops, dtype=np.int8), key_arr, val_arr, key_bits, value_bits)


def trace_read(path, key_bits=None, value_bits=None):
    """Read a trace; widths come from the header or else the hex field width."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="ascii") as fh:
        return parse_trace_lines(fh, key_bits, value_bits)
