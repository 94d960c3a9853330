"""SRAM capacity planning for replicated XOR-banked tables."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from math import ceil


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    total_blocks: int
    block_depth: int
    block_width: int

    @property
    def block_bits(self):
        return self.block_depth * self.block_width

    @property
    def total_bits(self):
        return self.total_blocks * self.block_bits


# 1280 URAM blocks of 4K x 72 = 360 Mb.
U250 = DeviceProfile("u250", 1280, 4096, 72)
# 11721 M20K blocks of 512 x 40 = 229 Mb.
STRATIX10_GX2800 = DeviceProfile("stratix10-gx2800", 11721, 512, 40)

BUILTIN_DEVICES = {d.name: d for d in (U250, STRATIX10_GX2800)}


def load_device_profiles(path):
    """Read profiles from JSON: one object or a list of ``{name, blocks, depth, width}``."""
    with open(path) as fh:
        raw = json.load(fh)
    items = raw if isinstance(raw, list) else [raw]
    out = {}
    for i, item in enumerate(items):
        try:
            dev = DeviceProfile(str(item["name"]), int(item["blocks"]), int(item["depth"]), int(item["width"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"device profile #{i}: needs name, blocks, depth, width ({exc})") from None
        if min(dev.total_blocks, dev.block_depth, dev.block_width) < 1:
            raise ValueError(f"device profile {dev.name!r}: sizes must be positive")
        out[dev.name] = dev
    return out


def get_device(name_or_path):
    if name_or_path in BUILTIN_DEVICES:
        return BUILTIN_DEVICES[name_or_path]
    profiles = load_device_profiles(name_or_path)
    if len(profiles) != 1:
        raise ValueError(f"{name_or_path}: expected exactly one device profile")
    return next(iter(profiles.values()))


@dataclass(frozen=True)
class TableGeometry:
    p: int
    k: int
    entries: int
    slots: int
    key_bits: int
    value_bits: int

    def __post_init__(self):
        if self.p < 1 or not 1 <= self.k <= self.p:
            raise ValueError(f"need 1 <= k <= p, got p={self.p} k={self.k}")
        if self.entries < 1 or self.slots < 1:
            raise ValueError(f"entries and slots must be positive, got {self.entries}, {self.slots}")

    @property
    def slot_word_bits(self):
        # key + value + one occupancy bit
        return self.key_bits + self.value_bits + 1


def table_memory_bytes(geom):
    """Raw bits across all p replicas of k banks, in bytes (may be fractional)."""
    return geom.p * geom.k * geom.entries * geom.slots * geom.slot_word_bits / 8


@dataclass(frozen=True)
class BlockPlan:
    blocks_per_bank: int
    blocks: int
    utilization: float
    feasible: bool


def blocks_for_table(geom, device):
    """Block count when every bank is a depth x width cascade of SRAM blocks."""
    rows = ceil(geom.entries * geom.slots / device.block_depth)
    cols = ceil(geom.slot_word_bits / device.block_width)
    per_bank = rows * cols
    total = geom.p * geom.k * per_bank
    util = total / device.total_blocks
    return BlockPlan(per_bank, total, util, total <= device.total_blocks)


def max_entries(device, p, k, slots, key_bits, value_bits, budget_fraction=1.0):
    """Largest power-of-two entry count whose blocks fit ``budget_fraction`` of the device."""
    if not 0 < budget_fraction <= 1:
        raise ValueError("budget_fraction must be in (0, 1]")
    budget = budget_fraction * device.total_blocks
    best = 0
    e = 1
    while True:
        plan = blocks_for_table(TableGeometry(p, k, e, slots, key_bits, value_bits), device)
        if plan.blocks > budget:
            return best
        best = e
        e *= 2


# (entries, PEs, mutation PEs) for 32-bit keys and values, 4 slots. Each
# fills 1024 of the U250's 1280 URAM blocks.
REFERENCE_ROWS = ((128 * 1024, 4, 2), (64 * 1024, 8, 2), (32 * 1024, 16, 2), (16 * 1024, 8, 8))


def reference_plan(device=U250, slots=4, key_bits=32, value_bits=32):
    rows = []
    for entries, p, k in REFERENCE_ROWS:
        plan = blocks_for_table(TableGeometry(p, k, entries, slots, key_bits, value_bits), device)
        rows.append({"entries": entries, "p": p, "k": k, **asdict(plan)})
    return rows


def memory_sweep(entries=50_000, slots=2, key_bits=32, value_bits=32, pes=(2, 4, 8, 16)):
    """Memory for every (p, k) with k in 1..p at a fixed table size."""
    rows = []
    for p in pes:
        for k in range(1, p + 1):
            b = table_memory_bytes(TableGeometry(p, k, entries, slots, key_bits, value_bits))
            rows.append({"p": p, "k": k, "ratio": k / p, "entries": entries, "bytes": b})
    return rows


PLAN_HEADER = ("device", "p", "k", "ratio", "entries", "slots", "key_bits", "value_bits",
               "bytes", "blocks", "utilization", "feasible", "max_entries")


def plan_rows(device, ps, ks, entries_list, slots_list, widths, budget_fraction=1.0):
    """Capacity grid; ``ks`` entries above ``p`` are skipped, infeasible rows are flagged."""
    rows = []
    for p in ps:
        for k in ks:
            if k > p:
                continue
            for slots in slots_list:
                for key_bits, value_bits in widths:
                    cap = max_entries(device, p, k, slots, key_bits, value_bits, budget_fraction)
                    for entries in entries_list:
                        geom = TableGeometry(p, k, entries, slots, key_bits, value_bits)
                        plan = blocks_for_table(geom, device)
                        rows.append(
                            (device.name, p, k, k / p, entries, slots, key_bits, value_bits,
                             table_memory_bytes(geom), plan.blocks, plan.utilization, plan.feasible, cap)
                        )
    return rows
