import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from xorhash.resource import (
    STRATIX10_GX2800,
    U250,
    TableGeometry,
    blocks_for_table,
    memory_sweep,
    get_device,
    load_device_profiles,
    max_entries,
    plan_rows,
    reference_plan,
    table_memory_bytes,
)


def test_memory_formula_examples():
    assert table_memory_bytes(TableGeometry(2, 1, 50_000, 2, 32, 32)) == 1_625_000
    assert table_memory_bytes(TableGeometry(16, 16, 50_000, 2, 32, 32)) == 208_000_000


def test_slot_word_includes_occupancy():
    assert TableGeometry(1, 1, 1, 1, 32, 32).slot_word_bits == 65


@given(st.integers(1, 16), st.integers(1, 1 << 16), st.integers(1, 8))
def test_memory_monotone_in_k(p, entries, slots):
    vals = [table_memory_bytes(TableGeometry(p, k, entries, slots, 32, 32)) for k in range(1, p + 1)]
    assert vals == sorted(vals)


def test_memory_sweep_monotone():
    rows = memory_sweep()
    assert len(rows) == 2 + 4 + 8 + 16
    for p in (2, 4, 8, 16):
        b = [r["bytes"] for r in rows if r["p"] == p]
        assert all(x < y for x, y in zip(b, b[1:]))


@pytest.mark.parametrize(
    "entries,p,k,blocks",
    [(128 * 1024, 4, 2, 1024), (64 * 1024, 8, 2, 1024), (32 * 1024, 16, 2, 1024), (16 * 1024, 8, 8, 1024)],
)
def test_u250_block_counts(entries, p, k, blocks):
    plan = blocks_for_table(TableGeometry(p, k, entries, 4, 32, 32), U250)
    assert plan.blocks == blocks
    assert plan.utilization == pytest.approx(0.8)
    assert plan.feasible


def test_reference_plan_rows():
    rows = reference_plan()
    assert [r["blocks"] for r in rows] == [1024] * 4


def test_wide_word_cascades_blocks():
    plan = blocks_for_table(TableGeometry(1, 1, 1024, 1, 64, 64), U250)
    assert plan.blocks_per_bank == 2  # 129 bits over 72-bit blocks


def test_infeasible_flagged():
    plan = blocks_for_table(TableGeometry(16, 16, 1 << 20, 4, 32, 32), U250)
    assert not plan.feasible and plan.utilization > 1


def test_max_entries():
    assert max_entries(U250, 4, 2, 4, 32, 32, 0.8) == 128 * 1024
    assert max_entries(U250, 4, 2, 4, 32, 32, 1.0) == 128 * 1024
    assert max_entries(STRATIX10_GX2800, 8, 4, 4, 32, 32) > 0
    with pytest.raises(ValueError):
        max_entries(U250, 1, 1, 1, 8, 8, 0)


def test_geometry_validation():
    with pytest.raises(ValueError):
        TableGeometry(2, 3, 4, 1, 8, 8)
    with pytest.raises(ValueError):
        TableGeometry(2, 1, 0, 1, 8, 8)


def test_device_profiles(tmp_path):
    path = tmp_path / "dev.json"
    path.write_text(json.dumps({"name": "toy", "blocks": 10, "depth": 64, "width": 8}))
    dev = get_device(str(path))
    assert (dev.name, dev.total_blocks, dev.block_bits) == ("toy", 10, 512)
    assert get_device("u250") is U250
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps([{"name": "x", "blocks": 1}]))
    with pytest.raises(ValueError):
        load_device_profiles(bad)


def test_plan_rows_skip_k_above_p():
    rows = plan_rows(U250, [2], [1, 2, 4], [1024], [4], [(32, 32)])
    assert [r[2] for r in rows] == [1, 2]
