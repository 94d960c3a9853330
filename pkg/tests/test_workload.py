import gzip

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_trace
from xorhash import Op, SimConfig, h3_new
from xorhash.h3hash import hash_limbs
from xorhash.workload import (
    TraceFormatError,
    WorkloadError,
    WorkloadSpec,
    gen_conflict_free,
    gen_same_bucket,
    gen_uniform,
    parse_trace_lines,
    same_bucket_keys,
    trace_read,
    trace_write,
)

CFG = SimConfig(p=8, k=4, entries=256, slots=4, key_bits=32, value_bits=32)


def test_uniform_is_seeded():
    a = gen_uniform(WorkloadSpec(total_queries=500, seed=1), CFG)
    b = gen_uniform(WorkloadSpec(total_queries=500, seed=1), CFG)
    c = gen_uniform(WorkloadSpec(total_queries=500, seed=2), CFG)
    assert a == b and not a == c


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.floats(0, 1), st.integers(0, 1000))
def test_per_batch_nsq_cap(k, frac, seed):
    cfg = SimConfig(p=8, k=k, entries=16, slots=2, key_bits=16, value_bits=16)
    frac = min(frac, k / 8)
    tr = gen_uniform(WorkloadSpec(total_queries=403, nsq_fraction=frac, key_space_bits=16, seed=seed), cfg)
    nsq = (tr.ops != Op.SEARCH).astype(int)
    nsq = np.pad(nsq, (0, (-len(nsq)) % 8)).reshape(-1, 8).sum(axis=1)
    assert nsq.max() <= k


def test_nsq_fraction_is_respected_on_average():
    tr = gen_uniform(WorkloadSpec(total_queries=40_000, nsq_fraction=0.3, seed=5), CFG)
    assert np.mean(tr.ops != Op.SEARCH) == pytest.approx(0.3, abs=0.01)


def test_nsq_fraction_above_ratio_rejected():
    with pytest.raises(WorkloadError):
        gen_uniform(WorkloadSpec(total_queries=10, nsq_fraction=0.75), CFG)


@pytest.mark.parametrize(
    "kwargs",
    [{"total_queries": -1}, {"nsq_fraction": 1.5}, {"op_mix": (1, 1)}, {"distribution": "zipf"}, {"hit_probability": 2}],
)
def test_spec_validation(kwargs):
    with pytest.raises(WorkloadError):
        WorkloadSpec(**kwargs)


def test_from_dict_rejects_unknown():
    with pytest.raises(WorkloadError):
        WorkloadSpec.from_dict({"queries": 5})
    assert WorkloadSpec.from_dict({"op_mix": [1, 0, 0]}).op_mix == (1, 0, 0)


def test_same_bucket_keys_distinct_and_colliding():
    m = h3_new(64, 10, 1)
    keys = same_bucket_keys(m, 17, 5000, 64, np.random.default_rng(0))
    ints = {tuple(k) for k in keys.tolist()}
    assert len(ints) == 5000
    assert set(hash_limbs(m, keys).tolist()) == {17}


def test_same_bucket_trace():
    m = h3_new(32, CFG.index_bits, CFG.seed)
    tr = gen_same_bucket(WorkloadSpec(total_queries=1000, distribution="same_bucket", target_bucket=3), CFG, m)
    assert set(hash_limbs(m, tr.keys).tolist()) == {3}


def test_conflict_free_gap():
    m = h3_new(32, CFG.index_bits, CFG.seed)
    tr = gen_conflict_free(WorkloadSpec(total_queries=2000, seed=2), CFG, m)
    b = hash_limbs(m, tr.keys)
    last = {}
    for i, bucket in enumerate(b.tolist()):
        cycle = i // CFG.p
        if bucket in last:
            assert cycle - last[bucket] > CFG.p + CFG.t0
        last[bucket] = cycle


def test_reuse_makes_searches_hit():
    tr = gen_uniform(WorkloadSpec(total_queries=2000, hit_probability=1.0, key_space_bits=32, seed=1), CFG)
    inserted = set()
    hits = 0
    for q in tr:
        if q.op == Op.INSERT:
            inserted.add(q.key)
        elif q.key in inserted:
            hits += 1
    assert hits > 500


@pytest.mark.parametrize("suffix", ["txt", "txt.gz"])
def test_trace_round_trip(tmp_path, suffix):
    tr = gen_uniform(WorkloadSpec(total_queries=300, seed=4), CFG)
    path = tmp_path / f"t.{suffix}"
    trace_write(path, tr)
    assert trace_read(path) == tr
    if suffix.endswith("gz"):
        with gzip.open(path, "rt") as fh:
            assert fh.readline().startswith("# key_bits=32")


def test_trace_format_text():
    lines = ["# demo", "I 00ff 0001", "", "S 00ff", "U 00ff 0002", "D 00ff"]
    tr = parse_trace_lines(lines)
    assert (tr.key_bits, tr.value_bits) == (16, 16)
    assert tr == make_trace([("I", 0xFF, 1), ("S", 0xFF), ("U", 0xFF, 2), ("D", 0xFF)])


@pytest.mark.parametrize(
    "lines,lineno",
    [(["S 01", "X 01"], 2), (["I 01"], 1), (["S 01 02"], 1), (["S zz"], 1), (["# key_bits=4", "S 1f"], 2)],
)
def test_trace_errors_name_the_line(lines, lineno):
    with pytest.raises(TraceFormatError) as exc:
        parse_trace_lines(lines)
    assert exc.value.lineno == lineno
    assert f"line {lineno}" in str(exc.value)
