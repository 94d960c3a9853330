import numpy as np
import pytest

from xorhash import Op, Outcome, Query, StageLatencies, h3_hash, h3_new
from xorhash.fabric import Fabric
from xorhash.pe import (
    BUCKET_FULL,
    FULL,
    MATCH,
    NOT_FOUND,
    NOT_FOUND_OUTCOME,
    OPEN,
    PE,
    MutationMessage,
    PEConfig,
    ResolveOutcome,
    RoutingError,
    pe_configs,
    resolve,
    resolve_row,
)
from xorhash.xorstore import DecodedSlot, Replica

KB = VB = 16


def make_pes(p=2, k=1, entries=8, slots=2, latencies=None):
    m = h3_new(KB, 3, 5)
    reps = [Replica(k, entries, slots, KB, VB) for _ in range(p)]
    pes = [PE(c, reps[c.pe_id], m) for c in pe_configs(p, k, latencies)]
    return pes, reps, m


def run_one(pe, q, cycle=0):
    pe.accept(q, cycle)
    out = None
    c = cycle
    while out is None:
        out = pe.step(c)
        c += 1
    return out, c - 1


def row(*cells):
    return [DecodedSlot(occ, key, val) for occ, key, val in cells]


def test_resolve_reference_cases():
    r = row((True, 7, 1), (False, 0, 0))
    assert resolve(r, Query(Op.SEARCH, 7)) == ResolveOutcome.match(0)
    assert resolve(r, Query(Op.SEARCH, 8)) == NOT_FOUND_OUTCOME
    assert resolve(r, Query(Op.INSERT, 8, 1)) == ResolveOutcome.open(1)
    assert resolve(r, Query(Op.UPDATE, 7, 2)) == ResolveOutcome.match(0)
    assert resolve(row((True, 1, 1), (True, 2, 2)), Query(Op.INSERT, 3, 3)) == BUCKET_FULL


def test_resolve_prefers_match_over_earlier_hole():
    r = row((False, 0, 0), (True, 9, 9))
    assert resolve(r, Query(Op.INSERT, 9, 1)) == ResolveOutcome.match(1)


def test_resolve_row_kernel_agrees():
    data = np.zeros((3, 2), dtype=np.uint64)
    data[1, 0] = 5
    occ = np.array([0, 1, 0], dtype=np.uint8)
    key = np.array([5], dtype=np.uint64)
    assert resolve_row(data, occ, key, False) == (MATCH, 1)
    assert resolve_row(data, occ, np.array([6], dtype=np.uint64), True) == (OPEN, 0)
    assert resolve_row(data, occ, np.array([6], dtype=np.uint64), False) == (NOT_FOUND, -1)
    assert resolve_row(data, np.ones(3, dtype=np.uint8), np.array([6], dtype=np.uint64), True) == (FULL, -1)


def test_pe_config_validation():
    with pytest.raises(ValueError):
        PEConfig(0, True)
    with pytest.raises(ValueError):
        PEConfig(1, False, 0)
    cfgs = pe_configs(4, 2)
    assert [c.mutation_capable for c in cfgs] == [True, True, False, False]
    assert [c.owner_id for c in cfgs] == [0, 1, None, None]


def test_search_only_rejects_mutation():
    pes, _, _ = make_pes()
    with pytest.raises(RoutingError):
        pes[1].accept(Query(Op.INSERT, 1, 1), 0)
    pes[1].accept(Query(Op.SEARCH, 1), 0)


def test_one_accept_per_cycle():
    pes, _, _ = make_pes()
    pes[0].accept(Query(Op.SEARCH, 1), 0)
    with pytest.raises(RoutingError):
        pes[0].accept(Query(Op.SEARCH, 2), 0)


@pytest.mark.parametrize("lat", [StageLatencies(), StageLatencies(2, 3, 1, 1)])
def test_search_latency_is_t0(lat):
    pes, _, _ = make_pes(latencies=lat)
    out, cycle = run_one(pes[0], Query(Op.SEARCH, 3, None, 0), cycle=10)
    assert out.outcome == Outcome.NONE
    assert cycle - 10 == lat.t0
    assert out.complete_cycle - out.accept_cycle == lat.t0


def test_insert_emits_raw_word_and_search_finds_it():
    pes, reps, m = make_pes()
    msg, cycle = run_one(pes[0], Query(Op.INSERT, 0x1234, 0xABCD, 0))
    assert isinstance(msg, MutationMessage)
    assert msg.owner == 0 and msg.origin_pe == 0 and msg.outcome == Outcome.INSERTED
    assert msg.entry == h3_hash(m, 0x1234) and msg.slot == 0
    assert msg.word.data == (0x1234 << VB) | 0xABCD and msg.word.occ == 1
    reps[0].write(0, msg.entry, msg.slot, msg.word)
    out, _ = run_one(pes[0], Query(Op.SEARCH, 0x1234, None, 1), cycle + 1)
    assert (out.outcome, out.value) == (Outcome.FOUND, 0xABCD)


def test_delete_miss_and_full_bucket_produce_no_write():
    pes, reps, m = make_pes(slots=1)
    out, _ = run_one(pes[0], Query(Op.DELETE, 5, None, 0))
    assert out.outcome == Outcome.NONE
    e = h3_hash(m, 5)
    reps[0].data[0, e, 0, 0] = 5
    reps[0].occ[0, e, 0] = 1
    other = next(x for x in range(1, 1 << KB) if h3_hash(m, x) == e and x != 5)
    out, _ = run_one(pes[0], Query(Op.INSERT, other, 1, 1), 20)
    assert out.outcome == Outcome.INSERT_FAILED


def test_back_to_back_mutations_on_one_pe_see_each_other():
    """Accepts one cycle apart: the second evaluates after the first hit the local replica."""
    pes, reps, _ = make_pes(p=1, k=1)
    fabric = Fabric(1, 1)
    pes[0].accept(Query(Op.INSERT, 9, 1, 0), 0)
    pes[0].accept(Query(Op.UPDATE, 9, 2, 1), 1)
    pes[0].accept(Query(Op.SEARCH, 9, None, 2), 2)
    outs = []
    for c in range(10):
        o = pes[0].step(c)
        if isinstance(o, MutationMessage):
            fabric.emit(o)
            outs.append(o.outcome)
        elif o is not None:
            outs.append((o.outcome, o.value))
        fabric.propagate_step(reps, c)
    assert outs == [Outcome.INSERTED, Outcome.UPDATED, (Outcome.FOUND, 2)]

