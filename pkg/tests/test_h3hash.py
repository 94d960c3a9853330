import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xorhash.h3hash import (
    H3Matrix,
    hash_limbs,
    h3_hash,
    h3_new,
    kernel_basis,
    preimage,
    rank,
)
from xorhash.xorstore import ints_to_limb_array


def gf2_matvec(matrix, key):
    """Independent oracle: key bit vector (LSB first) times Q over GF(2)."""
    q = np.array([[(row >> c) & 1 for c in range(matrix.index_bits)] for row in matrix.rows], dtype=np.int64)
    x = np.array([(key >> m) & 1 for m in range(matrix.key_bits)], dtype=np.int64)
    bits = (x @ q) % 2
    return int(sum(int(b) << c for c, b in enumerate(bits)))


def test_shape_small():
    m = h3_new(4, 3, seed=1)
    assert len(m.rows) == 4
    assert all(0 <= r < 8 for r in m.rows)


def test_shape_32_16():
    m = h3_new(32, 16, seed=7)
    assert len(m.rows) == 32
    assert all(r < 65536 for r in m.rows)


def test_deterministic():
    assert h3_new(4, 3, seed=1) == h3_new(4, 3, seed=1)
    assert h3_new(32, 16, seed=1) != h3_new(32, 16, seed=2)


@pytest.mark.parametrize("key_bits,index_bits", [(0, 3), (4, 0)])
def test_rejects_zero_widths(key_bits, index_bits):
    with pytest.raises(ValueError):
        h3_new(key_bits, index_bits, 1)


def test_zero_key_hashes_to_zero():
    for seed in range(5):
        assert h3_hash(h3_new(16, 5, seed), 0) == 0


def test_worked_example():
    m = H3Matrix(4, 3, (0b001, 0b010, 0b100, 0b111))
    assert gf2_matvec(m, 0b1011) == 0b100
    assert h3_hash(m, 0b1011) == 0b100


def test_key_out_of_range():
    with pytest.raises(ValueError):
        h3_hash(h3_new(4, 3, 1), 16)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 130), st.integers(1, 20), st.integers(0, 2**64 - 1), st.data())
def test_matches_gf2_oracle(key_bits, index_bits, seed, data):
    m = h3_new(key_bits, index_bits, seed)
    key = data.draw(st.integers(0, 2**key_bits - 1))
    assert h3_hash(m, key) == gf2_matvec(m, key)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 128), st.integers(0, 2**64 - 1), st.data())
def test_linearity(key_bits, seed, data):
    m = h3_new(key_bits, 12, seed)
    x = data.draw(st.integers(0, 2**key_bits - 1))
    y = data.draw(st.integers(0, 2**key_bits - 1))
    assert h3_hash(m, x ^ y) == h3_hash(m, x) ^ h3_hash(m, y)


@pytest.mark.parametrize("key_bits", [1, 7, 32, 64, 65, 128])
def test_vectorized_matches_scalar(key_bits):
    m = h3_new(key_bits, 10, 99)
    rng = np.random.default_rng(key_bits)
    keys = [int(rng.integers(0, 2**63)) << max(0, key_bits - 63) for _ in range(50)]
    keys = [k & ((1 << key_bits) - 1) for k in keys] + [0, (1 << key_bits) - 1]
    got = hash_limbs(m, ints_to_limb_array(keys, key_bits))
    assert got.tolist() == [h3_hash(m, k) for k in keys]


def test_text_round_trip():
    m = h3_new(32, 16, 7)
    assert H3Matrix.from_text(m.to_text()) == m


def test_text_rejects_garbage():
    with pytest.raises(ValueError):
        H3Matrix.from_text("nonsense\n01\n")


def test_preimage_and_kernel():
    m = h3_new(20, 8, 3)
    r = rank(m)
    basis = kernel_basis(m)
    assert len(basis) == 20 - r
    assert all(h3_hash(m, v) == 0 for v in basis)
    for bucket in (0, 1, 77, 255):
        x = preimage(m, bucket)
        if r == 8:
            assert x is not None
        if x is not None:
            assert h3_hash(m, x) == bucket


def test_unreachable_bucket():
    m = H3Matrix(3, 3, (0b001, 0b001, 0b010))
    assert preimage(m, 0b100) is None
    assert preimage(m, 0b011) is not None
