import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxclades.rng import RngStream, next_u64, stream_key

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64_ref(z):
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK
    return z ^ (z >> 31)


def key_ref(seed, index):
    return mix64_ref(mix64_ref((seed + GOLDEN) & MASK) ^ ((index * 0xD1B54A32D192ED03 + GOLDEN) & MASK))


@given(st.integers(0, MASK), st.integers(0, MASK), st.integers(0, 10**6))
def test_draws_match_pure_python(seed, index, pos):
    key = np.uint64(stream_key(np.uint64(seed), np.uint64(index)))
    assert int(key) == key_ref(seed, index)
    assert int(next_u64(key, pos)) == mix64_ref((key_ref(seed, index) + (pos + 1) * GOLDEN) & MASK)


def test_same_stream_same_draws():
    a, b = RngStream(5, 3), RngStream(5, 3)
    assert np.array_equal(a.random(100), b.random(100))
    assert a.position == b.position == 100


def test_streams_differ_by_index():
    assert not np.array_equal(RngStream(5, 0).random(10), RngStream(5, 1).random(10))


def test_position_is_addressable():
    a = RngStream(9)
    a.random(7)
    tail = a.random(5)
    assert np.array_equal(RngStream(9, 0, position=7).random(5), tail)


def test_uniform_moments():
    u = RngStream(1).random(200_000)
    assert 0.0 <= u.min() and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)


@given(st.integers(0, 200))
def test_permutation_is_permutation(n):
    p = RngStream(n).permutation(n)
    assert sorted(p.tolist()) == list(range(1, n + 1))


def test_randbelow_range():
    r = RngStream(2)
    xs = [r.randbelow(7) for _ in range(2000)]
    assert set(xs) == set(range(7))


def test_rejects_bad_seed():
    with pytest.raises(ValueError):
        RngStream(-1)
