from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from maxclades.errors import CapExceeded
from maxclades.treegen import (BinaryTree, gen_bst_insert, gen_bst_split, sample_ct_clock,
                               sample_ct_size)
from maxclades.rng import RngStream
from maxclades import oracle

from strategies import maybe_trees


@given(maybe_trees)
def test_nested_round_trip(t):
    T = BinaryTree.from_nested(t)
    assert T.to_nested() == t
    assert T.n == oracle.size(t)


@given(maybe_trees)
def test_parents_precede_children(t):
    T = BinaryTree.from_nested(t)
    for v in range(T.n):
        for c in T.children(v):
            assert c < 0 or c > v


@given(st.integers(0, 300), st.integers(0, 2**32))
def test_generated_trees_are_consistent(n, seed):
    for gen in (gen_bst_split, gen_bst_insert):
        T = gen(n, RngStream(seed))
        assert T.n == n
        if n:
            assert T.size[0] == n
            rebuilt = BinaryTree.from_nested(T.to_nested())
            assert rebuilt.shape() == T.shape()
            assert sorted(rebuilt.size) == sorted(T.size)


def test_from_permutation_examples():
    assert BinaryTree.from_permutation([2, 1, 3]).to_nested() == ((None, None), (None, None))
    assert BinaryTree.from_permutation([1, 2, 3]).to_nested() == (None, (None, (None, None)))


def test_path_and_empty():
    assert BinaryTree.path(3).shape() == (2, 1, 0)
    assert BinaryTree.path(3, "right").shape() == (0, 0, 0)
    assert BinaryTree.empty().n == 0


def test_arrays_are_read_only():
    T = gen_bst_split(5, RngStream(0))
    with pytest.raises(ValueError):
        T.left[0] = 3


@pytest.mark.parametrize("gen", [gen_bst_split, gen_bst_insert])
def test_shape_law_n4(gen):
    law = {t: float(p) for t, p in oracle.shape_law(4)}
    R = 40_000
    rng = RngStream(44)
    counts = Counter(gen(4, rng).to_nested() for _ in range(R))
    assert set(counts) <= set(law)
    shapes = sorted(law, key=repr)
    res = chisquare([counts[s] for s in shapes], [law[s] * R for s in shapes])
    assert res.pvalue > 1e-3


def test_split_is_deterministic():
    a = gen_bst_split(1000, RngStream(3, 9))
    b = gen_bst_split(1000, RngStream(3, 9))
    assert np.array_equal(a.left, b.left) and np.array_equal(a.right, b.right)


def test_ct_size_law():
    rng = RngStream(8)
    R = 100_000
    sizes = np.array([sample_ct_size(rng) for _ in range(R)])
    n = np.arange(1, 11)
    p = 2.0 / ((n + 1) * (n + 2))
    obs = np.append(np.bincount(np.minimum(sizes, 11), minlength=12)[1:11], (sizes > 10).sum())
    assert chisquare(obs, np.append(p, 1 - p.sum()) * R).pvalue > 1e-3


def test_clock_tree_is_valid_and_capped():
    rng = RngStream(1)
    T = sample_ct_clock(2.0, rng)
    assert T.n >= 1 and T.size[0] == T.n
    with pytest.raises(CapExceeded):
        # a tiny rate almost surely outgrows a cap of 5 nodes
        for i in range(50):
            sample_ct_clock(1e-3, RngStream(2, i), cap=5)


def test_bad_arguments():
    with pytest.raises(ValueError):
        gen_bst_split(-1, RngStream(0))
    with pytest.raises(ValueError):
        sample_ct_clock(0.0, RngStream(0))
