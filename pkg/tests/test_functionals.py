import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxclades import oracle
from maxclades.errors import TableTooShort
from maxclades.exact import build_mu_nu
from maxclades.functionals import (clade_census, count_chains, count_F, count_F_small, decompose,
                                   is_green, maximal_green, node_values, stream_functionals,
                                   sum_additive, toll_f, tree_functionals)
from maxclades.rng import RngStream
from maxclades.treegen import BinaryTree, gen_bst_split

from strategies import maybe_trees, trees

BALANCED3 = ((None, None), (None, None))


def test_small_examples():
    assert count_F(BinaryTree.empty()) == 0
    T = BinaryTree.from_nested(BALANCED3)
    assert not is_green(T)
    assert count_F(T) == 2 and toll_f(T) == 0
    P = BinaryTree.path(3)
    assert count_F(P) == 1 and toll_f(P) == 0
    assert toll_f(P, 2) == 1


def test_chain_examples():
    ch = count_chains(BinaryTree.path(3), 3)
    assert ch.F == (3, 3, 1) and ch.f == (1, 2, 1)
    ch = count_chains(BinaryTree.from_nested(BALANCED3), 3)
    assert ch.F == (2, 0, 0) and ch.f == (0, 0, 0)


def test_long_path_saturates():
    ch = count_chains(BinaryTree.path(200), 64)
    assert ch.saturated and max(ch.F) == 2**63 - 1


@given(trees)
def test_against_reference(t):
    T = BinaryTree.from_nested(t)
    nv = node_values(T)
    assert count_F(T) == oracle.max_clades(t)
    assert toll_f(T) == oracle.toll(t)
    assert sum_additive(T, lambda T, v: int(nv.toll[v])) == count_F(T)
    assert sorted(s + 1 for s in maximal_green(T)) == sorted(oracle.maximal_clade_sizes(t))
    ch = count_chains(T, 8)
    any_k, root_k = oracle.chains(t, 8)
    assert list(ch.F) == any_k and list(ch.f) == root_k


@given(trees, st.integers(0, 50))
def test_small_counts(t, N):
    T = BinaryTree.from_nested(t)
    direct = count_F_small(T, N, "direct")
    assert direct == count_F_small(T, N, "toll") == oracle.small_max_clades(t, N)
    if N >= 1:  # every leaf is then a small clade
        assert direct >= count_F(T)


@given(trees)
def test_alternating_identities(t):
    T = BinaryTree.from_nested(t)
    sF, sf = count_chains(T, 64).alternating()
    assert sF == count_F(T) and sf == toll_f(T)


@given(maybe_trees)
def test_census_totals(t):
    T = BinaryTree.from_nested(t)
    c = clade_census(T)
    assert c.total == sum(1 for s in oracle.subtrees(t) if oracle.green(s))
    assert c.tail(0) == c.total
    assert c.as_array().sum() == c.total


@given(trees, st.integers(0, 60))
def test_decomposition_adds_up(t, N):
    T = BinaryTree.from_nested(t)
    nu = build_mu_nu(max(T.n, 1)).nu
    d = decompose(T, nu, N)
    assert d.F == count_F(T)
    assert d.G + d.H == pytest.approx(d.F, abs=1e-9)
    assert d.F_small + d.F_large == d.F
    assert d.F_small == count_F_small(T, N)
    assert d.G_small + d.G_large == pytest.approx(d.G, abs=1e-9)
    assert d.H_small + d.H_large == pytest.approx(d.H, abs=1e-9)


def test_decompose_needs_table():
    with pytest.raises(TableTooShort):
        decompose(BinaryTree.path(5), np.zeros(3), 2)


def test_green_part_has_zero_mean():
    # E g(T_n) = (2/n)(1 - nu_{n-1}) - mu_n = 0 makes E H = 0, so E G = nu_n
    n, R = 60, 4000
    nu = build_mu_nu(n).nu
    Gs = [decompose(gen_bst_split(n, RngStream(5, i)), nu, n).G for i in range(R)]
    assert abs(np.mean(Gs) - nu[n]) < 4 * np.std(Gs) / np.sqrt(R)


@given(st.integers(0, 400), st.integers(0, 2**20), st.integers(0, 400), st.integers(0, 12))
def test_streaming_matches_materialized(n, seed, N, K):
    nu = build_mu_nu(max(n, 1))
    r1, r2 = RngStream(seed), RngStream(seed)
    s = stream_functionals(n, r1, N=N, nu=nu, K=K, census=True)
    T = gen_bst_split(n, r2)
    m = tree_functionals(T, N=N, nu=nu, K=K, census=True)
    assert r1.position == r2.position
    for key in ("F", "XN", "F_large", "tail", "root_green"):
        assert s.stats[key] == m.stats[key]
    for key in ("G", "H", "G_small", "G_large", "H_small", "H_large"):
        assert s.stats[key] == pytest.approx(m.stats[key], abs=1e-9)
    assert np.array_equal(s.Fk, m.Fk) and np.array_equal(s.fk, m.fk)
    assert np.array_equal(s.census, m.census)
    assert s.stats["F"] == count_F(T)
    assert s.stats["XN"] == count_F_small(T, N)
    if K:
        ch = count_chains(T, K)
        assert tuple(s.Fk) == ch.F and tuple(s.fk) == ch.f
    assert np.array_equal(s.census, clade_census(T).as_array())


def test_stream_table_too_short():
    with pytest.raises(TableTooShort):
        stream_functionals(10, RngStream(0), nu=np.zeros(5))
