"""Per-tree functionals: maximal clades, tolls, cutoff variants, chains, census.

A node is *green* when it has at most one child; green nodes are the clades
of the corresponding phylogenetic tree, and a clade of a green node ``v`` has
``size(v) + 1`` leaves.  ``F(T)`` counts green nodes with no green ancestor.

Array kernels assume parents precede children in index order (guaranteed by
every constructor in :mod:`maxclades.treegen`).  The streaming kernel
:func:`stream_split_kernel` evaluates the same quantities while drawing the
random splits, keeping only a stack of the current root path.
"""
from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from math import comb

import numba as nb
import numpy as np

from .errors import TableTooShort
from .rng import RngStream, next_below
from .treegen import BinaryTree

INT64_MAX = np.iinfo(np.int64).max
MAX_CHAIN_DEPTH = 64


@nb.njit(cache=True)
def _green_and_F(left, right, size):
    n = size.shape[0]
    green = np.zeros(n, dtype=np.bool_)
    F = np.zeros(n, dtype=np.int64)
    for v in range(n - 1, -1, -1):
        l = left[v]
        r = right[v]
        if l < 0 or r < 0:
            green[v] = True
            F[v] = 1
        else:
            F[v] = F[l] + F[r]
    return green, F


@nb.njit(cache=True)
def _marked_ancestors(left, right, mark):
    """Number of marked strict ancestors of every node."""
    n = mark.shape[0]
    d = np.zeros(n, dtype=np.int64)
    for v in range(n):
        dv = d[v] + (1 if mark[v] else 0)
        if left[v] >= 0:
            d[left[v]] = dv
        if right[v] >= 0:
            d[right[v]] = dv
    return d


@dataclass(frozen=True)
class NodeValues:
    """Per-node arrays shared by the functionals below."""

    green: np.ndarray
    F: np.ndarray
    toll: np.ndarray


def node_values(T: BinaryTree) -> NodeValues:
    green, F = _green_and_F(T.left, T.right, T.size)
    FL = np.where(T.left >= 0, F[np.maximum(T.left, 0)], 0)
    FR = np.where(T.right >= 0, F[np.maximum(T.right, 0)], 0)
    return NodeValues(green, F, F - FL - FR)


def is_green(T: BinaryTree, v: int | None = None) -> bool:
    v = T.root if v is None else v
    if v < 0:
        return False
    return bool(T.left[v] < 0 or T.right[v] < 0)


def count_F(T: BinaryTree) -> int:
    """Number of maximal clades (0 for the empty tree)."""
    if not T.n:
        return 0
    return int(_green_and_F(T.left, T.right, T.size)[1][0])


def toll_f(T: BinaryTree, v: int | None = None) -> int:
    """F(T_v) - F(left subtree) - F(right subtree)."""
    v = T.root if v is None else v
    if v < 0:
        return 0
    return int(node_values(T).toll[v])


def sum_additive(T: BinaryTree, toll: Callable[[BinaryTree, int], float]):
    """Sum of ``toll(T, v)`` over all nodes, visited in post-order."""
    total = 0
    for v in range(T.n - 1, -1, -1):
        total += toll(T, v)
    return total


def maximal_green(T: BinaryTree) -> list[int]:
    """Subtree sizes of the green nodes without a green strict ancestor."""
    if not T.n:
        return []
    green, _ = _green_and_F(T.left, T.right, T.size)
    d = _marked_ancestors(T.left, T.right, green)
    return [int(s) for s in T.size[green & (d == 0)]]


@dataclass
class CladeCensus:
    """Counts of green nodes by subtree size ``k`` (clades of size ``k + 1``)."""

    n: int
    counts: dict[int, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def tail(self, N: int) -> int:
        """Number of green nodes with subtree size above ``N``."""
        return sum(c for k, c in self.counts.items() if k > N)

    def as_array(self) -> np.ndarray:
        out = np.zeros(self.n + 1, dtype=np.int64)
        for k, c in self.counts.items():
            out[k] = c
        return out


def clade_census(T: BinaryTree) -> CladeCensus:
    if not T.n:
        return CladeCensus(0)
    green, _ = _green_and_F(T.left, T.right, T.size)
    sizes, counts = np.unique(T.size[green], return_counts=True)
    return CladeCensus(T.n, {int(k): int(c) for k, c in zip(sizes, counts)})


def count_F_small(T: BinaryTree, N: int, method: str = "direct") -> int:
    """Number of maximal small clades: green nodes of size <= N with no such ancestor.

    ``method="toll"`` evaluates the same count as the sum of the toll over
    subtrees of size at most ``N``.
    """
    if N < 0:
        raise ValueError("cutoff must be nonnegative")
    if not T.n:
        return 0
    if method == "toll":
        nv = node_values(T)
        return int(nv.toll[T.size <= N].sum())
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    green, _ = _green_and_F(T.left, T.right, T.size)
    small = green & (T.size <= N)
    d = _marked_ancestors(T.left, T.right, small)
    return int(np.count_nonzero(small & (d == 0)))


@dataclass(frozen=True)
class Decomposition:
    N: int
    F: int
    G: float
    H: float
    F_small: int
    F_large: int
    G_small: float
    G_large: float
    H_small: float
    H_large: float


def _nu_array(nu) -> np.ndarray:
    return np.asarray(getattr(nu, "nu", nu), dtype=np.float64)


def decompose(T: BinaryTree, nu, N: int) -> Decomposition:
    """Split F into the size-driven part G and the remainder H, plus cutoff parts.

    ``nu`` is an array (or ExactTables) with ``nu[m] = E F(T_m)``; it must
    cover subtree sizes up to ``|T| - 1``.
    """
    nu = _nu_array(nu)
    if nu.shape[0] < T.n:
        raise TableTooShort(f"nu table has {nu.shape[0]} entries, tree has {T.n} nodes")
    if not T.n:
        return Decomposition(N, 0, 0.0, 0.0, 0, 0, 0.0, 0.0, 0.0, 0.0)
    nv = node_values(T)
    g = np.where(nv.green, 1.0 - nu[T.size - 1], 0.0)
    h = nv.toll - g
    small = T.size <= N
    return Decomposition(
        N=N,
        F=int(nv.F[0]),
        G=float(g.sum()),
        H=float(h.sum()),
        F_small=int(nv.toll[small].sum()),
        F_large=int(nv.toll[~small].sum()),
        G_small=float(g[small].sum()),
        G_large=float(g[~small].sum()),
        H_small=float(h[small].sum()),
        H_large=float(h[~small].sum()),
    )


@dataclass(frozen=True)
class ChainCounts:
    """Green chains of length ``k = 1..K``: anywhere (``F``) and from the root (``f``)."""

    F: tuple[int, ...]
    f: tuple[int, ...]
    saturated: bool = False

    @property
    def K(self) -> int:
        return len(self.F)

    def alternating(self) -> tuple[int, int]:
        sF = sum((-1) ** k * x for k, x in enumerate(self.F))
        sf = sum((-1) ** k * x for k, x in enumerate(self.f))
        return sF, sf


def count_chains(T: BinaryTree, K: int) -> ChainCounts:
    """Count green chains by the number ``d`` of green strict ancestors.

    A green node with ``d`` green ancestors ends ``C(d, k-1)`` green chains of
    length ``k``; it ends ``C(d-1, k-2)`` chains that start at a green root.
    Counts above ``2**63 - 1`` saturate and set ``saturated``.
    """
    if not 1 <= K <= MAX_CHAIN_DEPTH:
        raise ValueError(f"chain depth must be in 1..{MAX_CHAIN_DEPTH}")
    if not T.n:
        return ChainCounts((0,) * K, (0,) * K)
    green, _ = _green_and_F(T.left, T.right, T.size)
    d = _marked_ancestors(T.left, T.right, green)
    hist = np.bincount(d[green])
    Fk = [sum(int(c) * comb(dv, k) for dv, c in enumerate(hist) if c) for k in range(K)]
    fk = [0] * K
    if green[0]:
        fk[0] = 1
        for k in range(1, K):
            fk[k] = sum(int(c) * comb(dv - 1, k - 1) for dv, c in enumerate(hist) if c and dv >= 1)
    saturated = any(x > INT64_MAX for x in Fk + fk)
    Fk = tuple(min(x, INT64_MAX) for x in Fk)
    fk = tuple(min(x, INT64_MAX) for x in fk)
    return ChainCounts(Fk, fk, saturated)


# Streaming evaluation ------------------------------------------------------

# layout of the statistics vector returned by stream_split_kernel
STAT_NAMES = (
    "F", "XN", "G", "H", "G_small", "G_large", "H_small", "H_large",
    "F_large", "tail", "root_green",
)
NSTATS = len(STAT_NAMES)
(S_F, S_XN, S_G, S_H, S_GS, S_GL, S_HS, S_HL, S_FL, S_TAIL, S_ROOT) = range(NSTATS)


@nb.njit(inline="always")
def _sat_add(a, b):
    if a > INT64_MAX - b:
        return INT64_MAX, True
    return a + b, False


@nb.njit(cache=True)
def _add_binomial_row(acc, d, start):
    """acc[start + j] += C(d, j) for j >= 0 (saturating); returns overflow flag."""
    over = False
    c = np.int64(1)
    for j in range(acc.shape[0] - start):
        if j > 0:
            mult = d - j + 1
            if mult <= 0:
                break
            if c > INT64_MAX // mult:
                c = INT64_MAX
                over = True
            elif c != INT64_MAX:
                c = c * mult // j
        acc[start + j], o = _sat_add(acc[start + j], c)
        over = over or o
    return over


@nb.njit(cache=True)
def stream_split_kernel(n, N, nu, K, want_census, key, pos):
    """Draw a random BST split by split and evaluate it without storing the tree.

    Returns ``(stats, Fk, fk, census, overflow, pos)``.  ``nu`` may be empty,
    in which case the G/H statistics stay zero.
    """
    stats = np.zeros(NSTATS)
    Fk = np.zeros(K, dtype=np.int64)
    fk = np.zeros(K, dtype=np.int64)
    census = np.zeros(n + 1 if want_census else 0, dtype=np.int64)
    if n == 0:
        return stats, Fk, fk, census, False, pos
    use_nu = nu.shape[0] > 0
    # Stack frames for the current root path.  np.empty leaves pages untouched
    # until written, so resident memory stays proportional to the depth.
    st_s = np.empty(n, dtype=np.int64)
    st_i = np.empty(n, dtype=np.int64)
    st_d = np.empty(n, dtype=np.int64)
    st_phase = np.empty(n, dtype=np.int8)
    st_FL = np.empty(n, dtype=np.int64)
    st_XL = np.empty(n, dtype=np.int64)
    top = 0
    st_s[0] = n
    st_d[0] = 0
    st_phase[0] = 0
    retF = np.int64(0)
    retX = np.int64(0)
    G = H = GS = HS = 0.0
    F_large = np.int64(0)
    tail = np.int64(0)
    root_green = False
    overflow = False
    while top >= 0:
        s = st_s[top]
        phase = st_phase[top]
        if phase == 0:
            i = next_below(key, pos, s)
            pos += 1
            st_i[top] = i
            st_phase[top] = 1
            if top == 0:
                root_green = i == 0 or i == s - 1
            if i > 0:
                st_s[top + 1] = i
                st_d[top + 1] = st_d[top] + (1 if i == s - 1 else 0)
                st_phase[top + 1] = 0
                top += 1
                continue
            retF = 0
            retX = 0
            phase = 1
        i = st_i[top]
        r = s - 1 - i
        green = i == 0 or r == 0
        if phase == 1:
            st_FL[top] = retF
            st_XL[top] = retX
            st_phase[top] = 2
            if r > 0:
                st_s[top + 1] = r
                st_d[top + 1] = st_d[top] + (1 if green else 0)
                st_phase[top + 1] = 0
                top += 1
                continue
            retF = 0
            retX = 0
        # post-visit: both children are done
        FL = st_FL[top]
        small = s <= N
        if green:
            F = np.int64(1)
            X = np.int64(1) if small else st_XL[top] + retX
        else:
            F = FL + retF
            X = st_XL[top] + retX
        f = F - FL - retF
        if use_nu:
            g = (1.0 - nu[s - 1]) if green else 0.0
            h = f - g
            G += g
            H += h
            if small:
                GS += g
                HS += h
        if not small:
            F_large += f
        if green:
            if not small:
                tail += 1
            if want_census:
                census[s] += 1
            if K > 0:
                d = st_d[top]
                o = _add_binomial_row(Fk, d, 0)
                if root_green and d >= 1:
                    o = _add_binomial_row(fk, d - 1, 1) or o
                overflow = overflow or o
        retF = F
        retX = X
        top -= 1
    if K > 0 and root_green:
        fk[0] = 1
    stats[S_F] = retF
    stats[S_XN] = retX
    stats[S_G] = G
    stats[S_H] = H
    stats[S_GS] = GS
    stats[S_GL] = G - GS
    stats[S_HS] = HS
    stats[S_HL] = H - HS
    stats[S_FL] = F_large
    stats[S_TAIL] = tail
    stats[S_ROOT] = 1.0 if root_green else 0.0
    return stats, Fk, fk, census, overflow, pos


@nb.njit(cache=True)
def tree_stats_kernel(left, right, size, N, nu, K, want_census):
    """Same statistics as :func:`stream_split_kernel`, for a stored tree."""
    n = size.shape[0]
    stats = np.zeros(NSTATS)
    Fk = np.zeros(K, dtype=np.int64)
    fk = np.zeros(K, dtype=np.int64)
    census = np.zeros(n + 1 if want_census else 0, dtype=np.int64)
    if n == 0:
        return stats, Fk, fk, census, False
    use_nu = nu.shape[0] > 0
    green = np.zeros(n, dtype=np.bool_)
    for v in range(n):
        green[v] = left[v] < 0 or right[v] < 0
    d = _marked_ancestors(left, right, green)
    root_green = green[0]
    F = np.zeros(n, dtype=np.int64)
    X = np.zeros(n, dtype=np.int64)
    G = H = GS = HS = 0.0
    F_large = np.int64(0)
    tail = np.int64(0)
    overflow = False
    for v in range(n - 1, -1, -1):
        l = left[v]
        r = right[v]
        FL = F[l] if l >= 0 else 0
        XL = X[l] if l >= 0 else 0
        FR = F[r] if r >= 0 else 0
        XR = X[r] if r >= 0 else 0
        s = size[v]
        small = s <= N
        if green[v]:
            F[v] = 1
            X[v] = 1 if small else XL + XR
        else:
            F[v] = FL + FR
            X[v] = XL + XR
        f = F[v] - FL - FR
        if use_nu:
            g = (1.0 - nu[s - 1]) if green[v] else 0.0
            h = f - g
            G += g
            H += h
            if small:
                GS += g
                HS += h
        if not small:
            F_large += f
        if green[v]:
            if not small:
                tail += 1
            if want_census:
                census[s] += 1
            if K > 0:
                o = _add_binomial_row(Fk, d[v], 0)
                if root_green and d[v] >= 1:
                    o = _add_binomial_row(fk, d[v] - 1, 1) or o
                overflow = overflow or o
    if K > 0 and root_green:
        fk[0] = 1
    stats[S_F] = F[0]
    stats[S_XN] = X[0]
    stats[S_G] = G
    stats[S_H] = H
    stats[S_GS] = GS
    stats[S_GL] = G - GS
    stats[S_HS] = HS
    stats[S_HL] = H - HS
    stats[S_FL] = F_large
    stats[S_TAIL] = tail
    stats[S_ROOT] = 1.0 if root_green else 0.0
    return stats, Fk, fk, census, overflow


@dataclass
class StreamResult:
    stats: dict[str, float]
    Fk: np.ndarray
    fk: np.ndarray
    census: np.ndarray | None
    overflow: bool


def _empty_nu():
    return np.zeros(0, dtype=np.float64)


def stream_functionals(n: int, rng: RngStream, N: int | None = None, nu=None,
                       K: int = 0, census: bool = False) -> StreamResult:
    """Evaluate a fresh random BST of size ``n`` without materializing it.

    Consumes exactly the draws :func:`gen_bst_split` would, so the result
    matches evaluating ``gen_bst_split(n, rng)`` on the same stream.
    """
    N = n if N is None else N
    nu_arr = _empty_nu() if nu is None else _nu_array(nu)
    if nu is not None and nu_arr.shape[0] < n:
        raise TableTooShort(f"nu table has {nu_arr.shape[0]} entries, need {n}")
    if not 0 <= K <= MAX_CHAIN_DEPTH:
        raise ValueError(f"chain depth must be in 0..{MAX_CHAIN_DEPTH}")
    stats, Fk, fk, cen, over, pos = stream_split_kernel(n, N, nu_arr, K, census, rng.key, rng.position)
    rng.position = int(pos)
    return StreamResult(dict(zip(STAT_NAMES, stats.tolist())), Fk, fk, cen if census else None, bool(over))


def tree_functionals(T: BinaryTree, N: int | None = None, nu=None, K: int = 0,
                     census: bool = False) -> StreamResult:
    """Array-kernel evaluation of the streaming statistics on a stored tree."""
    N = T.n if N is None else N
    nu_arr = _empty_nu() if nu is None else _nu_array(nu)
    if nu is not None and nu_arr.shape[0] < T.n:
        raise TableTooShort(f"nu table has {nu_arr.shape[0]} entries, need {T.n}")
    stats, Fk, fk, cen, over = tree_stats_kernel(T.left, T.right, T.size, N, nu_arr, K, census)
    return StreamResult(dict(zip(STAT_NAMES, stats.tolist())), Fk, fk, cen if census else None, bool(over))
