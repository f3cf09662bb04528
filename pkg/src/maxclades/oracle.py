"""Slow, independent reference implementations on nested-tuple trees.

Nothing here shares code with the array kernels: trees are ``(left, right)``
tuples with ``None`` for an empty subtree, everything is plain recursion, and
probabilities are exact fractions.  Used to cross-check the fast routes.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache


def size(t) -> int:
    return 0 if t is None else 1 + size(t[0]) + size(t[1])


def green(t) -> bool:
    return t is not None and (t[0] is None or t[1] is None)


def max_clades(t) -> int:
    if t is None:
        return 0
    return 1 if green(t) else max_clades(t[0]) + max_clades(t[1])


def toll(t) -> int:
    """Toll from its definition: 1 - F(L) - F(R) at a green root, else 0."""
    if t is None or not green(t):
        return 0
    return 1 - max_clades(t[0]) - max_clades(t[1])


def subtrees(t):
    if t is not None:
        yield t
        yield from subtrees(t[0])
        yield from subtrees(t[1])


def small_max_clades(t, N: int) -> int:
    """Green nodes of size <= N with no green ancestor of size <= N."""
    if t is None:
        return 0
    if green(t) and size(t) <= N:
        return 1
    return small_max_clades(t[0], N) + small_max_clades(t[1], N)


def small_toll(t, N: int) -> int:
    return toll(t) if size(t) <= N else 0


def maximal_clade_sizes(t) -> list[int]:
    """Leaf counts of the maximal clades (subtree size + 1)."""
    if t is None:
        return []
    if green(t):
        return [size(t) + 1]
    return maximal_clade_sizes(t[0]) + maximal_clade_sizes(t[1])


def leaves(t) -> int:
    """External nodes of the full binary tree: one more than the internal nodes."""
    return size(t) + 1


def chains(t, K: int) -> tuple[list[int], list[int]]:
    """Green chains of each length 1..K, anywhere and starting at the root.

    Dynamic programme over root-to-node paths: ``ending[k]`` is the number of
    chains of length ``k`` ending at the current node's green ancestors.
    """
    anywhere = [0] * K
    rooted = [0] * K

    def walk(node, above, above_rooted):
        if node is None:
            return
        if green(node):
            here = [1] + above[:K - 1]
            here_rooted = [0] + above_rooted[:K - 1]
            if node is t:
                here_rooted[0] = 1
            for k in range(K):
                anywhere[k] += here[k]
                rooted[k] += here_rooted[k]
            above = [a + h for a, h in zip(above, here)]
            above_rooted = [a + h for a, h in zip(above_rooted, here_rooted)]
        walk(node[0], above, above_rooted)
        walk(node[1], above, above_rooted)

    walk(t, [0] * K, [0] * K)
    return anywhere, rooted


@lru_cache(maxsize=None)
def shape_law(n: int) -> tuple:
    """All shapes of the random BST of size n with their exact probabilities."""
    if n == 0:
        return ((None, Fraction(1)),)
    out = []
    for i in range(n):
        for lt, lp in shape_law(i):
            for rt, rp in shape_law(n - 1 - i):
                out.append(((lt, rt), lp * rp / n))
    return tuple(out)


def f_law(n: int) -> dict[int, Fraction]:
    law: dict[int, Fraction] = {}
    for t, p in shape_law(n):
        k = max_clades(t)
        law[k] = law.get(k, Fraction(0)) + p
    return law


def mean_F(n: int) -> Fraction:
    return sum((k * p for k, p in f_law(n).items()), Fraction(0))


def mean_Zk(n: int, k: int) -> Fraction:
    """Expected number of green nodes whose subtree has k nodes."""
    total = Fraction(0)
    for t, p in shape_law(n):
        total += p * sum(1 for s in subtrees(t) if green(s) and size(s) == k)
    return total
