"""Random binary trees: the random binary search tree and the clock-stopped trees.

Trees are stored as a node arena (``left``, ``right``, ``size`` arrays, ``-1``
for an absent child).  Every constructor in this module numbers nodes so that
a parent has a smaller index than its children; functionals rely on that to
replace recursion by a forward or reverse sweep over the indices.

Random draws are taken in preorder (root first, then the left subtree, then
the right one), which is also the order the streaming evaluators use.  The
same stream therefore yields the same tree whether it is materialized or not.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import CapExceeded
from .rng import RngStream, next_below, next_uniform

DEFAULT_CLOCK_CAP = 10_000_000


@dataclass(frozen=True, eq=False)
class BinaryTree:
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        for a in (self.left, self.right, self.size):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.size.shape[0])

    def __len__(self):
        return self.n

    @property
    def root(self) -> int:
        return 0 if self.n else -1

    def subtree_size(self, v: int) -> int:
        return 0 if v < 0 else int(self.size[v])

    def children(self, v: int) -> tuple[int, int]:
        return int(self.left[v]), int(self.right[v])

    def shape(self) -> tuple:
        """Left-subtree sizes in preorder; identifies the shape uniquely."""
        out = []
        stack = [self.root] if self.n else []
        while stack:
            v = stack.pop()
            out.append(self.subtree_size(int(self.left[v])))
            for c in (self.right[v], self.left[v]):
                if c >= 0:
                    stack.append(int(c))
        return tuple(out)

    def to_nested(self):
        """Nested ``(left, right)`` tuples with ``None`` for empty subtrees."""
        if not self.n:
            return None
        built = [None] * self.n
        for v in range(self.n - 1, -1, -1):
            l, r = self.left[v], self.right[v]
            built[v] = (built[l] if l >= 0 else None, built[r] if r >= 0 else None)
        return built[0]

    @classmethod
    def empty(cls) -> "BinaryTree":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy())

    @classmethod
    def from_nested(cls, obj) -> "BinaryTree":
        """Build from nested ``(left, right)`` pairs; ``None`` is the empty tree."""
        left, right = [], []
        if obj is not None:
            stack = [(obj, -1, 0)]
            while stack:
                node, parent, side = stack.pop()
                v = len(left)
                left.append(-1)
                right.append(-1)
                if parent >= 0:
                    (left if side == 0 else right)[parent] = v
                l, r = node
                if r is not None:
                    stack.append((r, v, 1))
                if l is not None:
                    stack.append((l, v, 0))
        left = np.array(left, dtype=np.int64)
        right = np.array(right, dtype=np.int64)
        return cls(left, right, _sizes(left, right))

    @classmethod
    def from_permutation(cls, keys) -> "BinaryTree":
        """Shape of the search tree obtained by inserting ``keys`` in order."""
        keys = np.asarray(keys, dtype=np.int64)
        left, right = _insert_keys(keys)
        return cls(left, right, _sizes(left, right))

    @classmethod
    def path(cls, n: int, side: str = "left") -> "BinaryTree":
        nested = None
        for _ in range(n):
            nested = (nested, None) if side == "left" else (None, nested)
        return cls.from_nested(nested)


@nb.njit(cache=True)
def _sizes(left, right):
    n = left.shape[0]
    size = np.ones(n, dtype=np.int64)
    for v in range(n - 1, -1, -1):
        if left[v] >= 0:
            size[v] += size[left[v]]
        if right[v] >= 0:
            size[v] += size[right[v]]
    return size


@nb.njit(cache=True)
def split_tree_kernel(n, key, pos):
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    size = np.zeros(n, dtype=np.int64)
    if n == 0:
        return left, right, size, pos
    # stack of (subtree size, parent index, side); preorder numbering
    st_size = np.empty(n, dtype=np.int64)
    st_parent = np.empty(n, dtype=np.int64)
    st_side = np.empty(n, dtype=np.int64)
    top = 0
    st_size[0] = n
    st_parent[0] = -1
    st_side[0] = 0
    nxt = 0
    while top >= 0:
        s = st_size[top]
        p = st_parent[top]
        sd = st_side[top]
        top -= 1
        v = nxt
        nxt += 1
        size[v] = s
        if p >= 0:
            if sd == 0:
                left[p] = v
            else:
                right[p] = v
        i = next_below(key, pos, s)
        pos += 1
        r = s - 1 - i
        if r > 0:
            top += 1
            st_size[top] = r
            st_parent[top] = v
            st_side[top] = 1
        if i > 0:
            top += 1
            st_size[top] = i
            st_parent[top] = v
            st_side[top] = 0
    return left, right, size, pos


@nb.njit(cache=True)
def _insert_keys(keys):
    n = keys.shape[0]
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    for v in range(1, n):
        k = keys[v]
        u = 0
        while True:
            if k < keys[u]:
                if left[u] < 0:
                    left[u] = v
                    break
                u = left[u]
            else:
                if right[u] < 0:
                    right[u] = v
                    break
                u = right[u]
    return left, right


@nb.njit(cache=True)
def clock_tree_kernel(lam, cap, key, pos):
    """Grow the tree by exponential races; returns ``n = -1`` on hitting ``cap``.

    With ``m`` nodes there are ``m + 1`` free child slots, each ringing at
    rate 1, against the doomsday clock at rate ``lam``.  Slots are encoded as
    ``2 * node + side``.
    """
    cap_alloc = 64
    left = np.full(cap_alloc, -1, dtype=np.int64)
    right = np.full(cap_alloc, -1, dtype=np.int64)
    slots = np.empty(cap_alloc + 1, dtype=np.int64)
    slots[0] = 0
    slots[1] = 1
    a = 2
    m = 1
    while True:
        x = next_uniform(key, pos) * (a + lam)
        pos += 1
        if x < lam:
            break
        if m >= cap:
            return left[:0], right[:0], -1, pos
        j = np.int64(x - lam)
        if j >= a:
            j = a - 1
        s = slots[j]
        a -= 1
        slots[j] = slots[a]
        if m == left.shape[0]:
            grow = 2 * m
            nl = np.full(grow, -1, dtype=np.int64)
            nr = np.full(grow, -1, dtype=np.int64)
            nl[:m] = left[:m]
            nr[:m] = right[:m]
            left = nl
            right = nr
            ns = np.empty(grow + 1, dtype=np.int64)
            ns[:a] = slots[:a]
            slots = ns
        v = m
        m += 1
        parent = s >> 1
        if s & 1:
            right[parent] = v
        else:
            left[parent] = v
        slots[a] = 2 * v
        slots[a + 1] = 2 * v + 1
        a += 2
    return left[:m].copy(), right[:m].copy(), m, pos


@nb.njit(cache=True)
def ct_size_from_uniform(u):
    # P(|T| > n) = 2 / (n + 2); smallest n with 2/(n+2) <= 1-u
    t = 1.0 - u
    n = np.int64(np.ceil(2.0 / t - 2.0))
    if n < 1:
        n = 1
    # guard against rounding at the boundary
    while n > 1 and 2.0 / (n + 1) <= t:
        n -= 1
    while 2.0 / (n + 2) > t:
        n += 1
    return n


def gen_bst_split(n: int, rng: RngStream) -> BinaryTree:
    """Random binary search tree with ``n`` nodes via uniform root splits."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    left, right, size, pos = split_tree_kernel(n, rng.key, rng.position)
    rng.position = int(pos)
    return BinaryTree(left, right, size)


def gen_bst_insert(n: int, rng: RngStream) -> BinaryTree:
    """Random binary search tree by inserting a uniform random permutation."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return BinaryTree.from_permutation(rng.permutation(n))


def sample_ct_size(rng: RngStream) -> int:
    """Size of the fringe-limit tree: P(n) = 2/((n+1)(n+2)), n >= 1."""
    return int(ct_size_from_uniform(rng.random()))


def sample_ct_clock(lam: float, rng: RngStream, cap: int = DEFAULT_CLOCK_CAP) -> BinaryTree:
    """Tree grown from a root until an independent Exp(lam) clock rings.

    Raises CapExceeded if ``cap`` nodes are reached first.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if cap < 1:
        raise ValueError("cap must be at least 1")
    left, right, m, pos = clock_tree_kernel(float(lam), int(cap), rng.key, rng.position)
    rng.position = int(pos)
    if m < 0:
        raise CapExceeded(cap)
    return BinaryTree(left, right, _sizes(left, right))
