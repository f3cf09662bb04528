"""Exact expectations, variances and distributions for the random BST.

Notation: ``nu[n] = E F(T_n)`` and ``mu[n] = E f(T_n)`` for the random binary
search tree ``T_n``; ``psi[k]`` is the mean square of the martingale increment
contributed by a node whose subtree has ``k`` nodes.  Any additive functional
with a toll whose mean on ``T_k`` is ``a_k`` has mean

    (n + 1) * sum_{k<n} 2 a_k / ((k+1)(k+2)) + a_n,

and that identity drives most of this module.

The limiting tree ``T`` (random size with P(|T| = n) = 2/((n+1)(n+2))) and
its generalization with doomsday rate ``lam`` have closed forms collected at
the end of the module.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numba as nb
import numpy as np
from scipy.special import gammaln

from .errors import CapTooLarge, DomainError, NonConvergence, TableTooShort

ALPHA = (1.0 - math.exp(-2.0)) / 4.0
EXACT_NMAX = 64
F_DIST_LIMIT = 512
DEFAULT_PSI_KMAX = 20_000
SERIES_TOL = 1e-15
SERIES_MAX_TERMS = 10_000


@dataclass(frozen=True)
class ExactTables:
    """Tables indexed by subtree size, ``0..nmax``.

    In exact mode the arrays are object arrays of :class:`fractions.Fraction`.
    ``psi`` may be shorter than ``nu`` (or absent); see :func:`build_psi`.
    """

    nmax: int
    mu: np.ndarray
    nu: np.ndarray
    psi: np.ndarray | None = None
    exact: bool = False
    cutoff: int | None = None
    nu_prime: np.ndarray | None = None
    psi_prime: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)


@nb.njit(cache=True)
def _mu_nu_kernel(nmax):
    mu = np.zeros(nmax + 1)
    nu = np.zeros(nmax + 1)
    if nmax >= 1:
        mu[1] = 1.0
        nu[1] = 1.0
    # S = sum_{k<=n-1} 2 mu_k / ((k+1)(k+2)), Neumaier-compensated
    S = 0.0
    c = 0.0
    for n in range(2, nmax + 1):
        term = 2.0 * mu[n - 1] / (n * (n + 1.0))
        t = S + term
        if abs(S) >= abs(term):
            c += (S - t) + term
        else:
            c += (term - t) + S
        S = t
        mu[n] = 2.0 / n * (1.0 - nu[n - 1])
        nu[n] = (n + 1.0) * (S + c) + mu[n]
    return mu, nu


def _mu_nu_fraction(nmax):
    mu = [Fraction(0)] * (nmax + 1)
    nu = [Fraction(0)] * (nmax + 1)
    if nmax >= 1:
        mu[1] = nu[1] = Fraction(1)
    S = Fraction(0)
    for n in range(2, nmax + 1):
        S += Fraction(2, n * (n + 1)) * mu[n - 1]
        mu[n] = Fraction(2, n) * (1 - nu[n - 1])
        nu[n] = (n + 1) * S + mu[n]
    return np.array(mu, dtype=object), np.array(nu, dtype=object)


def build_mu_nu(nmax: int, exact: bool = False) -> ExactTables:
    """``mu_n = E f(T_n)`` and ``nu_n = E F(T_n)`` for ``n = 0..nmax`` in O(nmax)."""
    if nmax < 1:
        raise ValueError("nmax must be at least 1")
    if exact:
        if nmax > EXACT_NMAX:
            raise ValueError(f"exact mode supports nmax <= {EXACT_NMAX}")
        mu, nu = _mu_nu_fraction(nmax)
    else:
        mu, nu = _mu_nu_kernel(nmax)
    return ExactTables(nmax=nmax, mu=mu, nu=nu, exact=exact)


def alpha_closed() -> float:
    return ALPHA


def alpha_series(nmax: int, tables: ExactTables | None = None) -> float:
    """Partial sum ``sum_{n<=nmax} 2 mu_n / ((n+1)(n+2))`` of ``alpha = E f(T)``.

    For ``n >= 2`` the terms equal ``4 (1 - nu_{n-1}) / (n (n+1) (n+2))``; the
    first term is ``1/3`` because ``mu_1 = 1``.
    """
    if nmax < 1:
        raise ValueError("nmax must be at least 1")
    if tables is None or tables.nmax < nmax - 1 or tables.exact:
        tables = build_mu_nu(max(nmax - 1, 1))
    n = np.arange(2, nmax + 1, dtype=np.float64)
    terms = 4.0 / (n * (n + 1.0) * (n + 2.0)) * (1.0 - tables.nu[1:nmax])
    # smallest terms first keeps the rounding error below the truncation error
    return math.fsum(np.concatenate((terms[::-1], [1.0 / 3.0])))


@nb.njit(cache=True)
def _psi_kernel(nu_like, gend, kmax):
    """Mean square of ``e + nu'_I + nu'_{k-1-I} - nu'_k`` with ``I`` uniform on 0..k-1.

    ``e`` equals ``gend[k]`` when ``I`` is 0 or ``k-1`` and 0 otherwise.
    """
    psi = np.zeros(kmax + 1)
    for k in range(1, kmax + 1):
        nk = nu_like[k]
        if k == 1:
            x = gend[1] + 2.0 * nu_like[0] - nk
            psi[1] = x * x
            continue
        end = gend[k] + nu_like[0] + nu_like[k - 1] - nk
        acc = 2.0 * end * end
        # interior splits j = 1..k-2, paired with k-1-j
        half = (k - 2) // 2
        inner = 0.0
        for j in range(1, half + 1):
            x = nu_like[j] + nu_like[k - 1 - j] - nk
            inner += x * x
        inner *= 2.0
        if (k - 2) % 2 == 1:
            j = (k - 1) // 2
            x = 2.0 * nu_like[j] - nk
            inner += x * x
        psi[k] = (acc + inner) / k
    return psi


def _psi_fraction(nu_like, gend, kmax):
    psi = [Fraction(0)] * (kmax + 1)
    for k in range(1, kmax + 1):
        total = Fraction(0)
        for j in range(k):
            e = gend[k] if j in (0, k - 1) else 0
            total += (e + nu_like[j] + nu_like[k - 1 - j] - nu_like[k]) ** 2
        psi[k] = total / k
    return np.array(psi, dtype=object)


def _g_end(tables: ExactTables, kmax: int, cutoff: int | None = None):
    """Value of the size-driven toll g on a root split with an empty side."""
    if tables.exact:
        gend = [Fraction(0)] + [1 - tables.nu[k - 1] for k in range(1, kmax + 1)]
        if cutoff is not None:
            gend = [g if k <= cutoff else Fraction(0) for k, g in enumerate(gend)]
        return gend
    gend = np.zeros(kmax + 1)
    gend[1:] = 1.0 - tables.nu[:kmax]
    if cutoff is not None:
        gend[cutoff + 1:] = 0.0
    return gend


def build_psi(kmax: int, tables: ExactTables) -> ExactTables:
    """Return ``tables`` extended with ``psi_k`` for ``k = 0..kmax`` (O(kmax^2))."""
    if kmax > tables.nmax:
        raise TableTooShort(f"tables cover n <= {tables.nmax}, psi requested to {kmax}")
    gend = _g_end(tables, kmax)
    if tables.exact:
        psi = _psi_fraction(tables.nu, gend, kmax)
    else:
        psi = _psi_kernel(np.ascontiguousarray(tables.nu[: kmax + 1]), gend, kmax)
    return replace(tables, psi=psi)


def _fringe_sum(a, n):
    """(n+1) * sum_{k=1}^{n-1} 2 a_k/((k+1)(k+2)) + a_n for a table ``a``."""
    if n < 1:
        return 0.0
    if isinstance(a[0], Fraction):
        s = sum((Fraction(2, (k + 1) * (k + 2)) * a[k] for k in range(1, n)), Fraction(0))
        return (n + 1) * s + a[n]
    k = np.arange(1, n, dtype=np.float64)
    s = math.fsum(2.0 * a[1:n] / ((k + 1.0) * (k + 2.0)))
    return (n + 1) * s + float(a[n])


def _ensure_psi(n: int, tables: ExactTables | None) -> ExactTables:
    if tables is None:
        tables = build_mu_nu(max(n, 1))
    if tables.nmax < n:
        raise TableTooShort(f"tables cover n <= {tables.nmax}, need {n}")
    if tables.psi is None or len(tables.psi) <= n:
        tables = build_psi(n, tables)
    return tables


def var_G_exact(n: int, tables: ExactTables | None = None) -> float:
    """Exact variance of the size-driven part G(T_n) of F(T_n)."""
    if n <= 1:
        return 0.0
    tables = _ensure_psi(n, tables)
    return _fringe_sum(tables.psi, n)


def build_cutoff_tables(n: int, N: int, tables: ExactTables | None = None) -> ExactTables:
    """Add ``nu'`` (mean of G' on T_m) and ``psi'`` for cutoff ``N``, sizes up to ``n``."""
    if tables is None:
        tables = build_mu_nu(max(n, 1))
    if tables.nmax < n:
        raise TableTooShort(f"tables cover n <= {tables.nmax}, need {n}")
    N = max(0, min(N, n))
    mu = tables.mu
    if tables.exact:
        nup = [Fraction(0)] * (n + 1)
        S = Fraction(0)
        for m in range(1, n + 1):
            if m - 1 >= 1 and m - 1 <= N:
                S += Fraction(2, m * (m + 1)) * mu[m - 1]
            nup[m] = (m + 1) * S + (mu[m] if m <= N else 0)
        nup = np.array(nup, dtype=object)
        psip = _psi_fraction(nup, _g_end(tables, n, N), n)
    else:
        k = np.arange(1, n + 1, dtype=np.float64)
        w = 2.0 * mu[1:n + 1] / ((k + 1.0) * (k + 2.0))
        w[N:] = 0.0
        # prefix[m-1] = sum_{k <= min(m-1, N)} w_k
        prefix = np.concatenate(([0.0], np.cumsum(w)))[:n]
        m = np.arange(1, n + 1, dtype=np.float64)
        nup = np.zeros(n + 1)
        nup[1:] = (m + 1.0) * prefix + np.where(m <= N, mu[1:n + 1], 0.0)
        psip = _psi_kernel(nup, _g_end(tables, n, N), n)
    return replace(tables, cutoff=N, nu_prime=nup, psi_prime=psip)


def var_Gprime_exact(n: int, N: int, tables: ExactTables | None = None) -> float:
    """Exact variance of G'(T_n), the part of G carried by subtrees of size <= N."""
    if n <= 1 or N <= 0:
        return 0.0
    key = ("cutoff", n, N)
    if tables is not None and key in tables._cache:
        ct = tables._cache[key]
    else:
        ct = build_cutoff_tables(n, N, tables)
        if tables is not None:
            tables._cache[key] = ct
    return _fringe_sum(ct.psi_prime, n)


@nb.njit(cache=True)
def _split_mean_var(nmax, N):
    """Mean and variance of the maximal small clade count on T_m, m <= nmax.

    A green root of size m <= N counts once; above N it passes through to its
    only child.  Uses the law of total variance over the root split.
    """
    mean = np.zeros(nmax + 1)
    var = np.zeros(nmax + 1)
    if nmax >= 1 and N >= 1:
        mean[1] = 1.0
    for m in range(2, nmax + 1):
        s = 0.0
        for j in range(m):
            s += mean[j] + mean[m - 1 - j]
        if m <= N:
            # green splits j = 0, m-1 give exactly one clade
            s += 2.0 - 2.0 * mean[m - 1]
        mu_m = s / m
        v = 0.0
        for j in range(m):
            green = j == 0 or j == m - 1
            if green and m <= N:
                d = 1.0 - mu_m
                v += d * d
            else:
                d = mean[j] + mean[m - 1 - j] - mu_m
                v += d * d + var[j] + var[m - 1 - j]
        mean[m] = mu_m
        var[m] = v / m
    return mean, var


def var_F_exact(n: int) -> float:
    """Exact Var F(T_n) by recursion over the root split; O(n^2) work."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return float(_split_mean_var(n, n)[1][n])


def var_XN_exact(n: int, N: int) -> float:
    """Exact variance of the number of maximal small clades; O(n^2) work."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return float(_split_mean_var(n, max(0, N))[1][n])


# Exact distribution of F(T_n) --------------------------------------------

@dataclass(frozen=True)
class FDist:
    """``pmf[n][m] = P(F(T_n) = m)`` for ``n = 0..cap``."""

    cap: int
    pmf: tuple

    def __getitem__(self, n: int) -> np.ndarray:
        return self.pmf[n]

    def mean(self, n: int) -> float:
        p = self.pmf[n]
        return float(np.dot(np.arange(p.shape[0]), p))

    def _check(self, n):
        if not 0 <= n <= self.cap:
            raise TableTooShort(f"distribution covers n <= {self.cap}, need {n}")


def build_f_dist(cap: int, limit: int = F_DIST_LIMIT) -> FDist:
    """Distributions of F(T_n), n <= cap, by convolution over the root split.

    With a green root (split 0 or n-1, probability 2/n) F = 1; otherwise F is
    the sum of two independent smaller copies.  Summation over splits uses
    compensated accumulation in a fixed order.
    """
    if cap > limit:
        raise CapTooLarge(f"cap {cap} exceeds limit {limit}")
    if cap < 0:
        raise ValueError("cap must be nonnegative")
    pmf = [np.array([1.0])]
    if cap >= 1:
        pmf.append(np.array([0.0, 1.0]))
    for n in range(2, cap + 1):
        acc = np.zeros(n + 1)
        comp = np.zeros(n + 1)

        def add(term):
            nonlocal acc, comp
            y = -comp
            y[: term.shape[0]] += term
            t = acc + y
            comp = (t - acc) - y
            acc = t

        # splits j and n-1-j contribute the same convolution
        for j in range(1, n - 1):
            other = n - 1 - j
            if j > other:
                break
            term = np.convolve(pmf[j], pmf[other])
            add(term if j == other else 2.0 * term)
        p = acc / n
        p[1] += 2.0 / n
        pmf.append(p)
    return FDist(cap, tuple(pmf))


def central_moment(n: int, k: int, dist: FDist) -> float:
    """E (F(T_n) - nu_n)^k from the exact distribution."""
    dist._check(n)
    p = dist[n]
    x = np.arange(p.shape[0]) - dist.mean(n)
    return math.fsum(p * x**k)


def abs_central_moment(n: int, p: float, dist: FDist) -> float:
    """E |F(T_n) - nu_n|^p from the exact distribution."""
    dist._check(n)
    q = dist[n]
    x = np.abs(np.arange(q.shape[0]) - dist.mean(n))
    return math.fsum(q * x**p)


def f_abs_moment(n: int, p: float, dist: FDist) -> float:
    """E |f(T_n)|^p = (2/n) E |1 - F(T_{n-1})|^p for n >= 2."""
    if n <= 0:
        return 0.0
    if n == 1:
        return 1.0
    dist._check(n - 1)
    q = dist[n - 1]
    return 2.0 / n * math.fsum(q * np.abs(1.0 - np.arange(q.shape[0])) ** p)


def sum_f_abs_exact(n: int, p: float, dist: FDist) -> float:
    """E sum_v |f(T_{n,v})|^p over all fringe subtrees of T_n."""
    if n <= 0:
        return 0.0
    a = np.array([f_abs_moment(k, p, dist) for k in range(n + 1)])
    return _fringe_sum(a, n)


# Clade census ------------------------------------------------------------

def expected_subtree_count(n: int, k: int) -> float:
    """Expected number of nodes of T_n whose subtree has exactly k nodes."""
    if k < 1 or k > n:
        return 0.0
    if k == n:
        return 1.0
    return 2.0 * (n + 1) / ((k + 1) * (k + 2))


def green_given_size(k: int) -> float:
    """P(root of T_k is green): 1 for k = 1, 2/k otherwise."""
    return 1.0 if k == 1 else 2.0 / k


def expected_Zk(n: int, k: int) -> float:
    """Expected number of green nodes with subtree size k (clades of size k+1) in T_n."""
    return expected_subtree_count(n, k) * green_given_size(k) if 1 <= k <= n else 0.0


def expected_Zk_approx(n: int, k: int) -> float:
    """Large-n form ``4n/(k(k+1)(k+2))`` for k < n and ``2/n`` at k = n.

    Replaces ``n + 1`` by ``n`` and ignores that a single node is always
    green, so it is off by a factor 2 at k = 1; see :func:`expected_Zk`.
    """
    if k < 1 or k > n:
        return 0.0
    if k == n:
        return 2.0 / n
    return 4.0 * n / (k * (k + 1) * (k + 2))


def expected_large_clades(n: int, N: int) -> float:
    """sum_{k > N} expected_Zk(n, k): Markov bound on P(some clade exceeds N+1)."""
    lo = max(int(math.floor(N)) + 1, 1)
    if lo > n:
        return 0.0
    k = np.arange(lo, n, dtype=np.float64)
    body = 2.0 * (n + 1) / ((k + 1) * (k + 2)) * np.where(k == 1, 1.0, 2.0 / k)
    return math.fsum(body) + expected_Zk(n, n)


# Limiting tree and clock trees --------------------------------------------

def e_fk_ct(k: int) -> float:
    """Expected number of green chains of length k starting at the root of T."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return k * (k + 3) / ((k + 1) * (k + 2)) * 2.0 ** (k - 1) / math.factorial(k)


def e_fk_ct_difference(k: int) -> float:
    """Same quantity as :func:`e_fk_ct`, written as a difference of two terms."""
    return 2.0 ** (k - 1) / math.factorial(k) - 2.0**k / math.factorial(k + 2)


def chain_green_prob(gaps) -> float:
    """Probability that a fixed root chain with the given gaps is green in T.

    ``gaps[i]`` is the number of nodes strictly between the (i+1)-th and
    (i+2)-th chain nodes.
    """
    gaps = list(gaps)
    if any(g < 0 for g in gaps):
        raise ValueError("gaps must be nonnegative")
    k = len(gaps) + 1
    prob = (k + 3) / ((k + 1) * (k + 2))
    for i, ell in enumerate(gaps, start=1):
        prob *= (1.0 / (i + 2)) ** (ell + 1)
    return prob


@dataclass(frozen=True)
class SeriesValue:
    value: float
    terms: int


def kummer_1f1_unit(b: float, z: float, tol: float = SERIES_TOL,
                    max_terms: int = SERIES_MAX_TERMS, full_output: bool = False):
    """Confluent hypergeometric 1F1(1; b; z) = sum_j z^j / (b)_j."""
    if b <= 0:
        raise DomainError("b must be positive")
    total = 0.0
    term = 1.0
    for j in range(max_terms):
        total += term
        term *= z / (b + j)
        if abs(term) < tol:
            total += term
            out = SeriesValue(total, j + 2)
            return out if full_output else out.value
    raise NonConvergence(f"1F1(1; {b}; {z}) did not converge in {max_terms} terms")


def log_rising(x: float, k):
    """log of the rising factorial x (x+1) ... (x+k-1); vectorized over k."""
    k_arr = np.asarray(k)
    if k_arr.ndim == 0 and int(k_arr) <= 20:
        return math.fsum(math.log(x + i) for i in range(int(k_arr)))
    return gammaln(x + k_arr) - gammaln(x)


def e_fk_ct_lambda(k: int, lam: float) -> float:
    """Expected root green k-chains in the tree stopped at rate ``lam``.

    ``lam * (2^(k-1) / (lam)_k - 2^k / (lam)_(k+2))``; the leading ``lam`` is
    the doomsday clock winning the final race, and drops out at ``lam = 1``.
    """
    if lam <= 0:
        raise DomainError("lambda must be positive")
    if k < 1:
        raise ValueError("k must be at least 1")
    a = math.exp((k - 1) * math.log(2.0) - log_rising(lam, k))
    b = math.exp(k * math.log(2.0) - log_rising(lam, k + 2))
    return lam * (a - b)


def e_f_ct_lambda(lam: float) -> float:
    """E f(T^lam) = lam * (1/4 + (lam-1)/(2 lam (lam+1)) - 1F1(1; lam; -2)/4)."""
    if lam <= 0:
        raise DomainError("lambda must be positive")
    return lam * (0.25 + (lam - 1.0) / (2.0 * lam * (lam + 1.0))
                  - 0.25 * kummer_1f1_unit(lam, -2.0))


def e_F_ct_lambda(lam: float) -> float:
    """E F(T^lam) = (lam+1)/(lam-1) * E f(T^lam), finite for lam > 1."""
    if lam <= 1:
        raise DomainError("E F is finite only for lambda > 1")
    return (lam + 1.0) / (lam - 1.0) * e_f_ct_lambda(lam)


def ct_lambda_size_pmf(lam: float, n):
    """P(|T^lam| = n) = lam n! / (2 + lam)_n; vectorized over n."""
    if lam <= 0:
        raise DomainError("lambda must be positive")
    n_arr = np.asarray(n)
    if n_arr.ndim == 0:
        n = int(n_arr)
        if n < 1:
            return 0.0
        if n <= 20:
            p = lam
            for i in range(1, n + 1):
                p *= i / (2.0 + lam + i - 1)
            return p
        return math.exp(math.log(lam) + math.lgamma(n + 1) - log_rising(2.0 + lam, n))
    out = np.exp(np.log(lam) + gammaln(n_arr + 1.0) - log_rising(2.0 + lam, n_arr))
    return np.where(n_arr >= 1, out, 0.0)


def genfunc_residual(lam: float, trunc: int, tables: ExactTables | None = None) -> float:
    """|sum_{n <= trunc} P(|T^lam| = n) nu_n - E F(T^lam)|."""
    if tables is None or tables.nmax < trunc or tables.exact:
        tables = build_mu_nu(trunc)
    n = np.arange(1, trunc + 1)
    partial = math.fsum(ct_lambda_size_pmf(lam, n) * tables.nu[1:trunc + 1])
    return abs(partial - e_F_ct_lambda(lam))


# Export ------------------------------------------------------------------

TABLE_COLUMNS = ("n", "mu", "nu", "psi")


def write_tables_csv(tables: ExactTables, fh) -> None:
    """Write ``n, mu, nu, psi`` rows with 17 significant digits."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    psi = tables.psi
    for n in range(tables.nmax + 1):
        row = [n, f"{float(tables.mu[n]):.17g}", f"{float(tables.nu[n]):.17g}"]
        row.append(f"{float(psi[n]):.17g}" if psi is not None and n < len(psi) else "")
        w.writerow(row)
