"""Acceptance checks: each criterion is a function returning a CheckResult.

``quick=True`` shrinks the Monte Carlo replicate counts; tolerances stay the
same, so quick runs are noisier but exercise every code path.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import chisquare

from . import oracle
from .exact import (ALPHA, abs_central_moment, alpha_closed, alpha_series, build_f_dist,
                    build_mu_nu, central_moment, ct_lambda_size_pmf, e_f_ct_lambda,
                    e_fk_ct, expected_Zk, genfunc_residual,
                    sum_f_abs_exact, var_F_exact, var_G_exact, var_Gprime_exact,
                    var_XN_exact)
from .functionals import (count_chains, count_F, count_F_small, maximal_green,
                          node_values, stream_functionals)
from .mc import SimConfig, normality, run_experiment, tail_event_rate
from .rng import RngStream
from .treegen import gen_bst_insert, gen_bst_split


@dataclass(frozen=True)
class CheckResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:2d} {self.title}: {self.detail} ({self.seconds:.1f} s)"


class Session:
    """Shared state for one verification run (tables and reusable experiments)."""

    def __init__(self, quick: bool = False, workers: int = 1):
        self.quick = quick
        self.workers = workers
        self._tables = None
        self._runs = {}

    def reps(self, full: int, quick: int) -> int:
        return quick if self.quick else full

    def tables(self):
        if self._tables is None:
            self._tables = build_mu_nu(100_000)
        return self._tables

    def run(self, **kw):
        key = tuple(sorted(kw.items()))
        if key not in self._runs:
            cfg = SimConfig(workers=self.workers, **kw)
            self._runs[key] = run_experiment(cfg, self.tables())
        return self._runs[key]


def _close(a, b, tol) -> bool:
    return abs(float(a) - float(b)) <= tol


def check_constants(s: Session):
    a = alpha_closed()
    err = abs(alpha_series(10**6) - a)
    alt = math.fsum((-1) ** (k - 1) * e_fk_ct(k) for k in range(1, 31))
    alt_err = abs(alt - a)
    ok = err < 2e-5 and alt_err < 1e-12
    return ok, f"|series(1e6)-closed|={err:.3g}, |alternating chain sum-closed|={alt_err:.3g}"


def check_oracle(s: Session):
    tol = 1e-12
    nmax = 10
    tab = build_mu_nu(nmax)
    exact_tab = build_mu_nu(nmax, exact=True)
    dist = build_f_dist(nmax)
    worst = 0.0
    ok = True
    for n in range(1, nmax + 1):
        m = oracle.mean_F(n)
        ok &= exact_tab.nu[n] == m
        worst = max(worst, abs(tab.nu[n] - float(m)))
        law = oracle.f_law(n)
        pmf = dist[n]
        for k in range(pmf.shape[0]):
            worst = max(worst, abs(pmf[k] - float(law.get(k, 0))))
        for k in range(1, n + 1):
            worst = max(worst, abs(expected_Zk(n, k) - float(oracle.mean_Zk(n, k))))
    anchors = (
        _close(tab.nu[3], 4 / 3, tol), _close(tab.nu[4], 1.5, tol),
        _close(tab.mu[4], -1 / 6, tol), _close(dist[3][2], 1 / 3, tol),
        _close(expected_Zk(3, 1), 4 / 3, tol),
    )
    ok = bool(ok) and worst < tol and all(anchors)
    return ok, f"max deviation from enumeration over n<=10: {worst:.3g}; anchors {sum(anchors)}/5"


def _identity_failures(T, N, ref: bool) -> list[str]:
    bad = []
    n = T.n
    nv = node_values(T)
    F = count_F(T)
    if F != int(nv.toll.sum()):
        bad.append("F != sum of tolls")
    ch = count_chains(T, 64)
    sF, sf = ch.alternating()
    if ch.saturated or sF != F:
        bad.append("F != alternating F_k")
    if sf != int(nv.toll[0]):
        bad.append("f != alternating f_k")
    XN = count_F_small(T, N, "direct")
    if XN != count_F_small(T, N, "toll"):
        bad.append("X^N direct != sum of small tolls")
    sizes = maximal_green(T)
    if sum(sizes) + len(sizes) != n + 1 or len(sizes) != F:
        bad.append("maximal clades do not partition the leaves")
    if ref:
        t = T.to_nested()
        any_k, root_k = oracle.chains(t, 12)
        if (oracle.max_clades(t) != F or oracle.toll(t) != int(nv.toll[0])
                or oracle.small_max_clades(t, N) != XN
                or tuple(any_k) != ch.F[:12] or tuple(root_k) != ch.f[:12]
                or sorted(oracle.maximal_clade_sizes(t)) != sorted(x + 1 for x in sizes)):
            bad.append("disagrees with reference implementation")
    return bad


def check_identities(s: Session):
    count = s.reps(100_000, 10_000)
    rng = RngStream(1003)
    failures = 0
    first = ""
    for i in range(count):
        n = 1 + rng.randbelow(200)
        T = gen_bst_split(n, rng) if i % 2 == 0 else gen_bst_insert(n, rng)
        N = rng.randbelow(n + 1)
        bad = _identity_failures(T, N, ref=i % 100 == 0)
        if bad:
            failures += 1
            first = first or f"tree {i}: {bad[0]}"
    detail = f"{count} trees, {failures} failures" + (f" (first: {first})" if first else "")
    return failures == 0, detail


def check_single_clade(s: Session):
    dist = build_f_dist(512)
    worst = max(abs(dist[n][1] - 2.0 / n) for n in range(2, 513))
    ok = worst < 1e-12
    parts = [f"max |P(F=1)-2/n| over n<=512: {worst:.3g}"]
    R = s.reps(100_000, 20_000)
    for n in (100, 1000):
        res = s.run(n=n, R=R, K=0, seed=1004, with_nu=False, record=("F",))
        rate = float(np.mean(res.raw("F") == 1))
        p = 2.0 / n
        se = math.sqrt(p * (1 - p) / R)
        z = (rate - p) / se
        ok &= abs(z) <= 4
        parts.append(f"n={n}: rate {rate:.5f} vs {p:.5f} ({z:+.2f} SE)")
    return bool(ok), "; ".join(parts)


def check_mean(s: Session):
    tab = s.tables()
    n = np.arange(1, 100_001)
    dev = np.abs(tab.nu[1:] - ALPHA * n)
    worst = float(dev.max())
    early, late = float(dev[:10_000].max()), float(dev[10_000:].max())
    rel = abs(tab.nu[100_000] / 1e5 - ALPHA)
    ok = worst < 1 and late <= early and rel < 1e-4
    return ok, (f"max |nu_n - alpha n| = {worst:.4f} (n<=1e4: {early:.4f}, 1e4<n<=1e5: {late:.4f}); "
                f"|nu/n - alpha| at 1e5 = {rel:.3g}")


def _var_run(s: Session):
    return s.run(n=10_000, R=s.reps(100_000, 20_000), K=0, N=100, seed=1006,
                 record=("F", "XN", "G", "G_small"))


def check_variance(s: Session):
    tab = s.tables()
    exact = var_G_exact(10_000, tab)
    mc = _var_run(s)["G"].variance
    rel = abs(exact / mc - 1)
    r = {n: var_G_exact(n, tab) / (4 * ALPHA**2 * n * math.log(n)) for n in (1000, 10_000)}
    ok = rel < 0.05 and abs(r[10_000] - 1) < abs(r[1000] - 1) and 0.5 < r[10_000] < 1.5
    return ok, (f"var_G_exact(1e4)={exact:.1f}, MC {mc:.1f} ({rel:.2%} apart); "
                f"r(1e3)={r[1000]:.4f}, r(1e4)={r[10_000]:.4f}")


def check_cutoff_variance(s: Session):
    tab = s.tables()
    exact = var_Gprime_exact(10_000, 100, tab)
    run = _var_run(s)
    mc_g = run["G_small"].variance
    ratio = run["XN"].variance / exact
    rel = abs(exact / mc_g - 1)
    ok = rel < 0.05 and 0.8 < ratio < 1.2
    detail = (f"var_Gprime_exact={exact:.1f}, MC Var G'={mc_g:.1f} ({rel:.2%} apart); "
              f"MC Var X^N / var_Gprime_exact = {ratio:.4f}")
    if not s.quick:
        detail += f" (exact ratio {var_XN_exact(10_000, 100) / exact:.4f})"
    return ok, detail


def check_half_variance(s: Session):
    n = 100_000
    N = math.ceil(math.sqrt(n))
    res = s.run(n=n, R=s.reps(20_000, 5_000), K=0, N=N, seed=1008, with_nu=False,
                record=("F", "XN"))
    X = res.raw("F")
    XN = res.raw("XN")
    ratio = res["F"].variance / res["XN"].variance
    dxn = normality(XN)
    nu_n = s.tables().nu[n]
    dx = normality(X, center=nu_n, scale=math.sqrt(2 * ALPHA**2 * n * math.log(n)))
    a = 1.4 < ratio < 2.6
    b = dxn.ks < 0.03
    c = 1.4 < dx.variance < 2.6 and dx.ks > dxn.ks
    detail = (f"(a) Var X/Var X^N={ratio:.3f} {'ok' if a else 'out of band'}; "
              f"(b) KS(X^N)={dxn.ks:.4f}; (c) Var={dx.variance:.3f}, KS(X)={dx.ks:.4f}")
    if not s.quick:
        detail += f"; exact Var X/Var X^N={var_F_exact(n) / var_XN_exact(n, N):.4f}"
    return a and b and c, detail


def check_higher_moments(s: Session):
    dist = build_f_dist(512)
    grid = (64, 128, 256, 512)
    a, p = ALPHA, 2.5
    m3 = {n: central_moment(n, 3, dist) for n in grid}
    r3 = {n: m3[n] / (-6 * a**3 * n * n) for n in grid}
    rs = {n: sum_f_abs_exact(n, 3, dist) / (6 * a**3 * n * n) for n in grid}
    ab = {n: abs_central_moment(n, p, dist) for n in grid}
    rp = {n: ab[n] / ((2 * p / (p - 2)) * a**p * n ** (p - 1)) for n in grid}

    def closer(r):
        return abs(r[512] - 1) < abs(r[64] - 1)

    ok = (all(v < 0 for v in m3.values()) and closer(r3) and closer(rs)
          and all(v > 0 for v in ab.values()) and closer(rp))

    def show(r):
        return "/".join(f"{r[n]:.3f}" for n in grid)

    return ok, f"third moment ratio {show(r3)}; sum |f|^3 ratio {show(rs)}; |.|^2.5 ratio {show(rp)}"


def check_tail(s: Session):
    R = s.reps(100_000, 20_000)
    out = {}
    for n in (1000, 10_000):
        N = math.ceil(math.sqrt(n * math.log(math.log(n))))
        out[n] = (N, tail_event_rate(SimConfig(n=n, N=N, R=R, seed=1010, workers=s.workers)))
    N, t = out[10_000]
    ok = t.rate <= t.bound + 4 * t.se and t.rate < out[1000][1].rate
    return ok, (f"n=1e4, N={N}: rate {t.rate:.4f} +- {t.se:.4f}, bound {t.bound:.4f}; "
                f"n=1e3, N={out[1000][0]}: rate {out[1000][1].rate:.4f}")


def _size_chisquare(sizes: np.ndarray, pmf: np.ndarray) -> float:
    # bins 1..L plus one bin for everything larger
    L = pmf.shape[0]
    observed = np.bincount(np.minimum(sizes, L + 1), minlength=L + 2)[1:]
    expected = np.append(pmf, 1.0 - pmf.sum()) * sizes.size
    return float(chisquare(observed, expected).pvalue)


def _lambda_pmf_fraction(lam: int, n: int) -> Fraction:
    den = Fraction(1)
    for i in range(n):
        den *= 2 + lam + i
    return lam * math.factorial(n) / den


def check_samplers(s: Session):
    R = s.reps(1_000_000, 200_000)
    run = s.run(model="ct-clock", lam=1.0, R=R, K=4, seed=1011, on_cap="skip",
                record=("size", "f_1", "f_2", "f_3", "f_4"))
    n = np.arange(1, 21)
    p1 = _size_chisquare(run.raw("size"), 2.0 / ((n + 1) * (n + 2)))
    zs = [(run[f"f_{k}"].mean - e_fk_ct(k)) / run[f"f_{k}"].se for k in range(1, 5)]
    run2 = s.run(model="ct-clock", lam=2.0, R=s.reps(100_000, 50_000), K=0, seed=1111,
                 record=("size",))
    n10 = np.arange(1, 11)
    pmf2 = np.asarray(ct_lambda_size_pmf(2.0, n10))
    p2 = _size_chisquare(run2.raw("size"), pmf2)
    pmf_err = max(abs(pmf2[i] - float(_lambda_pmf_fraction(2, i + 1))) for i in range(10))
    resid = genfunc_residual(3.0, 100_000, s.tables())
    a_err = abs(e_f_ct_lambda(1.0) - alpha_closed())
    ok = (p1 > 0.001 and all(abs(z) <= 4 for z in zs) and p2 > 0.001 and pmf_err < 1e-12
          and resid < 1e-3 and a_err < 1e-12)
    return ok, (f"size chi2 p={p1:.3g} ({len(run.capped)} capped); "
                f"f_k z-scores {', '.join(f'{z:+.2f}' for z in zs)}; "
                f"lambda=2 chi2 p={p2:.3g}, pmf err {pmf_err:.2g}; "
                f"residual(3,1e5)={resid:.3g}; |E f(lam=1)-alpha|={a_err:.2g}")


def check_performance(s: Session, elapsed: float = 0.0):
    stream_functionals(1000, RngStream(0), N=32, census=True)
    best = math.inf
    for i in range(5):
        rng = RngStream(1012, i)
        t0 = time.perf_counter()
        stream_functionals(10**6, rng, N=1000, census=True)
        best = min(best, time.perf_counter() - t0)
    budget = 300.0 if s.quick else 3600.0
    ok = best < 0.05 and elapsed < budget
    return ok, f"replicate at n=1e6: {best * 1000:.1f} ms; checks so far {elapsed:.0f} s (budget {budget:.0f} s)"


CHECKS = {
    1: ("constants", check_constants),
    2: ("oracle equivalence", check_oracle),
    3: ("integer identities", check_identities),
    4: ("single maximal clade", check_single_clade),
    5: ("mean", check_mean),
    6: ("variance of G", check_variance),
    7: ("cutoff variance", check_cutoff_variance),
    8: ("half-variance phenomenon", check_half_variance),
    9: ("higher moments", check_higher_moments),
    10: ("large-clade rarity", check_tail),
    11: ("samplers", check_samplers),
    12: ("performance", check_performance),
}


def run_check(number: int, session: Session, elapsed: float = 0.0) -> CheckResult:
    title, fn = CHECKS[number]
    t0 = time.perf_counter()
    if number == 12:
        ok, detail = fn(session, elapsed)
    else:
        ok, detail = fn(session)
    return CheckResult(number, title, bool(ok), detail, time.perf_counter() - t0)


def run_all(quick: bool = False, workers: int = 1, only=None, report=None) -> list[CheckResult]:
    session = Session(quick, workers)
    results = []
    start = time.perf_counter()
    for number in sorted(CHECKS):
        if only and number not in only:
            continue
        res = run_check(number, session, time.perf_counter() - start)
        results.append(res)
        if report is not None:
            report(res)
    return results
