"""Reproducible Monte Carlo experiments over the tree generators.

Replicate ``r`` always draws from ``RngStream(seed, r)``, so raw samples do
not depend on how replicates are spread over threads.  Replicates are run in
fixed-size blocks; each block is summarized and the summaries are merged in
block order, which keeps the floating point output bit-stable as well.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, asdict

import numba as nb
import numpy as np
from scipy.special import ndtr

from .errors import CapExceeded, ConfigMismatch, DegenerateSample
from .exact import ExactTables, build_mu_nu, expected_large_clades
from .functionals import (MAX_CHAIN_DEPTH, NSTATS, STAT_NAMES, S_F, S_XN,
                          stream_split_kernel, tree_stats_kernel)
from .rng import _shuffle, stream_key
from .treegen import DEFAULT_CLOCK_CAP, _insert_keys, _sizes, clock_tree_kernel

# skip the TBB probe; OpenMP or the built-in work queue are enough here
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

MODELS = ("bst-split", "bst-insert", "ct-clock")
BLOCK = 8192
MAX_MOMENT = 6
DEFAULT_P = (1.5, 2.5, 3.0)

# extra columns after the functional statistics in a kernel output row
_EXTRA = ("mismatch", "size", "overflow", "capped")
_ROW = NSTATS + len(_EXTRA)
_NU_STATS = ("G", "H", "G_small", "G_large", "H_small", "H_large")
_INT_STATS = ("F", "XN", "F_large", "tail", "root_green", "mismatch", "size")


@dataclass(frozen=True)
class SimConfig:
    model: str = "bst-split"
    n: int | None = None
    lam: float = 1.0
    cap: int = DEFAULT_CLOCK_CAP
    N: int | None = None
    K: int = 20
    R: int = 1000
    seed: int = 0
    workers: int = 1
    record: tuple | None = None
    store_raw: bool | None = None
    with_nu: bool = True
    p: tuple = DEFAULT_P
    on_cap: str = "raise"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.R < 1:
            raise ValueError("R must be at least 1")
        if not 0 <= self.K <= MAX_CHAIN_DEPTH:
            raise ValueError(f"K must be in 0..{MAX_CHAIN_DEPTH}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.on_cap not in ("raise", "skip"):
            raise ValueError("on_cap must be 'raise' or 'skip'")
        if self.model == "ct-clock":
            if self.lam <= 0:
                raise ValueError("lambda must be positive")
            if self.cap < 1:
                raise ValueError("cap must be at least 1")
        else:
            if self.n is None or self.n < 0:
                raise ValueError("n must be a nonnegative integer")
            if self.N is not None and not 0 <= self.N <= self.n:
                raise ValueError("cutoff N must lie in 0..n")
        self.stat_names()

    @property
    def cutoff(self) -> int:
        """Resolved cutoff; ceil(sqrt(n)) by default, no cutoff for clock trees."""
        if self.N is not None:
            return int(self.N)
        if self.model == "ct-clock":
            return self.cap
        return int(math.ceil(math.sqrt(self.n)))

    @property
    def keep_raw(self) -> bool:
        return self.R <= 1_000_000 if self.store_raw is None else bool(self.store_raw)

    def uses_nu(self) -> bool:
        return self.with_nu and self.model != "ct-clock"

    def stat_names(self) -> tuple:
        names = ["F", "XN", "F_large", "tail", "root_green", "mismatch"]
        if self.uses_nu():
            names += list(_NU_STATS)
        if self.model == "ct-clock":
            names.append("size")
        names += [f"F_{k}" for k in range(1, self.K + 1)]
        names += [f"f_{k}" for k in range(1, self.K + 1)]
        if self.record is None:
            return tuple(names)
        unknown = set(self.record) - set(names)
        if unknown:
            raise ValueError(f"cannot record {sorted(unknown)} with this config")
        return tuple(x for x in names if x in self.record)

    def resolved(self) -> dict:
        d = asdict(self)
        d["N"] = self.cutoff
        d["p"] = list(self.p)
        d["record"] = list(self.stat_names())
        d["store_raw"] = self.keep_raw
        if self.model == "ct-clock":
            d.pop("n")
        else:
            d.pop("lam")
            d.pop("cap")
            d.pop("on_cap")
        return d


# Moment summaries ----------------------------------------------------------

def _central_sums(x: np.ndarray, mean: float) -> np.ndarray:
    d = x - mean
    out = np.zeros(MAX_MOMENT + 1)
    pw = np.ones_like(d)
    for k in range(1, MAX_MOMENT + 1):
        pw = pw * d
        if k >= 2:
            out[k] = math.fsum(pw)
    return out


@dataclass
class MomentSummary:
    """Count, mean and central sums ``M_k = sum (x - mean)^k`` for k <= 6."""

    name: str
    key: str
    count: int = 0
    mean: float = 0.0
    sums: np.ndarray = field(default_factory=lambda: np.zeros(MAX_MOMENT + 1))
    minimum: float = math.inf
    maximum: float = -math.inf
    p: tuple = ()
    abs_moments: dict | None = None
    raw: np.ndarray | None = None

    @classmethod
    def empty(cls, name: str, key: str = "", p=()) -> "MomentSummary":
        return cls(name, key, p=tuple(p), abs_moments={} if not p else None,
                   raw=np.zeros(0, dtype=np.int64))

    @classmethod
    def from_values(cls, name: str, values, key: str = "", p=(), keep_raw=True):
        x = np.asarray(values)
        xf = x.astype(np.float64)
        if xf.size == 0:
            return cls.empty(name, key, p)
        mean = math.fsum(xf) / xf.size
        s = cls(name, key, int(xf.size), mean, _central_sums(xf, mean),
                float(xf.min()), float(xf.max()), tuple(p))
        s.raw = x.copy() if keep_raw else None
        s.abs_moments = _abs_moments(xf, mean, p)
        return s

    def moment(self, k: int) -> float:
        """Central moment m_k (population normalization)."""
        if k == 1:
            return 0.0
        return self.sums[k] / self.count if self.count else math.nan

    @property
    def m2(self):
        return self.moment(2)

    @property
    def variance(self) -> float:
        """Unbiased sample variance."""
        return self.sums[2] / (self.count - 1) if self.count > 1 else math.nan

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    @property
    def se(self) -> float:
        """Standard error of the mean."""
        return math.sqrt(self.variance / self.count) if self.count > 1 else math.nan

    @property
    def skew(self) -> float:
        m2 = self.m2
        return self.moment(3) / m2 ** 1.5 if m2 > 0 else math.nan

    @property
    def kurtosis(self) -> float:
        m2 = self.m2
        return self.moment(4) / m2 ** 2 - 3.0 if m2 > 0 else math.nan

    def merge(self, other: "MomentSummary") -> "MomentSummary":
        return merge(self, other)


def _abs_moments(x: np.ndarray, mean: float, p) -> dict:
    a = np.abs(x - mean)
    return {float(q): math.fsum(a ** q) / x.size for q in p}


def merge(a: MomentSummary, b: MomentSummary) -> MomentSummary:
    """Combine two summaries with the pairwise central-moment update."""
    if a.name != b.name or a.key != b.key or tuple(a.p) != tuple(b.p):
        raise ConfigMismatch(f"cannot merge {a.name}/{a.key} with {b.name}/{b.key}")
    if b.count == 0:
        return _copy(a)
    if a.count == 0:
        return _copy(b)
    na, nb_ = a.count, b.count
    n = na + nb_
    delta = b.mean - a.mean
    mean = a.mean + delta * nb_ / n
    sums = np.zeros(MAX_MOMENT + 1)
    for p in range(2, MAX_MOMENT + 1):
        acc = a.sums[p] + b.sums[p]
        for k in range(1, p - 1):
            acc += math.comb(p, k) * delta ** k * (
                (-nb_ / n) ** k * a.sums[p - k] + (na / n) ** k * b.sums[p - k])
        acc += (na * nb_ * delta / n) ** p * (1.0 / nb_ ** (p - 1) - (-1.0 / na) ** (p - 1))
        sums[p] = acc
    out = MomentSummary(a.name, a.key, n, mean, sums, min(a.minimum, b.minimum),
                        max(a.maximum, b.maximum), tuple(a.p))
    if a.raw is not None and b.raw is not None:
        out.raw = np.concatenate((a.raw, b.raw))
        out.abs_moments = _abs_moments(out.raw.astype(np.float64), mean, a.p)
    return out


def _copy(s: MomentSummary) -> MomentSummary:
    return MomentSummary(s.name, s.key, s.count, s.mean, s.sums.copy(), s.minimum,
                         s.maximum, tuple(s.p),
                         None if s.abs_moments is None else dict(s.abs_moments),
                         None if s.raw is None else s.raw.copy())


# Normality diagnostics -----------------------------------------------------

@dataclass(frozen=True)
class Diagnostics:
    mean: float
    variance: float
    skew: float
    kurtosis: float
    ks: float
    count: int


def ks_normal(z) -> float:
    """Exact one-sample Kolmogorov-Smirnov distance to the standard normal."""
    z = np.sort(np.asarray(z, dtype=np.float64))
    n = z.size
    cdf = ndtr(z)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def normality(values, center: float | None = None, scale: float | None = None) -> Diagnostics:
    """Standardize ``values`` and compare them with N(0, 1).

    ``center`` and ``scale`` default to the sample mean and standard deviation.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("values must be nonempty")
    if center is None:
        center = math.fsum(x) / x.size
    if scale is None:
        scale = math.sqrt(math.fsum((x - center) ** 2) / x.size)
    if not math.isfinite(scale) or scale <= 1e-300 or (scale <= 0):
        raise DegenerateSample("sample has no spread")
    z = (x - center) / scale
    zm = math.fsum(z) / z.size
    d = z - zm
    m2 = math.fsum(d * d) / z.size
    if m2 <= 0:
        raise DegenerateSample("standardized sample has no spread")
    m3 = math.fsum(d ** 3) / z.size
    m4 = math.fsum(d ** 4) / z.size
    var = math.fsum(z * z) / z.size
    return Diagnostics(zm, var, m3 / m2 ** 1.5, m4 / m2 ** 2 - 3.0, ks_normal(z), int(z.size))


# Batch kernels --------------------------------------------------------------

@nb.njit(cache=True)
def _fill_row(out, chains, b, stats, Fk, fk, over, K):
    for j in range(NSTATS):
        out[b, j] = stats[j]
    out[b, NSTATS] = 1.0 if stats[S_F] != stats[S_XN] else 0.0
    out[b, NSTATS + 2] = 1.0 if over else 0.0
    for k in range(K):
        chains[b, k] = Fk[k]
        chains[b, K + k] = fk[k]


@nb.njit(parallel=True, cache=True)
def _split_block(seed, start, count, n, N, nu, K):
    out = np.zeros((count, _ROW))
    chains = np.zeros((count, 2 * K), dtype=np.int64)
    for b in nb.prange(count):
        key = stream_key(seed, np.uint64(start + b))
        stats, Fk, fk, cen, over, pos = stream_split_kernel(n, N, nu, K, False, key, 0)
        _fill_row(out, chains, b, stats, Fk, fk, over, K)
        out[b, NSTATS + 1] = n
    return out, chains


@nb.njit(parallel=True, cache=True)
def _insert_block(seed, start, count, n, N, nu, K):
    out = np.zeros((count, _ROW))
    chains = np.zeros((count, 2 * K), dtype=np.int64)
    for b in nb.prange(count):
        key = stream_key(seed, np.uint64(start + b))
        perm = np.arange(1, n + 1)
        _shuffle(perm, key, 0)
        left, right = _insert_keys(perm)
        size = _sizes(left, right)
        stats, Fk, fk, cen, over = tree_stats_kernel(left, right, size, N, nu, K, False)
        _fill_row(out, chains, b, stats, Fk, fk, over, K)
        out[b, NSTATS + 1] = n
    return out, chains


@nb.njit(parallel=True, cache=True)
def _clock_block(seed, start, count, lam, cap, N, K):
    out = np.zeros((count, _ROW))
    chains = np.zeros((count, 2 * K), dtype=np.int64)
    nu = np.zeros(0)
    for b in nb.prange(count):
        key = stream_key(seed, np.uint64(start + b))
        left, right, m, pos = clock_tree_kernel(lam, cap, key, 0)
        if m < 0:
            out[b, NSTATS + 3] = 1.0
            continue
        size = _sizes(left, right)
        stats, Fk, fk, cen, over = tree_stats_kernel(left, right, size, N, nu, K, False)
        _fill_row(out, chains, b, stats, Fk, fk, over, K)
        out[b, NSTATS + 1] = m
    return out, chains


def run_block(config: SimConfig, start: int, count: int, nu: np.ndarray):
    """Raw kernel output for replicates ``start .. start + count - 1``."""
    seed = np.uint64(config.seed)
    N = config.cutoff
    if config.model == "bst-split":
        return _split_block(seed, start, count, config.n, N, nu, config.K)
    if config.model == "bst-insert":
        return _insert_block(seed, start, count, config.n, N, nu, config.K)
    return _clock_block(seed, start, count, float(config.lam), config.cap, N, config.K)


def _columns(config: SimConfig, out: np.ndarray, chains: np.ndarray, keep: np.ndarray) -> dict:
    cols = {}
    index = {name: j for j, name in enumerate(STAT_NAMES + _EXTRA)}
    K = config.K
    for name in config.stat_names():
        if name.startswith("F_") and name[2:].isdigit():
            col = chains[:, int(name[2:]) - 1]
        elif name.startswith("f_") and name[2:].isdigit():
            col = chains[:, K + int(name[2:]) - 1]
        else:
            col = out[:, index[name]]
            if name in _INT_STATS:
                col = col.astype(np.int64)
        cols[name] = col[keep]
    return cols


@dataclass
class ExperimentResult:
    config: SimConfig
    summaries: dict
    capped: list = field(default_factory=list)
    overflow: int = 0

    def __getitem__(self, name: str) -> MomentSummary:
        return self.summaries[name]

    def raw(self, name: str) -> np.ndarray:
        r = self.summaries[name].raw
        if r is None:
            raise ValueError("raw samples were not stored")
        return r


def _config_key(config: SimConfig) -> str:
    return json.dumps(config.resolved(), sort_keys=True)


def run_experiment(config: SimConfig, tables: ExactTables | None = None) -> ExperimentResult:
    """Run ``config.R`` replicates and summarize every recorded statistic."""
    nu = np.zeros(0)
    if config.uses_nu() and config.n > 0:
        if tables is None or tables.nmax < config.n or tables.exact:
            tables = build_mu_nu(config.n)
        nu = np.ascontiguousarray(tables.nu[: config.n], dtype=np.float64)
    nb.set_num_threads(min(config.workers, nb.config.NUMBA_NUM_THREADS))
    key = _config_key(config)
    names = config.stat_names()
    total = {name: MomentSummary.empty(name, key, config.p) for name in names}
    capped, overflow = [], 0
    for start in range(0, config.R, BLOCK):
        count = min(BLOCK, config.R - start)
        out, chains = run_block(config, start, count, nu)
        cap_rows = np.flatnonzero(out[:, NSTATS + 3] > 0)
        if cap_rows.size:
            if config.on_cap == "raise":
                raise CapExceeded(config.cap, replicate=int(start + cap_rows[0]))
            capped.extend(int(start + r) for r in cap_rows)
        overflow += int(out[:, NSTATS + 2].sum())
        keep = out[:, NSTATS + 3] == 0
        for name, col in _columns(config, out, chains, keep).items():
            block = MomentSummary.from_values(name, col, key, config.p, keep_raw=config.keep_raw)
            total[name] = merge(total[name], block)
    return ExperimentResult(config, total, capped, overflow)


# Tail event ------------------------------------------------------------------

@dataclass(frozen=True)
class TailRate:
    rate: float
    se: float
    bound: float
    count: int


def tail_event_rate(config: SimConfig, result: ExperimentResult | None = None) -> TailRate:
    """Fraction of replicates where a large clade changes the count (F != X^N)."""
    if config.model == "ct-clock":
        raise ValueError("tail events need a fixed tree size")
    if result is None:
        cfg = SimConfig(**{**asdict(config), "record": ("mismatch",), "K": 0,
                           "with_nu": False, "store_raw": False})
        result = run_experiment(cfg)
    s = result["mismatch"]
    rate = s.mean
    se = math.sqrt(max(rate * (1.0 - rate), 0.0) / s.count)
    return TailRate(rate, se, expected_large_clades(config.n, config.cutoff), s.count)


# Serialization -----------------------------------------------------------------

SUMMARY_COLUMNS = ("functional", "count", "mean", "m2", "m3", "m4", "m5", "m6",
                   "min", "max", "ks", "skew", "kurt")


def fmt(x) -> str:
    """Shortest round-trip text for ints, 17 significant digits for reals."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _ks_or_nan(s: MomentSummary) -> float:
    if s.raw is None or s.count < 2 or s.m2 <= 0:
        return math.nan
    return normality(s.raw).ks


def summary_rows(result: ExperimentResult) -> list[list[str]]:
    rows = []
    for name, s in result.summaries.items():
        rows.append([name, fmt(s.count), fmt(s.mean)]
                    + [fmt(s.moment(k)) for k in range(2, MAX_MOMENT + 1)]
                    + [fmt(s.minimum), fmt(s.maximum), fmt(_ks_or_nan(s)),
                       fmt(s.skew), fmt(s.kurtosis)])
    return rows


def summaries_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    w.writerows(summary_rows(result))
    return buf.getvalue()


def summaries_json(result: ExperimentResult, meta: dict | None = None) -> str:
    items = []
    for row, s in zip(summary_rows(result), result.summaries.values()):
        obj = dict(zip(SUMMARY_COLUMNS, row))
        obj["abs_moments"] = {fmt(q): fmt(v) for q, v in (s.abs_moments or {}).items()}
        items.append(obj)
    doc = {"meta": {"config": result.config.resolved(), "capped": result.capped,
                    "overflow": result.overflow, **(meta or {})},
           "functionals": items}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def raw_csv(result: ExperimentResult, name: str) -> str:
    return name + "\n" + "".join(fmt(v) + "\n" for v in result.raw(name).tolist())
