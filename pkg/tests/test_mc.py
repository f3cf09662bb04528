import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxclades.errors import CapExceeded, ConfigMismatch, DegenerateSample
from maxclades.exact import build_mu_nu, e_fk_ct_lambda, expected_large_clades
from maxclades.functionals import tree_functionals
from maxclades.mc import (MomentSummary, SimConfig, ks_normal, merge, normality, raw_csv,
                          run_experiment, summaries_csv, summaries_json, tail_event_rate)
from maxclades.rng import RngStream
from maxclades.treegen import gen_bst_insert, gen_bst_split, sample_ct_clock

values = st.lists(st.integers(-1000, 1000), min_size=1, max_size=60)


def direct_sums(x):
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    return [float(np.sum(d**k)) for k in range(2, 7)]


@given(values, values)
def test_merge_equals_concatenation(a, b):
    sa = MomentSummary.from_values("F", a, p=(1.5,))
    sb = MomentSummary.from_values("F", b, p=(1.5,))
    m = merge(sa, sb)
    whole = a + b
    assert m.count == len(whole)
    assert m.mean == pytest.approx(np.mean(whole), rel=1e-12, abs=1e-12)
    scale = max(1.0, float(np.max(np.abs(np.asarray(whole) - np.mean(whole)))))
    for k, s in zip(range(2, 7), direct_sums(whole)):
        assert m.sums[k] == pytest.approx(s, rel=1e-9, abs=1e-9 * scale**k * len(whole))
    assert m.minimum == min(whole) and m.maximum == max(whole)
    assert np.array_equal(m.raw, whole)
    assert m.abs_moments[1.5] == pytest.approx(
        np.mean(np.abs(np.asarray(whole) - np.mean(whole)) ** 1.5), rel=1e-9, abs=1e-12)


@given(values, values, values)
def test_merge_is_associative(a, b, c):
    s = [MomentSummary.from_values("X", v) for v in (a, b, c)]
    left = merge(merge(s[0], s[1]), s[2])
    right = merge(s[0], merge(s[1], s[2]))
    assert left.count == right.count
    assert left.mean == pytest.approx(right.mean, rel=1e-12, abs=1e-12)
    for k in range(2, 7):
        assert left.sums[k] == pytest.approx(right.sums[k], rel=1e-8, abs=1e-6)


def test_merge_examples():
    s = MomentSummary.from_values("F", [3, 5, 9])
    e = MomentSummary.empty("F")
    m = merge(s, e)
    assert m.count == 3 and m.mean == s.mean and np.array_equal(m.sums, s.sums)
    two = merge(MomentSummary.from_values("F", [2]), MomentSummary.from_values("F", [7]))
    assert two.count == 2 and two.mean == 4.5 and two.sums[2] == pytest.approx(25 / 2)
    with pytest.raises(ConfigMismatch):
        merge(MomentSummary.from_values("F", [1]), MomentSummary.from_values("G", [1]))
    with pytest.raises(ConfigMismatch):
        merge(MomentSummary.from_values("F", [1], key="a"), MomentSummary.from_values("F", [1], key="b"))


def test_merge_seven_blocks():
    x = np.asarray(RngStream(3).random(10_000) * 100).round()
    whole = MomentSummary.from_values("F", x)
    acc = MomentSummary.empty("F")
    for block in np.array_split(x, 7):
        acc = merge(acc, MomentSummary.from_values("F", block))
    for k in range(2, 7):
        assert acc.moment(k) == pytest.approx(whole.moment(k), rel=1e-9)
    assert acc.m2 >= 0


def test_normality_of_normal_draws():
    u = RngStream(11).random(2 * 10**6)
    z = np.sqrt(-2 * np.log1p(-u[::2])) * np.cos(2 * np.pi * u[1::2])
    d = normality(z)
    assert d.ks < 0.002
    assert abs(d.skew) < 0.01 and abs(d.kurtosis) < 0.02
    assert 0 <= d.ks <= 1
    assert normality(z, center=0.0, scale=1.0).variance == pytest.approx(1.0, abs=0.005)


def test_ks_known_values():
    assert ks_normal([0.0]) == pytest.approx(0.5)
    assert ks_normal([50.0, 60.0]) == pytest.approx(1.0)


def test_degenerate():
    with pytest.raises(DegenerateSample):
        normality([4, 4, 4, 4])
    with pytest.raises(DegenerateSample):
        normality([1, 2, 3], scale=0.0)


def test_two_node_trees():
    res = run_experiment(SimConfig(n=2, R=500, K=2, seed=9))
    assert (res.raw("F") == 1).all() and res["F"].variance == 0


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n=10, R=0)
    with pytest.raises(ValueError):
        SimConfig(n=10, N=11)
    with pytest.raises(ValueError):
        SimConfig(n=10, K=65)
    with pytest.raises(ValueError):
        SimConfig(model="yule", n=10)
    with pytest.raises(ValueError):
        SimConfig(n=10, record=("nope",))
    assert SimConfig(n=10_000).cutoff == 100
    assert SimConfig(n=10).resolved()["N"] == 4


@pytest.mark.parametrize("model", ["bst-split", "bst-insert", "ct-clock"])
def test_worker_count_does_not_change_results(model):
    kw = dict(model=model, n=300, K=5, R=3000, seed=4, lam=1.5, on_cap="skip")
    runs = [run_experiment(SimConfig(workers=w, **kw)) for w in (1, 2, 8)]
    for name in runs[0].summaries:
        for r in runs[1:]:
            assert np.array_equal(r.raw(name), runs[0].raw(name))
            assert r[name].mean == runs[0][name].mean
            assert np.array_equal(r[name].sums, runs[0][name].sums)


@pytest.mark.parametrize("model,gen", [("bst-split", gen_bst_split), ("bst-insert", gen_bst_insert)])
def test_replicates_match_standalone_trees(model, gen):
    n, N, K = 150, 12, 6
    nu = build_mu_nu(n)
    res = run_experiment(SimConfig(model=model, n=n, N=N, K=K, R=400, seed=21), nu)
    for r in range(0, 400, 40):
        t = tree_functionals(gen(n, RngStream(21, r)), N=N, nu=nu, K=K)
        for key in ("F", "XN", "tail", "F_large"):
            assert res.raw(key)[r] == t.stats[key]
        assert res.raw("G")[r] == pytest.approx(t.stats["G"], abs=1e-9)
        for k in range(1, K + 1):
            assert res.raw(f"F_{k}")[r] == t.Fk[k - 1]
            assert res.raw(f"f_{k}")[r] == t.fk[k - 1]
        assert res.raw("mismatch")[r] == (t.stats["F"] != t.stats["XN"])


def test_clock_replicates_match_sampler():
    res = run_experiment(SimConfig(model="ct-clock", lam=2.0, K=3, R=200, seed=5))
    for r in range(0, 200, 25):
        T = sample_ct_clock(2.0, RngStream(5, r))
        t = tree_functionals(T, K=3)
        assert res.raw("size")[r] == T.n
        assert res.raw("F")[r] == t.stats["F"]
        assert res.raw("f_2")[r] == t.fk[1]


def test_cap_exceeded_carries_replicate():
    cfg = SimConfig(model="ct-clock", lam=0.01, cap=20, R=50, seed=1)
    with pytest.raises(CapExceeded) as info:
        run_experiment(cfg)
    assert info.value.replicate is not None and 0 <= info.value.replicate < 50
    res = run_experiment(SimConfig(model="ct-clock", lam=0.01, cap=20, R=50, seed=1, on_cap="skip"))
    assert res.capped and res["F"].count == 50 - len(res.capped)


def test_mean_F_matches_nu():
    n, R = 10_000, 100_000
    t = build_mu_nu(n)
    res = run_experiment(SimConfig(n=n, R=R, K=0, seed=77, with_nu=False, record=("F",)))
    assert abs(res["F"].mean - t.nu[n]) < 4 * res["F"].se


def test_single_clade_rate():
    for n in (100, 1000):
        res = run_experiment(SimConfig(n=n, R=100_000, K=0, seed=n, with_nu=False, record=("F",)))
        p = 2 / n
        rate = np.mean(res.raw("F") == 1)
        assert abs(rate - p) < 4 * math.sqrt(p * (1 - p) / 100_000)


def test_clock_chain_means_lambda_two():
    # checks the lambda-weighted chain formula against the sampler
    res = run_experiment(SimConfig(model="ct-clock", lam=2.0, K=3, R=200_000, seed=31))
    for k in (1, 2, 3):
        s = res[f"f_{k}"]
        assert abs(s.mean - e_fk_ct_lambda(k, 2.0)) < 4 * s.se


def test_tail_rate():
    n = 10_000
    assert tail_event_rate(SimConfig(n=500, N=500, R=2000, seed=1)).rate == 0
    N = math.ceil(math.sqrt(n * math.log(math.log(n))))
    t = tail_event_rate(SimConfig(n=n, N=N, R=20_000, seed=2))
    assert t.rate <= t.bound + 4 * t.se
    assert t.bound == pytest.approx(expected_large_clades(n, N))
    rates = [tail_event_rate(SimConfig(n=n, N=m * 100, R=20_000, seed=3)).rate for m in (1, 2, 4)]
    assert rates[0] > rates[1] > rates[2]


def test_serialization_round_trip():
    res = run_experiment(SimConfig(n=50, R=300, K=2, seed=8))
    text = summaries_csv(res)
    lines = text.splitlines()
    assert lines[0] == "functional,count,mean,m2,m3,m4,m5,m6,min,max,ks,skew,kurt"
    assert len(lines) == 1 + len(res.summaries)
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert row["functional"] == "F" and float(row["mean"]) == res["F"].mean
    doc = json.loads(summaries_json(res))
    assert doc["meta"]["config"]["N"] == 8
    assert [f["functional"] for f in doc["functionals"]] == list(res.summaries)
    raw = raw_csv(res, "F").splitlines()
    assert raw[0] == "F" and [int(x) for x in raw[1:]] == res.raw("F").tolist()
    assert summaries_csv(run_experiment(SimConfig(n=50, R=300, K=2, seed=8))) == text


def test_raw_not_kept_on_request():
    # one block: the block's absolute moments cover every replicate
    res = run_experiment(SimConfig(n=30, R=100, K=0, seed=1, store_raw=False))
    assert res["F"].raw is None and res["F"].abs_moments
    # several blocks without raw values cannot combine absolute moments
    res = run_experiment(SimConfig(n=30, R=9000, K=0, seed=1, store_raw=False))
    assert res["F"].raw is None and res["F"].abs_moments is None
    with pytest.raises(ValueError):
        res.raw("F")
