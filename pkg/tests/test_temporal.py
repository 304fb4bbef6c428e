import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from unicity.synth import GeneratorConfig, generate
from unicity.temporal import (UNCATEGORIZED, category_fractions, items_per_period,
                              jaccard_distance, jaccard_drift, popularity_histogram, rescale,
                              seasonal_curves, seasonal_unicity, usage_stats)
from unicity.tensor import FingerprintTensor, Window, from_sets

from conftest import A, B, C, D, brute_count, brute_popularity, dense_matrix


def test_rescale_formula():
    assert rescale([0.4, 0.5], [100, 200])[1] == pytest.approx(0.25)
    u = np.array([0.3, 0.7, 0.1])
    assert np.array_equal(rescale(u, [50, 50, 50]), u)


@pytest.mark.parametrize("a,b,d", [({A, B}, {B, C}, 2 / 3), ({A, B}, {A, B}, 0.0),
                                   ({A}, {B}, 1.0)])
def test_jaccard_distance(a, b, d):
    assert jaccard_distance(a, b) == pytest.approx(d)


def test_jaccard_is_metric_on_small_sets():
    universe = range(4)
    subsets = [set(c) for r in range(1, 5) for c in itertools.combinations(universe, r)]
    for x, y in itertools.product(subsets, repeat=2):
        assert jaccard_distance(x, y) == jaccard_distance(y, x)
        assert (jaccard_distance(x, y) == 0) == (x == y)
    for x, y, z in itertools.product(subsets, repeat=3):
        assert jaccard_distance(x, z) <= jaccard_distance(x, y) + jaccard_distance(y, z) + 1e-12


def test_drift_matches_setwise(small_synth):
    for mode in ("consecutive", "baseline"):
        series = jaccard_drift(small_synth, mode, keep_raw=True)
        assert len(series.summaries) == small_synth.n_periods - 1
        t = 2
        ref = 1 if mode == "consecutive" else 0
        expected = []
        mp, mq = small_synth.periods[ref], small_synth.periods[t]
        for u in range(small_synth.n_users):
            a = set(mp.indices[mp.indptr[u]:mp.indptr[u + 1]])
            b = set(mq.indices[mq.indptr[u]:mq.indptr[u + 1]])
            if a and b:
                expected.append(jaccard_distance(a, b))
        assert np.allclose(series.raw[t], expected)
        assert all(0 <= v <= 1 for v in series.raw[t])


def test_drift_empty_flagged():
    t = from_sets([{1: {A}}, {2: {B}}])
    s = jaccard_drift(t)
    assert s.summaries[0]["empty"] and s.summaries[0]["users"] == 0


def test_usage_stats():
    d0 = from_sets([{1: {A, B}, 2: {A, C}, 3: {A, B, C}, 4: {D}}])
    assert usage_stats(d0)[0] == {"period": 0, "users": 4, "mean": 2.0, "median": 2.0}
    one = from_sets([{1: {A, B, C}}])
    assert usage_stats(one)[0]["mean"] == usage_stats(one)[0]["median"] == 3
    two = from_sets([{1: {A, B}, 2: {A, B, C, D}}])
    assert usage_stats(two)[0]["mean"] == 3 and usage_stats(two)[0]["median"] == 3


def test_usage_excludes_absent_users():
    t = from_sets([{1: {A, B}, 2: {C}}, {1: {A, B, C, D}}])
    assert usage_stats(t)[1] == {"period": 1, "users": 1, "mean": 4.0, "median": 4.0}


def test_popularity_histogram_d0(d0):
    h = popularity_histogram(d0)
    edges, counts = np.array(h["edges"]), np.array(h["counts"])
    assert edges[0] == 1 and edges[-1] == 4
    # counts multiset {3, 2, 2, 1}
    got = {int(lo): int(c) for lo, c in zip(edges[:-1], counts) if c}
    assert got == {1: 1, 2: 2, 3: 1}


def test_popularity_histogram_single_item():
    t = from_sets([{u: {A} for u in range(37)}])
    h = popularity_histogram(t)
    nz = [(lo, hi) for lo, hi, c in zip(h["edges"][:-1], h["edges"][1:], h["counts"]) if c]
    assert len(nz) == 1 and nz[0][0] <= 37 < nz[0][1]


def test_popularity_histogram_tail_exponent():
    t = generate(GeneratorConfig(users=100_000, items=50_000, alpha=1.5, seed=17))
    h = popularity_histogram(t)
    assert abs(h["tail_exponent"] - 1.5) <= 0.3


def test_category_fractions():
    d0 = from_sets([{1: {A, B}, 2: {A, C}, 3: {A, B, C}, 4: {D}}])
    fr = category_fractions(d0, {A: "X", B: "X", C: "Y", D: "Y"})[0]
    assert fr["X"] == 0.5 and fr["Y"] == 0.5 and fr[UNCATEGORIZED] == 0.0
    one = category_fractions(d0, {A: "X", B: "X", C: "X", D: "X"})[0]
    assert one["X"] == 1.0
    assert category_fractions(d0, {})[0][UNCATEGORIZED] == 1.0
    pairs = category_fractions(d0, {A: "X", B: "X", C: "Y", D: "Y"}, weighting="pairs")[0]
    assert pairs["X"] == pytest.approx(5 / 8)


def test_category_fractions_sum_to_one(small_synth):
    cats = {int(i): f"c{int(i) % 5}" for i in small_synth.item_ids[::3]}
    for w in ("items", "pairs"):
        for row in category_fractions(small_synth, cats, w):
            total = sum(v for k, v in row.items() if k != "period")
            assert abs(total - 1) <= 1e-9


def test_seasonal_requires_two_periods(d0):
    with pytest.raises(ValueError):
        seasonal_unicity(d0, 1, "popularity")


def _inject_rare(tensor, period, fraction, seed=0):
    """Give ``fraction`` of the period's users a private fresh item in one period."""
    m = tensor.periods[period]
    present = np.flatnonzero(np.diff(m.indptr))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(present, size=int(len(present) * fraction), replace=False))
    n_new = len(chosen)
    shape = (tensor.n_users, tensor.n_items + n_new)
    mats = []
    for t, mt in enumerate(tensor.periods):
        mt = sp.csr_matrix((mt.data, mt.indices, mt.indptr), shape=shape)
        if t == period:
            extra = sp.csr_matrix((np.ones(n_new, np.int8),
                                   (chosen, tensor.n_items + np.arange(n_new))), shape=shape)
            mt = sp.csr_matrix(mt + extra, dtype=np.int8)
            mt.sort_indices()
        mats.append(mt)
    item_ids = np.concatenate([tensor.item_ids,
                               tensor.item_ids.max() + 1 + np.arange(n_new, dtype=np.uint64)])
    return FingerprintTensor(tensor.user_ids, item_ids, mats, tensor.min_items_per_period)


def test_seasonal_spike_from_rare_items():
    base = generate(GeneratorConfig(users=1000, items=3000, periods=3, churn=0.2,
                                    mean_items=10, seed=5))
    t = _inject_rare(base, 1, 0.10)
    curve = seasonal_unicity(t, 1, "popularity", s=1, sample_size=1000, seed=1)
    u = curve.raw
    assert u[1] > u[0] and u[1] > u[2]

    # brute-force the per-period values over the whole population
    for period in range(3):
        w = Window.single(period)
        dense = dense_matrix(t, w)
        pop = brute_popularity(t, w)
        present = np.flatnonzero(dense.any(axis=1))
        unique = 0
        for r in present:
            items = t.item_ids[np.flatnonzero(dense[r])]
            rarest = min(items.tolist(), key=lambda i: (pop[i], i))
            unique += brute_count(dense, t, [rarest]) == 1
        assert u[period] == pytest.approx(unique / len(present))
    assert np.array_equal(curve.n_items, items_per_period(t))
    assert curve.rescaled[0] == curve.raw[0]


def test_seasonal_values_are_valid_estimates(small_synth):
    curves = seasonal_curves(small_synth, [1, 3], "random", s=3, sample_size=100, seed=4)
    for c in curves:
        for e in c.estimates:
            assert all(0 <= v <= 1 for v in e.per_sample)
            assert e.mean == pytest.approx(np.mean(e.per_sample))
        rows = list(c.rows())
        assert [r["period"] for r in rows] == [0, 1, 2]
