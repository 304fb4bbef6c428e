import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unicity.engine import (QuasiIdentifier, Strategy, estimate_unicity, is_unique, match_count,
                            sample_match_counts, select_quasi_identifier, unicity_curve)
from unicity.tensor import EmptyDatasetError, from_sets, window_fingerprint

from conftest import A, B, C, D, brute_count, brute_popularity, dense_matrix


def test_select_popularity_d0(d0):
    pop = d0.popularity()
    qi = select_quasi_identifier(window_fingerprint(d0, 3), 2, Strategy.POPULARITY, pop)
    assert set(qi.items.tolist()) == {B, C}
    assert qi.source_user == 3


@pytest.mark.parametrize("strategy", list(Strategy))
def test_select_caps_at_fingerprint_size(d0, strategy):
    qi = select_quasi_identifier(window_fingerprint(d0, 4), 3, strategy, d0.popularity())
    assert qi.items.tolist() == [D]


@pytest.mark.parametrize("seed", [0, 1, 99, 12345])
def test_select_random_full_draw(d0, seed):
    qi = select_quasi_identifier(window_fingerprint(d0, 1), 2, Strategy.RANDOM,
                                 d0.popularity(), seed=seed)
    assert set(qi.items.tolist()) == {A, B}


def test_select_random_is_uniform():
    t = from_sets([{1: {1, 2, 3, 4}}])
    fp = window_fingerprint(t, 1)
    seen = {}
    for seed in range(3000):
        key = tuple(select_quasi_identifier(fp, 2, "random", t.popularity(), seed=seed).items)
        seen[key] = seen.get(key, 0) + 1
    assert len(seen) == 6
    # each pair has probability 1/6; 3000 draws gives sd ~ 20
    assert all(abs(v - 500) < 100 for v in seen.values())


def test_select_errors(d0):
    fp = window_fingerprint(d0, 1)
    with pytest.raises(ValueError):
        select_quasi_identifier(fp, 0, Strategy.POPULARITY, d0.popularity())


def test_match_count_d0(d0):
    index = d0.match_index()
    assert match_count(index, [A]) == 3
    assert match_count(index, [A, B]) == 2
    assert match_count(index, [D]) == 1
    assert match_count(index, [12345]) == 0
    assert set(index.matches([A, B]).tolist()) == {1, 3}
    with pytest.raises(ValueError):
        match_count(index, [])


def test_is_unique_d0(d0):
    index = d0.match_index()
    assert is_unique(index, QuasiIdentifier(np.array([D]), 4))
    assert not is_unique(index, QuasiIdentifier(np.array([A, B]), 1))
    assert is_unique(index, QuasiIdentifier(np.array([B, C]), 3))


@pytest.mark.parametrize("n,strategy,expected", [
    (1, Strategy.RANDOM, 0.25),
    (1, Strategy.POPULARITY, 0.25),
    (2, Strategy.POPULARITY, 0.5),
    (3, Strategy.POPULARITY, 0.5),
    (7, Strategy.POPULARITY, 0.5),
])
def test_estimate_d0(d0, n, strategy, expected):
    est = estimate_unicity(d0, None, n, strategy, s=1, sample_size=4, seed=5)
    assert est.per_sample == [expected]
    assert est.mean == expected and est.std == 0.0


def test_estimate_n1_any_seed(d0):
    for seed in range(25):
        assert estimate_unicity(d0, None, 1, "random", s=2, sample_size=4, seed=seed).mean == 0.25


def test_estimate_mean_std_and_determinism(small_synth):
    a = estimate_unicity(small_synth, None, 2, "random", s=5, sample_size=100, seed=3)
    b = estimate_unicity(small_synth, None, 2, "random", s=5, sample_size=100, seed=3)
    assert a.per_sample == b.per_sample
    assert a.mean == pytest.approx(np.mean(a.per_sample))
    assert a.std == pytest.approx(np.std(a.per_sample))
    assert all(0 <= v <= 1 for v in a.per_sample)
    c = estimate_unicity(small_synth, None, 2, "random", s=5, sample_size=100, seed=4)
    assert c.per_sample != a.per_sample


def test_curve_matches_single_n(small_synth):
    curve = unicity_curve(small_synth, None, range(1, 8), "random", s=3, sample_size=150, seed=9)
    single = estimate_unicity(small_synth, None, 4, "random", s=3, sample_size=150, seed=9)
    assert curve[3].per_sample == single.per_sample


def test_workers_do_not_change_output(small_synth):
    one = unicity_curve(small_synth, None, [1, 3], "random", s=4, sample_size=100, seed=2)
    many = unicity_curve(small_synth, None, [1, 3], "random", s=4, sample_size=100, seed=2,
                         workers=3)
    assert [e.per_sample for e in one] == [e.per_sample for e in many]


def test_sample_size_capped(d0):
    est = estimate_unicity(d0, None, 1, "popularity", s=1, sample_size=10_000)
    assert est.sample_size == 4


def test_empty_population_errors():
    t = from_sets([{1: {A}}, {}])
    from unicity.tensor import Window
    with pytest.raises(EmptyDatasetError):
        estimate_unicity(t, Window.single(1), 1, "random")


def test_uniqueness_against_full_population(small_synth):
    # restricting the sampled users must not restrict who they are matched against
    users = small_synth.user_ids[:50]
    counts, _, sel = sample_match_counts(small_synth, None, 3, "popularity", s=1, sample_size=50,
                                         users=users, return_selection=True)
    dense = dense_matrix(small_synth)
    for k, (user, items) in enumerate(sel[0]):
        assert user in set(users.tolist())
        for n in range(1, 4):
            assert counts[0, k, n - 1] == brute_count(dense, small_synth, items[:n])


def _oracle_check(tensor, strategy, seed):
    dense = dense_matrix(tensor)
    pop = brute_popularity(tensor)
    counts, _, sel = sample_match_counts(tensor, None, 6, strategy, s=2, sample_size=60,
                                         seed=seed, return_selection=True)
    for s_i, sample in enumerate(sel):
        users = [u for u, _ in sample]
        assert len(set(users)) == len(users)
        for k, (user, items) in enumerate(sample):
            fp = set(window_fingerprint(tensor, user).items.tolist())
            assert set(items.tolist()) == fp
            if strategy == "popularity":
                expected = sorted(fp, key=lambda i: (pop[i], i))
                assert items.tolist() == expected
            for n in range(1, 7):
                assert counts[s_i, k, n - 1] == brute_count(dense, tensor, items[:n])


@pytest.mark.parametrize("strategy", ["random", "popularity"])
def test_oracle_equivalence_small(small_synth, strategy):
    _oracle_check(small_synth, strategy, seed=21)


fingerprints = st.dictionaries(st.integers(0, 60), st.sets(st.integers(0, 25), min_size=1,
                                                          max_size=8), min_size=1, max_size=40)


@settings(max_examples=80, deadline=None)
@given(fingerprints, st.lists(st.sets(st.integers(0, 27), min_size=1, max_size=5), min_size=1,
                              max_size=20))
def test_match_count_oracle(fps, queries):
    t = from_sets([fps])
    index = t.match_index()
    for q in queries:
        brute = sum(1 for s in fps.values() if set(q) <= s)
        assert match_count(index, sorted(q)) == brute


@settings(max_examples=60, deadline=None)
@given(fingerprints, st.integers(0, 2**32 - 1))
def test_popularity_monotone_in_n(fps, seed):
    t = from_sets([fps])
    ests = unicity_curve(t, None, range(1, 10), "popularity", s=2,
                         sample_size=len(fps), seed=seed)
    per = np.array([e.per_sample for e in ests])
    assert (np.diff(per, axis=0) >= 0).all()
    pop = t.popularity()
    for u in list(fps)[:5]:
        fp = window_fingerprint(t, u)
        prev = set()
        for n in range(1, 10):
            cur = set(select_quasi_identifier(fp, n, "popularity", pop).items.tolist())
            assert prev <= cur
            prev = cur


@settings(max_examples=60, deadline=None)
@given(fingerprints, st.sets(st.integers(0, 25), min_size=1, max_size=4),
       st.sets(st.integers(0, 25), max_size=3))
def test_superset_shrinkage(fps, q1, extra):
    index = from_sets([fps]).match_index()
    q2 = q1 | extra
    assert match_count(index, sorted(q2)) <= match_count(index, sorted(q1))
