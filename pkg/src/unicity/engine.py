"""Quasi-identifier selection and uniqueness estimation.

A user is unique for a quasi-identifier ``q`` when nobody else in the
window population holds every item of ``q``. Match sets are computed by
intersecting item posting lists, smallest first.
"""

from __future__ import annotations

import enum
import multiprocessing
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .tensor import (EmptyDatasetError, Fingerprint, FingerprintTensor,
                     PopularityTable, Window)

SeedLike = Union[int, np.random.SeedSequence]

DEFAULT_SAMPLES = 20
DEFAULT_SAMPLE_SIZE = 10_000
DEFAULT_SEED = 0xC0FFEE


class Strategy(str, enum.Enum):
    RANDOM = "random"
    POPULARITY = "popularity"


@dataclass(frozen=True)
class QuasiIdentifier:
    items: np.ndarray
    source_user: int

    def __len__(self):
        return len(self.items)


@dataclass
class UnicityEstimate:
    n_apps: int
    strategy: Strategy
    window: Window
    population_size: int
    sample_size: int
    s: int
    per_sample: list = field(default_factory=list)
    seed: Optional[int] = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_sample))

    @property
    def std(self) -> float:
        return float(np.std(self.per_sample))

    def as_record(self) -> dict:
        return {
            "window": str(self.window),
            "n_apps": self.n_apps,
            "strategy": self.strategy.value,
            "seed": self.seed,
            "s": self.s,
            "sample_size": self.sample_size,
            "population": self.population_size,
            "mean": self.mean,
            "std": self.std,
            "per_sample": [float(v) for v in self.per_sample],
        }


def _seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def child_seed(seed: SeedLike, *key: int) -> np.random.SeedSequence:
    """Independent stream for ``key`` under ``seed``; stable across runs."""
    ss = _seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(key))


def _rng(seed: SeedLike, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(child_seed(seed, *key)))


class MatchIndex:
    """Inverted index item -> sorted user positions for one window.

    Items held by at least ``U * dense_fraction`` users also get a packed
    membership bitmap. Intersections among such items are word-wise ANDs
    plus popcounts; filtering a candidate list against one is a bit gather
    instead of a binary search.
    """

    def __init__(self, window, user_ids, item_ids, indptr, indices, population,
                 dense_fraction=1 / 256, max_dense=1024):
        self.window = window
        self.user_ids = user_ids
        self.item_ids = item_ids
        self.indptr = indptr
        self.indices = indices
        self.population = population
        self.lengths = np.diff(indptr)
        n_users = len(user_ids)
        heavy = np.flatnonzero(self.lengths >= max(n_users * dense_fraction, 64))
        heavy = heavy[np.argsort(-self.lengths[heavy], kind="stable")][:max_dense]
        n_words = (n_users + 63) // 64
        self._bits = {}
        for i in heavy:
            mask = np.zeros(n_words * 64, dtype=bool)
            mask[self._posting(i)] = True
            self._bits[int(i)] = np.packbits(mask, bitorder="little").view(np.uint64)

    @classmethod
    def build(cls, tensor: FingerprintTensor, window: Optional[Window] = None, **kw):
        window = tensor.check_window(window)
        csc = tensor.window_matrix(window).tocsc()
        csc.sort_indices()
        indptr = csc.indptr.astype(np.int64)
        indices = csc.indices.astype(np.int32 if tensor.n_users < 2**31 else np.int64)
        return cls(window, tensor.user_ids, tensor.item_ids, indptr, indices,
                   tensor.present_users(window), **kw)

    def _posting(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def _positions(self, item_ids) -> np.ndarray:
        ids = np.atleast_1d(np.asarray(item_ids, dtype=np.uint64))
        if len(self.item_ids) == 0:
            return np.full(len(ids), -1)
        pos = np.minimum(np.searchsorted(self.item_ids, ids), len(self.item_ids) - 1)
        return np.where(self.item_ids[pos] == ids, pos, -1)

    def postings(self, item_id) -> np.ndarray:
        """User ids holding ``item_id`` (ascending)."""
        pos = self._positions(item_id)[0]
        if pos < 0:
            return np.empty(0, dtype=np.uint64)
        return self.user_ids[self._posting(pos)]

    @staticmethod
    def _test(bits: np.ndarray, cand: np.ndarray) -> np.ndarray:
        return ((bits.view(np.uint8)[cand >> 3] >> (cand & 7)) & 1).astype(bool)

    def _filter(self, cand: np.ndarray, i: int) -> np.ndarray:
        bits = self._bits.get(i)
        if bits is not None:
            return cand[self._test(bits, cand)]
        other = self._posting(i)
        if len(cand) <= len(other):
            hit = np.searchsorted(other, cand)
            hit[hit == len(other)] = 0
            return cand[other[hit] == cand] if len(other) else cand[:0]
        hit = np.searchsorted(cand, other)
        hit[hit == len(cand)] = 0
        return other[cand[hit] == other] if len(cand) else other[:0]

    def matches_positions(self, items: np.ndarray) -> np.ndarray:
        """User positions whose fingerprint contains every item position."""
        items = np.asarray(items)
        if len(items) == 0:
            raise ValueError("empty quasi-identifier")
        if (items < 0).any():
            return self.indices[:0]
        items = items[np.argsort(self.lengths[items], kind="stable")]
        cand = self._posting(items[0])
        for i in items[1:]:
            if len(cand) == 0:
                break
            cand = self._filter(cand, int(i))
        return cand

    def matches(self, item_ids) -> np.ndarray:
        return self.user_ids[self.matches_positions(self._positions(item_ids))]

    def count(self, item_ids) -> int:
        return len(self.matches_positions(self._positions(item_ids)))

    def prefix_counts(self, items: np.ndarray, n_max: int) -> np.ndarray:
        """Match counts for the prefixes ``items[:1] .. items[:n_max]``.

        Prefixes longer than ``items`` repeat the full-set count. Counting
        stops early at 1: the owner always matches, so longer prefixes
        cannot drop below it.
        """
        out = np.empty(n_max, dtype=np.int64)
        k = min(len(items), n_max)
        first = int(items[0])
        out[0] = self.lengths[first]
        bits = self._bits.get(first)
        cand = None if bits is not None else self._posting(first)
        j = 1
        while j < k and out[j - 1] > 1:
            i = int(items[j])
            dense = self._bits.get(i)
            if cand is None and dense is not None:
                bits = bits & dense
                out[j] = int(np.bitwise_count(bits).sum())
            elif cand is None:
                post = self._posting(i)
                cand = post[self._test(bits, post)]
                out[j] = len(cand)
            else:
                cand = self._filter(cand, i)
                out[j] = len(cand)
            j += 1
        out[j:] = out[j - 1]
        return out


def match_count(index: MatchIndex, q) -> int:
    items = q.items if isinstance(q, QuasiIdentifier) else q
    if len(np.atleast_1d(items)) == 0:
        raise ValueError("empty quasi-identifier")
    return index.count(items)


def is_unique(index: MatchIndex, q: QuasiIdentifier) -> bool:
    return match_count(index, q) == 1


def _popularity_rank(item_ids: np.ndarray, pop: PopularityTable) -> np.ndarray:
    """Sort key per catalog position: ascending count, then ascending id.

    Items missing from ``pop`` get key -1 so callers can detect them.
    """
    pos = np.searchsorted(pop.item_ids, item_ids)
    pos = np.minimum(pos, max(len(pop.item_ids) - 1, 0))
    known = pop.item_ids[pos] == item_ids if len(pop.item_ids) else np.zeros(len(item_ids), bool)
    counts = np.where(known, pop.counts[pos] if len(pop.counts) else 0, 0)
    order = np.lexsort((np.arange(len(item_ids)), counts))
    rank = np.empty(len(item_ids), dtype=np.int64)
    rank[order] = np.arange(len(item_ids))
    rank[~known] = -1
    return rank


def select_quasi_identifier(fp: Fingerprint, n: int, strategy: Strategy,
                            pop: PopularityTable, seed: SeedLike = DEFAULT_SEED) -> QuasiIdentifier:
    """Pick ``min(n, |fp|)`` items of ``fp`` as the attacker's knowledge.

    Popularity takes the least popular items, ties broken by ascending id.
    Random draws uniformly without replacement from ``seed``.
    """
    if len(fp.items) == 0:
        raise ValueError("empty fingerprint")
    if n < 1:
        raise ValueError("n must be >= 1")
    items = np.sort(np.asarray(fp.items, dtype=np.uint64))
    k = min(n, len(items))
    strategy = Strategy(strategy)
    if strategy is Strategy.POPULARITY:
        rank = _popularity_rank(items, pop)
        if (rank < 0).any():
            raise KeyError("popularity table does not cover the fingerprint")
        chosen = items[np.argsort(rank, kind="stable")[:k]]
    else:
        rng = _rng(seed)
        chosen = items[np.argsort(rng.random(len(items)), kind="stable")[:k]]
    return QuasiIdentifier(np.sort(chosen), fp.owner)


def _ordered_items(matrix, rows, key_of_item=None, rng=None):
    """Concatenate each row's items, ordered within the row by key.

    Returns ``(items, offsets)``; row ``r`` owns ``items[offsets[r]:offsets[r+1]]``.
    """
    starts = matrix.indptr[rows]
    lens = matrix.indptr[rows + 1] - starts
    offsets = np.concatenate(([0], np.cumsum(lens)))
    owner = np.repeat(np.arange(len(rows)), lens)
    flat = matrix.indices[np.arange(offsets[-1]) - np.repeat(offsets[:-1] - starts, lens)]
    key = key_of_item[flat] if rng is None else rng.random(len(flat))
    order = np.lexsort((key, owner))
    return flat[order], offsets


@dataclass
class _Job:
    index: MatchIndex
    matrix: object
    candidates: np.ndarray
    strategy: Strategy
    n_max: int
    sample_size: int
    rank: Optional[np.ndarray]
    seed: SeedLike


def _run_sample(job: _Job, i: int):
    """Sampled rows, their ordered items, and match counts for sample ``i``."""
    rng = _rng(job.seed, i)
    rows = rng.choice(job.candidates, size=job.sample_size, replace=False)
    if job.strategy is Strategy.POPULARITY:
        items, offsets = _ordered_items(job.matrix, rows, key_of_item=job.rank)
    else:
        items, offsets = _ordered_items(job.matrix, rows, rng=rng)
    counts = np.empty((len(rows), job.n_max), dtype=np.int64)
    prefix = job.index.prefix_counts
    ends = np.minimum(offsets[1:], offsets[:-1] + job.n_max)
    for r in range(len(rows)):
        counts[r] = prefix(items[offsets[r]:ends[r]], job.n_max)
    return rows, items, offsets, counts


_WORKER_JOB: Optional[_Job] = None


def _worker_init(job):
    global _WORKER_JOB
    _WORKER_JOB = job


def _worker_run(i):
    return _run_sample(_WORKER_JOB, i)


def sample_match_counts(tensor: FingerprintTensor, window: Optional[Window], n_max: int,
                        strategy: Strategy, s: int = DEFAULT_SAMPLES,
                        sample_size: int = DEFAULT_SAMPLE_SIZE, seed: SeedLike = DEFAULT_SEED,
                        users=None, popularity: Optional[PopularityTable] = None,
                        workers: int = 1, return_selection: bool = False):
    """Per-sample, per-user match counts for prefixes 1..n_max.

    Returns ``(counts, population)`` with ``counts`` of shape
    ``(s, sample_size, n_max)``. ``users`` restricts who may be drawn
    (user ids); matching always runs against the whole window population.
    With ``return_selection`` a third element lists, per sample, the drawn
    user ids and each one's ordered items (the size-n quasi-identifier is
    the first n of them).
    """
    window = tensor.check_window(window)
    strategy = Strategy(strategy)
    index = tensor.match_index(window)
    population = index.population
    if len(population) == 0:
        raise EmptyDatasetError(f"no users in window {window}")
    candidates = population
    if users is not None:
        pos = np.array([tensor.user_index(u) for u in users], dtype=np.int64)
        candidates = np.intersect1d(pos, population)
        if len(candidates) == 0:
            raise EmptyDatasetError("none of the requested users are in the window")
    rank = None
    if strategy is Strategy.POPULARITY:
        rank = _popularity_rank(tensor.item_ids, popularity or tensor.popularity(window))
        m = tensor.window_matrix(window)
        if (rank[m.indices] < 0).any():
            raise KeyError("popularity table does not cover the window's items")
    job = _Job(index, tensor.window_matrix(window), candidates, strategy, int(n_max),
               min(int(sample_size), len(candidates)), rank, seed)
    if workers > 1 and s > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(min(workers, s), initializer=_worker_init, initargs=(job,)) as pool:
            results = pool.map(_worker_run, range(s))
    else:
        results = [_run_sample(job, i) for i in range(s)]
    counts = np.stack([r[3] for r in results])
    if not return_selection:
        return counts, len(population)
    selection = []
    for rows, items, offsets, _ in results:
        ids = tensor.item_ids[items]
        selection.append([(int(tensor.user_ids[u]), ids[offsets[k]:offsets[k + 1]])
                          for k, u in enumerate(rows)])
    return counts, len(population), selection


def unicity_curve(tensor: FingerprintTensor, window: Optional[Window], ns: Sequence[int],
                  strategy: Strategy, s: int = DEFAULT_SAMPLES,
                  sample_size: int = DEFAULT_SAMPLE_SIZE, seed: SeedLike = DEFAULT_SEED,
                  users=None, popularity: Optional[PopularityTable] = None,
                  workers: int = 1) -> list[UnicityEstimate]:
    """Unicity estimates for several quasi-identifier sizes at once.

    Each user's item ordering is drawn once per sample and the size-n
    quasi-identifier is its first n items, so ``unicity_curve(ns=[4])``
    and the n=4 entry of ``unicity_curve(ns=range(1, 11))`` agree exactly.
    """
    ns = [int(n) for n in ns]
    if not ns or min(ns) < 1:
        raise ValueError("n values must be >= 1")
    window = tensor.check_window(window)
    counts, pop_size = sample_match_counts(tensor, window, max(ns), strategy, s, sample_size,
                                           seed, users, popularity, workers)
    fractions = (counts == 1).mean(axis=1)
    seed_val = int(seed) if not isinstance(seed, np.random.SeedSequence) else None
    return [UnicityEstimate(n, Strategy(strategy), window, pop_size, counts.shape[1], s,
                            [float(v) for v in fractions[:, n - 1]], seed_val) for n in ns]


def estimate_unicity(tensor: FingerprintTensor, window: Optional[Window], n: int,
                     strategy: Strategy, s: int = DEFAULT_SAMPLES,
                     sample_size: int = DEFAULT_SAMPLE_SIZE, seed: SeedLike = DEFAULT_SEED,
                     **kw) -> UnicityEstimate:
    """Fraction of sampled users re-identified by ``n`` of their items.

    Draws ``s`` samples of ``sample_size`` users without replacement; each
    user's quasi-identifier is tested against the full window population.
    """
    return unicity_curve(tensor, window, [n], strategy, s, sample_size, seed, **kw)[0]
