"""Synthetic fingerprint datasets with a Zipf-shaped item popularity.

Generative model (an artifact choice, not derived from real data):

* item ``r`` (0-based) has weight ``(r + 1) ** -alpha``; item id equals rank;
* each user holds ``k = min_items + Poisson(mean_items - min_items)`` items,
  drawn from the weights without replacement;
* in every later period a ``Binomial(k, churn)`` subset of the user's items is
  replaced by fresh draws that exclude everything the user currently holds.

Users are processed in fixed blocks, each with its own random stream
derived from ``(seed, block)``, so any sharding over blocks gives the same
output.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .engine import DEFAULT_SEED, _rng
from .tensor import DEFAULT_MIN_ITEMS, DatasetError, FingerprintTensor, _binary_csr

BLOCK = 4096


class ConfigError(ValueError):
    pass


@dataclass
class GeneratorConfig:
    users: int = 10_000
    items: int = 50_000
    periods: int = 1
    alpha: float = 1.5
    mean_items: float = 23.0
    union_target: float = 76.0
    churn: Optional[float] = None
    min_items_per_period: int = DEFAULT_MIN_ITEMS
    seed: int = DEFAULT_SEED

    def validate(self):
        if self.users < 1 or self.items < 1 or self.periods < 1:
            raise ConfigError("users, items and periods must be >= 1")
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        if self.mean_items < self.min_items_per_period:
            raise ConfigError("mean_items must be >= min_items_per_period")
        if self.mean_items > self.items:
            raise ConfigError(f"mean_items={self.mean_items} exceeds catalog size {self.items}")
        if self.churn is not None and not 0 <= self.churn <= 1:
            raise ConfigError("churn must lie in [0, 1]")

    @property
    def churn_rate(self) -> float:
        """Configured churn, or one derived from the union target.

        Each period adds about ``churn * mean_items`` new items, so the
        union over T periods is roughly ``m + (T - 1) * churn * m``.
        """
        if self.churn is not None:
            return float(self.churn)
        if self.periods < 2:
            return 0.0
        p = (self.union_target - self.mean_items) / ((self.periods - 1) * self.mean_items)
        return float(min(max(p, 0.0), 1.0))

    def as_dict(self):
        d = asdict(self)
        d["churn_rate"] = self.churn_rate
        return d


def zipf_weights(n_items: int, alpha: float) -> np.ndarray:
    return np.arange(1, n_items + 1, dtype=np.float64) ** -alpha


def _draw_distinct(rng, cdf, need, held):
    """Weighted draws without replacement by rejecting repeats.

    ``need[u]`` items for each local user ``u``; ``held`` is a sorted array
    of ``u * A + item`` keys that may not be drawn. Returns ``(users,
    items)`` in draw order.
    """
    n_items = len(cdf)
    need = need.astype(np.int64).copy()
    taken = held
    got_u, got_i = [], []
    while need.any():
        users = np.flatnonzero(need)
        u = np.repeat(users, 2 * need[users] + 4)
        items = np.searchsorted(cdf, rng.random(len(u)) * cdf[-1], side="right")
        items = np.minimum(items, n_items - 1)
        keys = u * n_items + items
        pos = np.minimum(np.searchsorted(taken, keys), max(len(taken) - 1, 0))
        fresh = taken[pos] != keys if len(taken) else np.ones(len(keys), bool)
        first = np.zeros(len(keys), dtype=bool)
        first[np.unique(keys, return_index=True)[1]] = True
        ok = fresh & first
        cu, ci = u[ok], items[ok]
        group_start = np.searchsorted(cu, cu, side="left")
        keep = (np.arange(len(cu)) - group_start) < need[cu]
        cu, ci = cu[keep], ci[keep]
        got_u.append(cu)
        got_i.append(ci)
        need -= np.bincount(cu, minlength=len(need))
        taken = np.union1d(taken, cu * n_items + ci)
    if not got_u:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(got_u), np.concatenate(got_i)


def _generate_block(cfg: GeneratorConfig, block: int, cdfs):
    first = block * BLOCK
    n = min(BLOCK, cfg.users - first)
    rng = _rng(cfg.seed, block)
    A = cfg.items
    extra = cfg.mean_items - cfg.min_items_per_period
    sizes = cfg.min_items_per_period + rng.poisson(extra, n)
    sizes = np.minimum(sizes, A)

    u, i = _draw_distinct(rng, cdfs[0], sizes, np.empty(0, np.int64))
    keys = np.sort(u * A + i)
    out = [keys]
    p = cfg.churn_rate
    for t in range(1, cfg.periods):
        owner = keys // A
        drop_n = rng.binomial(sizes, p)
        # pick drop_n[u] of each user's items uniformly via random keys
        order = np.lexsort((rng.random(len(keys)), owner))
        rank = np.arange(len(keys)) - np.searchsorted(owner[order], owner[order], side="left")
        dropped = np.zeros(len(keys), dtype=bool)
        dropped[order[rank < drop_n[owner[order]]]] = True
        nu, ni = _draw_distinct(rng, cdfs[t], drop_n, keys)
        keys = np.sort(np.concatenate([keys[~dropped], nu * A + ni]))
        out.append(keys)
    return [(first + k // A, k % A) for k in out]


def generate(cfg: GeneratorConfig,
             period_weights: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
             ) -> FingerprintTensor:
    """Generate a tensor with ``cfg.users`` users over a catalog of ``cfg.items``.

    ``period_weights(t, w)`` may return modified item weights for period
    ``t`` (seasonality hook); the default keeps the Zipf weights.
    """
    cfg.validate()
    base = zipf_weights(cfg.items, cfg.alpha)
    cdfs = []
    for t in range(cfg.periods):
        w = base if period_weights is None else np.asarray(period_weights(t, base.copy()), float)
        cdfs.append(np.cumsum(w))
    rows = [[] for _ in range(cfg.periods)]
    cols = [[] for _ in range(cfg.periods)]
    for block in range(math.ceil(cfg.users / BLOCK)):
        for t, (r, c) in enumerate(_generate_block(cfg, block, cdfs)):
            rows[t].append(r)
            cols[t].append(c)
    shape = (cfg.users, cfg.items)
    mats = [_binary_csr(np.concatenate(rows[t]), np.concatenate(cols[t]), shape)
            for t in range(cfg.periods)]
    return FingerprintTensor(np.arange(cfg.users), np.arange(cfg.items), mats,
                             cfg.min_items_per_period)


def plant_unique_users(tensor: FingerprintTensor, k: int, rarity: int = 1,
                       seed=DEFAULT_SEED) -> tuple[FingerprintTensor, list[int]]:
    """Give ``k`` random users a catalog item nobody else uses.

    Users are grouped ``rarity`` at a time around each fresh item, so the
    planted item's popularity equals ``rarity``; with ``rarity=1`` each
    planted user is unique under the popularity strategy for any n >= 1.
    The item is added in every period the user is present.
    """
    if k == 0:
        return tensor, []
    if rarity < 1 or k % rarity:
        raise ValueError("k must be a positive multiple of rarity")
    present = np.flatnonzero(np.diff(tensor.window_matrix().indptr))
    if k > len(present):
        raise DatasetError(f"cannot plant {k} users in a population of {len(present)}")
    used = np.zeros(tensor.n_items, dtype=bool)
    for m in tensor.periods:
        used[m.indices] = True
    fresh = np.flatnonzero(~used)
    n_fresh = k // rarity
    if len(fresh) < n_fresh:
        raise DatasetError(f"need {n_fresh} unused catalog items, only {len(fresh)} available")
    rng = _rng(seed, 0x9A)
    chosen = np.sort(rng.choice(present, size=k, replace=False))
    item_of = fresh[:n_fresh][np.arange(k) // rarity]
    mats = []
    for m in tensor.periods:
        live = np.diff(m.indptr)[chosen] > 0
        extra = sp.csr_matrix((np.ones(live.sum(), np.int8), (chosen[live], item_of[live])),
                              shape=(tensor.n_users, tensor.n_items))
        out = sp.csr_matrix(m + extra, dtype=np.int8)
        out.data[:] = 1
        out.sort_indices()
        mats.append(out)
    planted = tensor.user_ids[chosen]
    return (FingerprintTensor(tensor.user_ids, tensor.item_ids, mats, tensor.min_items_per_period),
            [int(u) for u in planted])
