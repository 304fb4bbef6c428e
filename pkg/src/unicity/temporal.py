"""Per-period views of a tensor: seasonal unicity, drift and usage summaries."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .engine import (DEFAULT_SAMPLE_SIZE, DEFAULT_SAMPLES, DEFAULT_SEED, SeedLike, Strategy,
                     UnicityEstimate, child_seed, unicity_curve)
from .tensor import FingerprintTensor, Window

UNCATEGORIZED = "__uncategorized__"


def rescale(u, n_items) -> np.ndarray:
    """Divide unicity by the item-set size relative to the first period."""
    u = np.asarray(u, dtype=float)
    n_items = np.asarray(n_items, dtype=float)
    return u / (n_items / n_items[0])


def items_per_period(tensor: FingerprintTensor) -> np.ndarray:
    """Number of distinct items with at least one user, per period."""
    return np.array([len(np.unique(m.indices)) for m in tensor.periods], dtype=np.int64)


@dataclass
class SeasonalCurve:
    strategy: Strategy
    n_apps: int
    estimates: list[UnicityEstimate]
    n_items: np.ndarray

    @property
    def raw(self) -> np.ndarray:
        return np.array([e.mean for e in self.estimates])

    @property
    def std(self) -> np.ndarray:
        return np.array([e.std for e in self.estimates])

    @property
    def rescaled(self) -> np.ndarray:
        return rescale(self.raw, self.n_items)

    def rows(self):
        for t, (e, a, r) in enumerate(zip(self.estimates, self.n_items, self.rescaled)):
            yield {"period": t, "n_apps": self.n_apps, "strategy": self.strategy.value,
                   "u": e.mean, "u_std": e.std, "n_items": int(a), "u_rescaled": float(r)}


def seasonal_curves(tensor: FingerprintTensor, ns: Sequence[int], strategy: Strategy,
                    s: int = DEFAULT_SAMPLES, sample_size: int = DEFAULT_SAMPLE_SIZE,
                    seed: SeedLike = DEFAULT_SEED, workers: int = 1) -> list[SeasonalCurve]:
    """Unicity of single-period fingerprints for every period and each n.

    Period ``t`` uses the random stream ``child_seed(seed, t)``.
    """
    if tensor.n_periods < 2:
        raise ValueError("seasonal analysis needs at least two periods")
    strategy = Strategy(strategy)
    per_period = [unicity_curve(tensor, Window.single(t), ns, strategy, s, sample_size,
                                child_seed(seed, t), workers=workers)
                  for t in range(tensor.n_periods)]
    n_items = items_per_period(tensor)
    return [SeasonalCurve(strategy, n, [row[k] for row in per_period], n_items)
            for k, n in enumerate(ns)]


def seasonal_unicity(tensor, n, strategy, s=DEFAULT_SAMPLES, sample_size=DEFAULT_SAMPLE_SIZE,
                     seed=DEFAULT_SEED, workers=1) -> SeasonalCurve:
    return seasonal_curves(tensor, [n], strategy, s, sample_size, seed, workers)[0]


class DriftMode(str, enum.Enum):
    CONSECUTIVE = "consecutive"
    BASELINE = "baseline"


def jaccard_distance(a, b) -> float:
    a, b = set(a), set(b)
    union = len(a | b)
    if union == 0:
        return 0.0
    return 1.0 - len(a & b) / union


@dataclass
class DriftSeries:
    """Per-period summaries of user Jaccard distances.

    Consecutive mode labels the comparison of ``t-1`` and ``t`` as period
    ``t``; baseline mode compares period 0 with ``t``.
    """

    mode: DriftMode
    summaries: list[dict]
    raw: Optional[dict] = field(default=None, repr=False)


def _summary(period, d):
    if len(d) == 0:
        return {"period": period, "users": 0, "empty": True, "mean": None,
                "median": None, "q25": None, "q75": None}
    q25, med, q75 = np.percentile(d, [25, 50, 75])
    return {"period": period, "users": int(len(d)), "empty": False, "mean": float(d.mean()),
            "median": float(med), "q25": float(q25), "q75": float(q75)}


def pair_distances(tensor: FingerprintTensor, p: int, q: int) -> np.ndarray:
    """Jaccard distances for users present in both periods ``p`` and ``q``."""
    mp, mq = tensor.periods[p], tensor.periods[q]
    sp_, sq = np.diff(mp.indptr), np.diff(mq.indptr)
    both = (sp_ > 0) & (sq > 0)
    inter = np.asarray(mp.multiply(mq).sum(axis=1)).ravel()
    inter, sp_, sq = inter[both], sp_[both], sq[both]
    return 1.0 - inter / (sp_ + sq - inter)


def jaccard_drift(tensor: FingerprintTensor, mode: DriftMode = DriftMode.CONSECUTIVE,
                  keep_raw: bool = False) -> DriftSeries:
    if tensor.n_periods < 2:
        raise ValueError("drift needs at least two periods")
    mode = DriftMode(mode)
    summaries, raw = [], {}
    for t in range(1, tensor.n_periods):
        ref = t - 1 if mode is DriftMode.CONSECUTIVE else 0
        d = pair_distances(tensor, ref, t)
        summaries.append(_summary(t, d))
        if keep_raw:
            raw[t] = d
    return DriftSeries(mode, summaries, raw if keep_raw else None)


def usage_stats(tensor: FingerprintTensor) -> list[dict]:
    """Mean and median items per present user, per period."""
    rows = []
    for t, m in enumerate(tensor.periods):
        sizes = np.diff(m.indptr)
        sizes = sizes[sizes > 0]
        rows.append({"period": t, "users": int(len(sizes)),
                     "mean": float(sizes.mean()) if len(sizes) else None,
                     "median": float(np.median(sizes)) if len(sizes) else None})
    return rows


def log_bin_edges(max_count: int, bins_per_decade: int = 10) -> np.ndarray:
    """Integer edges starting at 1 and ending at ``max_count + 1``."""
    top = np.log10(max_count + 1)
    raw = np.logspace(0, top, max(int(np.ceil(top * bins_per_decade)), 1) + 1)
    edges = np.unique(np.floor(raw).astype(np.int64))
    edges[-1] = max_count + 1
    return np.unique(np.concatenate(([1], edges)))


def popularity_histogram(tensor: FingerprintTensor, window: Optional[Window] = None,
                         bins_per_decade: int = 10, tail_min_count: int = 10,
                         tail_max_share: float = 0.05) -> dict:
    """Log-binned distribution of per-item user counts.

    Bin ``k`` covers counts in ``[edges[k], edges[k+1])``. ``tail_exponent``
    is the slope of log(count) against log(rank) over items whose count is
    at least ``tail_min_count`` and at most ``tail_max_share`` of the
    population, where neither small-count noise nor saturation dominates.
    For Zipf-weighted draws it estimates the weight exponent.
    """
    pop = tensor.popularity(window)
    counts = pop.counts
    edges = log_bin_edges(int(counts.max()), bins_per_decade)
    hist, _ = np.histogram(counts, bins=edges)
    widths = np.diff(edges)
    density = hist / widths / len(counts)

    ranked = np.sort(counts)[::-1]
    ranks = np.arange(1, len(ranked) + 1)
    n_pop = len(tensor.present_users(window))
    sel = (ranked >= tail_min_count) & (ranked <= tail_max_share * n_pop)
    tail = None
    if sel.sum() >= 3:
        slope = np.polyfit(np.log(ranks[sel]), np.log(ranked[sel]), 1)[0]
        tail = float(-slope)
    return {
        "scheme": f"log10, {bins_per_decade} bins/decade, integer edges, [lo, hi)",
        "edges": edges.tolist(),
        "counts": hist.tolist(),
        "density": density.tolist(),
        "items": int(len(counts)),
        "max_count": int(counts.max()),
        "tail_exponent": tail,
        "tail_points": int(sel.sum()),
    }


def category_fractions(tensor: FingerprintTensor, categories: Mapping, weighting: str = "items"
                       ) -> list[dict]:
    """Share of each category label among the items used in each period.

    ``weighting="items"`` counts distinct used items; ``"pairs"`` counts
    user-item pairs. Items without a label fall under ``UNCATEGORIZED``.
    """
    if weighting not in ("items", "pairs"):
        raise ValueError(f"unknown weighting {weighting!r}")
    labels = sorted({str(v) for v in categories.values()} | {UNCATEGORIZED})
    code = {lab: k for k, lab in enumerate(labels)}
    item_label = np.full(tensor.n_items, code[UNCATEGORIZED], dtype=np.int64)
    for item, lab in categories.items():
        pos = tensor.item_index([item])[0]
        if pos >= 0:
            item_label[pos] = code[str(lab)]
    out = []
    for t, m in enumerate(tensor.periods):
        if weighting == "items":
            used = np.unique(m.indices)
            tally = np.bincount(item_label[used], minlength=len(labels)).astype(float)
        else:
            tally = np.bincount(item_label[m.indices], minlength=len(labels)).astype(float)
        total = tally.sum()
        fr = tally / total if total else tally
        out.append({"period": t, **{lab: float(fr[code[lab]]) for lab in labels}})
    return out
