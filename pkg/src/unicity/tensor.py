"""Sparse binary user x item x period fingerprint tensor.

Each period is stored as a CSR matrix (users x items) with sorted,
duplicate-free column indices. Users and items carry opaque 64-bit ids
that are mapped to dense positions by sorting, so dense position order
equals id order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

DEFAULT_MIN_ITEMS = 3


class DatasetError(ValueError):
    """Input data cannot produce a usable dataset."""


class EmptyDatasetError(DatasetError):
    pass


class UserNotInWindowError(KeyError):
    pass


@dataclass(frozen=True)
class Window:
    """Inclusive range of period indices ``first..last``."""

    first: int
    last: int

    def __post_init__(self):
        if self.first < 0 or self.last < self.first:
            raise ValueError(f"invalid window {self.first}..{self.last}")

    @classmethod
    def single(cls, t: int) -> "Window":
        return cls(t, t)

    @classmethod
    def parse(cls, text: str, n_periods: int) -> "Window":
        """Parse ``"all"``, ``"3"`` or ``"0-11"``."""
        text = text.strip()
        if text == "all":
            return cls(0, n_periods - 1)
        if "-" in text:
            a, b = text.split("-", 1)
            return cls(int(a), int(b))
        return cls.single(int(text))

    @property
    def periods(self) -> range:
        return range(self.first, self.last + 1)

    def __str__(self):
        return f"{self.first}-{self.last}"


@dataclass(frozen=True)
class Fingerprint:
    owner: int
    window: Window
    items: np.ndarray

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class PopularityTable:
    """Distinct-user counts per item over a window.

    ``dense`` holds a count for every catalog position (zeros included);
    ``item_ids``/``counts`` list only items with at least one user.
    """

    window: Window
    item_ids: np.ndarray
    counts: np.ndarray
    dense: np.ndarray = field(repr=False)

    def __getitem__(self, item_id) -> int:
        pos = np.searchsorted(self.item_ids, item_id)
        if pos < len(self.item_ids) and self.item_ids[pos] == item_id:
            return int(self.counts[pos])
        raise KeyError(item_id)

    def __len__(self):
        return len(self.item_ids)

    def as_dict(self) -> dict:
        return {int(i): int(c) for i, c in zip(self.item_ids, self.counts)}


@dataclass
class BuildReport:
    events_in: int = 0
    rejected: int = 0
    excluded: int = 0
    duplicates: int = 0
    dropped_user_periods: int = 0

    def as_dict(self):
        return dict(self.__dict__)


def _binary_csr(rows, cols, shape) -> sp.csr_matrix:
    data = np.ones(len(rows), dtype=np.int8)
    m = sp.csr_matrix((data, (rows, cols)), shape=shape)
    m.sum_duplicates()
    m.data[:] = 1
    m.sort_indices()
    return m


class FingerprintTensor:
    """Immutable binary user x item x period presence structure."""

    def __init__(self, user_ids, item_ids, periods, min_items_per_period=DEFAULT_MIN_ITEMS):
        self.user_ids = np.asarray(user_ids, dtype=np.uint64)
        self.item_ids = np.asarray(item_ids, dtype=np.uint64)
        self.periods: list[sp.csr_matrix] = list(periods)
        self.min_items_per_period = int(min_items_per_period)
        shape = (len(self.user_ids), len(self.item_ids))
        for m in self.periods:
            if m.shape != shape:
                raise ValueError(f"period matrix shape {m.shape} != {shape}")
        self._windows: dict[Window, sp.csr_matrix] = {}
        self._popularity: dict[Window, PopularityTable] = {}
        self._indexes: dict = {}

    def __repr__(self):
        return (f"FingerprintTensor(users={self.n_users}, items={self.n_items}, "
                f"periods={self.n_periods}, nnz={self.nnz})")

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def nnz(self) -> int:
        return sum(m.nnz for m in self.periods)

    @property
    def full_window(self) -> Window:
        return Window(0, self.n_periods - 1)

    def check_window(self, window: Optional[Window]) -> Window:
        if window is None:
            return self.full_window
        if window.last >= self.n_periods:
            raise ValueError(f"window {window} outside 0-{self.n_periods - 1}")
        return window

    def user_index(self, user_id) -> int:
        pos = int(np.searchsorted(self.user_ids, np.uint64(user_id)))
        if pos == self.n_users or self.user_ids[pos] != np.uint64(user_id):
            raise KeyError(user_id)
        return pos

    def item_index(self, item_ids) -> np.ndarray:
        """Dense positions of ``item_ids``; -1 for ids not in the catalog."""
        ids = np.atleast_1d(np.asarray(item_ids, dtype=np.uint64))
        pos = np.searchsorted(self.item_ids, ids)
        pos = np.minimum(pos, max(self.n_items - 1, 0))
        ok = self.item_ids[pos] == ids if self.n_items else np.zeros(len(ids), bool)
        return np.where(ok, pos, -1)

    def window_matrix(self, window: Optional[Window] = None) -> sp.csr_matrix:
        """Union (elementwise max) of the period matrices in ``window``."""
        window = self.check_window(window)
        if window not in self._windows:
            mats = [self.periods[t] for t in window.periods]
            if len(mats) == 1:
                m = mats[0]
            else:
                acc = mats[0].astype(np.int32)
                for other in mats[1:]:
                    acc = acc + other
                m = sp.csr_matrix(acc, dtype=np.int8)
                m.data[:] = 1
                m.sort_indices()
            self._windows[window] = m
        return self._windows[window]

    def present_users(self, window: Optional[Window] = None) -> np.ndarray:
        """Dense positions of users with at least one item in ``window``."""
        m = self.window_matrix(window)
        return np.flatnonzero(np.diff(m.indptr))

    def events(self):
        """All presence triples as ``(user_ids, item_ids, period_indices)``."""
        us, its, ts = [], [], []
        for t, m in enumerate(self.periods):
            rows = np.repeat(np.arange(self.n_users), np.diff(m.indptr))
            us.append(self.user_ids[rows])
            its.append(self.item_ids[m.indices])
            ts.append(np.full(m.nnz, t, dtype=np.int64))
        if not us:
            return (np.empty(0, np.uint64),) * 2 + (np.empty(0, np.int64),)
        return np.concatenate(us), np.concatenate(its), np.concatenate(ts)

    def subsample(self, user_positions) -> "FingerprintTensor":
        """Tensor restricted to the given user positions; catalog kept."""
        rows = np.unique(np.asarray(user_positions, dtype=np.int64))
        return FingerprintTensor(
            self.user_ids[rows], self.item_ids,
            [m[rows] for m in self.periods], self.min_items_per_period)

    def popularity(self, window: Optional[Window] = None) -> PopularityTable:
        window = self.check_window(window)
        if window not in self._popularity:
            m = self.window_matrix(window)
            dense = np.bincount(m.indices, minlength=self.n_items).astype(np.int64)
            nz = np.flatnonzero(dense)
            self._popularity[window] = PopularityTable(
                window, self.item_ids[nz], dense[nz], dense)
        return self._popularity[window]

    def match_index(self, window: Optional[Window] = None):
        from .engine import MatchIndex

        window = self.check_window(window)
        if window not in self._indexes:
            self._indexes[window] = MatchIndex.build(self, window)
        return self._indexes[window]


def build_tensor(users, items, periods, exclusions: Iterable = (),
                 min_items_per_period: int = DEFAULT_MIN_ITEMS,
                 n_periods: Optional[int] = None,
                 report: Optional[BuildReport] = None) -> FingerprintTensor:
    """Build a tensor from parallel arrays of event fields.

    Events with a negative period or one outside ``n_periods`` are rejected
    and counted in ``report``. Excluded items are dropped before the
    per-period threshold is applied. Users below the threshold are removed
    from that period only.
    """
    users = np.asarray(users, dtype=np.uint64)
    items = np.asarray(items, dtype=np.uint64)
    periods = np.asarray(periods, dtype=np.int64)
    if not (len(users) == len(items) == len(periods)):
        raise ValueError("event arrays differ in length")
    report = report if report is not None else BuildReport()
    report.events_in += len(users)

    ok = periods >= 0
    if n_periods is not None:
        ok &= periods < n_periods
    report.rejected += int((~ok).sum())
    users, items, periods = users[ok], items[ok], periods[ok]

    excl = np.asarray(sorted(int(e) for e in exclusions), dtype=np.uint64)
    if len(excl):
        drop = np.isin(items, excl)
        report.excluded += int(drop.sum())
        users, items, periods = users[~drop], items[~drop], periods[~drop]

    if n_periods is None:
        n_periods = int(periods.max()) + 1 if len(periods) else 0
    if len(users) == 0 or n_periods == 0:
        raise EmptyDatasetError("no events left after filtering")

    user_ids, u_pos = np.unique(users, return_inverse=True)
    item_ids, i_pos = np.unique(items, return_inverse=True)
    shape = (len(user_ids), len(item_ids))

    mats = []
    for t in range(n_periods):
        sel = periods == t
        m = _binary_csr(u_pos[sel], i_pos[sel], shape)
        report.duplicates += int(sel.sum()) - m.nnz
        sizes = np.diff(m.indptr)
        low = (sizes > 0) & (sizes < min_items_per_period)
        if low.any():
            report.dropped_user_periods += int(low.sum())
            keep = sp.diags((~low).astype(np.int8))
            m = sp.csr_matrix(keep @ m, dtype=np.int8)
            m.eliminate_zeros()
            m.sort_indices()
        mats.append(m)

    alive_users = np.zeros(shape[0], dtype=bool)
    alive_items = np.zeros(shape[1], dtype=bool)
    for m in mats:
        alive_users[np.diff(m.indptr) > 0] = True
        alive_items[m.indices] = True
    if not alive_users.any():
        raise EmptyDatasetError("every user fell below min_items_per_period")
    if not alive_users.all() or not alive_items.all():
        ru, ri = np.flatnonzero(alive_users), np.flatnonzero(alive_items)
        mats = [sp.csr_matrix(m[ru][:, ri], dtype=np.int8) for m in mats]
        for m in mats:
            m.sort_indices()
        user_ids, item_ids = user_ids[ru], item_ids[ri]
    return FingerprintTensor(user_ids, item_ids, mats, min_items_per_period)


def from_sets(period_sets, min_items_per_period: int = 1) -> FingerprintTensor:
    """Convenience constructor from ``[{user: items, ...}, ...]`` per period."""
    us, its, ts = [], [], []
    for t, mapping in enumerate(period_sets):
        for u, s in mapping.items():
            for i in s:
                us.append(u)
                its.append(i)
                ts.append(t)
    return build_tensor(us, its, ts, min_items_per_period=min_items_per_period,
                        n_periods=len(period_sets))


def window_fingerprint(tensor: FingerprintTensor, user, window: Optional[Window] = None) -> Fingerprint:
    window = tensor.check_window(window)
    try:
        row = tensor.user_index(user)
    except KeyError:
        raise UserNotInWindowError(user) from None
    m = tensor.window_matrix(window)
    cols = m.indices[m.indptr[row]:m.indptr[row + 1]]
    if len(cols) == 0:
        raise UserNotInWindowError(user)
    return Fingerprint(int(user), window, tensor.item_ids[cols])


def popularity(tensor: FingerprintTensor, window: Optional[Window] = None) -> PopularityTable:
    return tensor.popularity(window)
