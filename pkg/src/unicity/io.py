"""Event files, exclusion lists and the binary dataset cache.

Event file: ``user_id,item_id,period_index`` per line, unsigned integers,
optional header (detected by a non-numeric first field).

Dataset cache layout::

    b"UNICITY\\0"      8-byte magic
    version            1 byte (currently 1)
    npz archive        user_ids, item_ids, min_items, indptr_<t>, indices_<t>
"""

from __future__ import annotations

import hashlib
import io
import os
import zipfile
from typing import Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .tensor import BuildReport, DatasetError, FingerprintTensor, build_tensor

MAGIC = b"UNICITY\0"
VERSION = 1


def _has_header(path) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    field = first.split(",", 1)[0].strip()
    return bool(field) and not field.isdigit()


def read_events(path, report: Optional[BuildReport] = None):
    """Parse an event file into ``(users, items, periods)`` arrays.

    Lines that do not hold three unsigned integers are counted as
    rejected in ``report`` and skipped.
    """
    try:
        df = pd.read_csv(path, header=None, names=["user", "item", "period"], dtype=str,
                         skiprows=1 if _has_header(path) else 0, skip_blank_lines=True,
                         on_bad_lines="skip", engine="c")
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    except pd.errors.EmptyDataError:
        df = pd.DataFrame(columns=["user", "item", "period"], dtype=str)
    cols = {}
    ok = np.ones(len(df), dtype=bool)
    for c in ("user", "item", "period"):
        s = df[c].str.strip()
        ok &= s.str.fullmatch(r"\d+", na=False).to_numpy(bool)
        cols[c] = s
    if report is not None:
        report.rejected += int((~ok).sum())
    good = df.index[ok]
    users = cols["user"][good].astype(np.uint64).to_numpy()
    items = cols["item"][good].astype(np.uint64).to_numpy()
    periods = cols["period"][good].astype(np.int64).to_numpy()
    return users, items, periods


def read_id_list(path) -> list[int]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and line.isdigit():
                out.append(int(line))
    return out


def read_categories(path) -> dict:
    """``item_id,label`` per line; header allowed."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(",", 1)
            if len(parts) == 2 and parts[0].strip().isdigit():
                out[int(parts[0])] = parts[1].strip()
    return out


def ingest(path, exclusions_path=None, min_items_per_period=3, n_periods=None):
    report = BuildReport()
    users, items, periods = read_events(path, report)
    exclusions = read_id_list(exclusions_path) if exclusions_path else ()
    tensor = build_tensor(users, items, periods, exclusions, min_items_per_period,
                          n_periods=n_periods, report=report)
    return tensor, report


def write_events(tensor: FingerprintTensor, path, header: bool = True):
    users, items, periods = tensor.events()
    order = np.lexsort((items, users, periods))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write("user_id,item_id,period_index\n")
        buf = io.StringIO()
        np.savetxt(buf, np.column_stack([users[order], items[order], periods[order]
                                         .astype(np.uint64)]), fmt="%d", delimiter=",")
        fh.write(buf.getvalue())


def save_dataset(tensor: FingerprintTensor, path):
    arrays = {"user_ids": tensor.user_ids, "item_ids": tensor.item_ids,
              "min_items": np.array([tensor.min_items_per_period])}
    for t, m in enumerate(tensor.periods):
        arrays[f"indptr_{t}"] = m.indptr.astype(np.int64)
        arrays[f"indices_{t}"] = m.indices.astype(np.int32)
    buf = io.BytesIO()
    # fixed zip timestamps keep the file byte-identical across runs
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asarray(arr), allow_pickle=False)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_dataset(path) -> FingerprintTensor:
    try:
        with open(path, "rb") as fh:
            head = fh.read(len(MAGIC) + 1)
            payload = fh.read()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if head[:len(MAGIC)] != MAGIC:
        raise DatasetError(f"{path} is not a dataset file")
    if head[len(MAGIC)] != VERSION:
        raise DatasetError(f"{path}: unsupported dataset version {head[len(MAGIC)]}")
    with np.load(io.BytesIO(payload)) as z:
        user_ids, item_ids = z["user_ids"], z["item_ids"]
        n_periods = sum(1 for k in z.files if k.startswith("indptr_"))
        shape = (len(user_ids), len(item_ids))
        mats = [sp.csr_matrix((np.ones(len(z[f"indices_{t}"]), np.int8), z[f"indices_{t}"],
                               z[f"indptr_{t}"]), shape=shape) for t in range(n_periods)]
        min_items = int(z["min_items"][0])
    return FingerprintTensor(user_ids, item_ids, mats, min_items)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
