"""Data processing stage: reduce a KPM stream to a fixed-size feature vector."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

FEATURES_PER_SLICE = ("dl_thr_mbps", "dl_buffer_bytes", "dl_tx_tbs")


class InsufficientHistory(ValueError):
    pass


def _get(rec, name):
    return rec[name] if isinstance(rec, dict) else getattr(rec, name)


def slice_windows(records: Iterable, slice_ids: Optional[Sequence[int]] = None) -> tuple[list[int], "OrderedDict"]:
    """Group records by window end time and sum the per-slice metrics.

    Returns the slice ids and ``{ts_ms: {slice_id: [thr, buf, tbs]}}`` in
    arrival order.
    """
    windows: OrderedDict[int, dict[int, list]] = OrderedDict()
    seen = set()
    for rec in records:
        sid = int(_get(rec, "slice_id"))
        if sid < 0:
            continue
        seen.add(sid)
        slot = windows.setdefault(int(_get(rec, "ts_ms")), {}).setdefault(sid, [0.0, 0, 0])
        slot[0] += float(_get(rec, "dl_thr_mbps"))
        slot[1] += int(_get(rec, "dl_buffer_bytes"))
        slot[2] += int(_get(rec, "dl_tx_tbs"))
    ids = sorted(slice_ids) if slice_ids is not None else sorted(seen)
    return ids, windows


def window_features(records: Iterable, n_windows: int = 4, slice_ids: Optional[Sequence[int]] = None) -> np.ndarray:
    """Per-slice means over the last ``n_windows`` windows.

    Layout is ``[thr_0, buf_0, tbs_0, thr_1, buf_1, tbs_1, ...]`` ordered by
    slice id; throughput in Mbps, buffer in bytes, TBs per window.
    """
    ids, windows = slice_windows(records, slice_ids)
    out = np.zeros(3 * len(ids))
    for k, sid in enumerate(ids):
        hist = [w[sid] for w in windows.values() if sid in w]
        if len(hist) < n_windows:
            raise InsufficientHistory(f"slice {sid}: {len(hist)} windows < {n_windows}")
        last = hist[-n_windows:]
        for j in range(3):
            out[3 * k + j] = sum(h[j] for h in last) / n_windows
    return out


class WindowFeatureReducer(BaseEstimator, TransformerMixin):
    """Stateless reducer with a fixed output size of ``3 * n_slices``.

    ``fit`` only pins the slice ordering (from ``slice_ids`` or the first
    stream seen) so the vector layout stays constant for a run.
    """

    def __init__(self, n_windows: int = 4, slice_ids: Optional[Sequence[int]] = None):
        self.n_windows = n_windows
        self.slice_ids = slice_ids

    def fit(self, records=None, y=None):
        if self.n_windows < 1:
            raise ValueError("n_windows must be >= 1")
        if self.slice_ids is not None:
            self.slice_ids_ = sorted(self.slice_ids)
        else:
            self.slice_ids_, _ = slice_windows(records or [])
        self.n_features_out_ = 3 * len(self.slice_ids_)
        return self

    def transform(self, records) -> np.ndarray:
        check_is_fitted(self, "slice_ids_")
        return window_features(records, self.n_windows, self.slice_ids_)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "slice_ids_")
        return np.array([f"s{sid}_{name}" for sid in self.slice_ids_ for name in FEATURES_PER_SLICE])
