"""Batch DBSCAN baseline.

A deliberately index-free implementation: all neighbourhoods come from
chunked dense distance computations, which keeps the code short, exactly
reproducible, and fast enough through the BLAS for the corpus sizes the
replay harness feeds it.  Three passes:

1. chunked neighbour counts -> core mask;
2. breadth-first expansion over core points only (chained dense scans);
3. border points attach to the cluster of their lowest-index core
   neighbour, everything else is noise.

Cluster ids are assigned 0..K-1 in order of each cluster's lowest core
index, which together with pass 3 makes the labelling a pure function of
the input order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .core import NOISE
from .exceptions import InvalidParameterError
from .metrics import Assignment
from .validation import as_matrix, check_positive, check_positive_int

__all__ = ["DbscanParams", "dbscan", "batch_daily_baseline", "BatchDBSCAN"]

_CHUNK = 2048


@dataclass(frozen=True)
class DbscanParams:
    """Validated DBSCAN parameterization."""

    eps: float
    min_samples: int = 5
    metric: str = "euclidean"

    def __post_init__(self):
        object.__setattr__(self, "eps", check_positive(self.eps, "eps"))
        object.__setattr__(
            self, "min_samples", check_positive_int(self.min_samples, "min_samples")
        )
        if self.metric not in ("euclidean", "cosine"):
            raise InvalidParameterError(
                f"metric must be 'euclidean' or 'cosine', got {self.metric!r}"
            )


def _prepare(X, params):
    """Precompute whatever the chunked neighbour test needs."""
    if params.metric == "euclidean":
        sq = np.einsum("ij,ij->i", X, X)
        return ("euclidean", X, sq, params.eps * params.eps)
    norms = np.linalg.norm(X, axis=1)
    bad = np.nonzero(norms == 0.0)[0]
    if bad.size:
        raise ValueError(
            f"cosine distance undefined: row {int(bad[0])} is a zero vector"
        )
    return ("cosine", X / norms[:, None], None, 1.0 - params.eps)


def _neighbour_mask(prep, rows, cols=None):
    """Boolean (len(rows), len(cols)) neighbour matrix for row/col indices."""
    kind = prep[0]
    if kind == "euclidean":
        _, X, sq, eps2 = prep
        A = X[rows]
        B = X if cols is None else X[cols]
        sb = sq if cols is None else sq[cols]
        d2 = sq[rows][:, None] + sb[None, :] - 2.0 * (A @ B.T)
        return d2 <= eps2
    _, Xn, _, min_sim = prep
    A = Xn[rows]
    B = Xn if cols is None else Xn[cols]
    return (A @ B.T) >= min_sim


def dbscan(points, params):
    """Cluster labels for ``points``; noise is ``NOISE`` (-1).

    Core points have at least ``min_samples`` neighbours within ``eps``
    (themselves included).  Clusters are the connected components of core
    points under the neighbour relation; a non-core point with a core
    neighbour joins the cluster of its lowest-index core neighbour.
    """
    X = as_matrix(points, name="points")
    if not isinstance(params, DbscanParams):
        raise TypeError(f"params must be DbscanParams, got {type(params).__name__}")
    n = X.shape[0]
    prep = _prepare(X, params)

    counts = np.empty(n, dtype=np.int64)
    for start in range(0, n, _CHUNK):
        rows = np.arange(start, min(start + _CHUNK, n))
        counts[rows] = _neighbour_mask(prep, rows).sum(axis=1)
    core = counts >= params.min_samples

    labels = np.full(n, NOISE, dtype=np.int64)
    unassigned = core.copy()
    next_label = 0
    for seed in np.nonzero(core)[0]:
        if not unassigned[seed]:
            continue
        labels[seed] = next_label
        unassigned[seed] = False
        frontier = np.array([seed])
        while frontier.size:
            remaining = np.nonzero(unassigned)[0]
            if remaining.size == 0:
                break
            hit = np.zeros(remaining.size, dtype=bool)
            for start in range(0, frontier.size, _CHUNK):
                rows = frontier[start : start + _CHUNK]
                hit |= _neighbour_mask(prep, rows, remaining).any(axis=0)
            frontier = remaining[hit]
            labels[frontier] = next_label
            unassigned[frontier] = False
        next_label += 1

    border = np.nonzero(~core)[0]
    core_idx = np.nonzero(core)[0]
    if border.size and core_idx.size:
        for start in range(0, border.size, _CHUNK):
            rows = border[start : start + _CHUNK]
            mask = _neighbour_mask(prep, rows, core_idx)
            has = mask.any(axis=1)
            # lowest-index core neighbour: core_idx ascends, argmax finds first True
            first = mask.argmax(axis=1)
            labels[rows[has]] = labels[core_idx[first[has]]]
    return labels


def batch_daily_baseline(points, params, window=None):
    """Run DBSCAN over a finished window of stream points.

    ``points`` is a sequence of :class:`~streamclust.core.StreamPoint`;
    ``window=(start, end)`` optionally asserts that every timestamp lies in
    ``[start, end)``.  Returns an :class:`~streamclust.metrics.Assignment`
    tagged as the batch algorithm's output.
    """
    pts = list(points)
    if window is not None:
        lo, hi = float(window[0]), float(window[1])
        for p in pts:
            if not (lo <= p.t < hi):
                raise ValueError(
                    f"point {p.id!r} at t={p.t!r} lies outside the window "
                    f"[{lo!r}, {hi!r})"
                )
    if not pts:
        return Assignment((), np.empty(0, dtype=np.int64), "batch", "target")
    dim = pts[0].dim
    for p in pts:
        if p.dim != dim:
            raise ValueError(
                f"point {p.id!r} has dimension {p.dim}, expected {dim}"
            )
    X = np.stack([p.x for p in pts])
    labels = dbscan(X, params)
    return Assignment(tuple(p.id for p in pts), labels, "batch", "target")


class BatchDBSCAN(ClusterMixin, BaseEstimator):
    """Estimator wrapper over :func:`dbscan` (``fit`` sets ``labels_``)."""

    def __init__(self, eps, min_samples=5, metric="euclidean"):
        self.eps = eps
        self.min_samples = min_samples
        self.metric = metric

    def fit(self, X, y=None):
        params = DbscanParams(
            eps=self.eps, min_samples=self.min_samples, metric=self.metric
        )
        self.labels_ = dbscan(X, params)
        return self
