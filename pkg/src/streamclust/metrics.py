"""Cluster quality metrics and the assignment/report containers.

Conventions shared by every metric here:

* noise points (label ``NOISE``/-1) are excluded before anything is
  computed, so adding noise to an input changes no metric value;
* a metric that is undefined for the given structure (too few clusters)
  returns ``None`` — never NaN;
* degenerate geometry that the caller should know about (coincident
  centroids, zero vectors where a direction is needed) raises instead of
  returning a junk number.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np
from sklearn.metrics import adjusted_rand_score

from .base import atomic_write_text
from .core import NOISE, cosine_distance
from .exceptions import DegenerateMetricError, InvalidParameterError
from .validation import as_matrix, as_vector

__all__ = [
    "Assignment",
    "MetricsReport",
    "ClusterMetric",
    "pairwise_distances",
    "silhouette",
    "davies_bouldin",
    "distinctness",
    "contingency",
    "variance",
    "adjusted_rand_index",
    "fingerprint",
    "write_fingerprint_file",
]


@dataclass(frozen=True)
class Assignment:
    """Point ids with their cluster labels, plus where they came from.

    ``labels`` uses ``NOISE`` (-1) for unclustered points; all other labels
    are nonnegative ints.
    """

    ids: tuple
    labels: np.ndarray
    algorithm: str = ""
    phase: str = ""

    def __post_init__(self):
        ids = tuple(self.ids)
        for i in ids:
            if not isinstance(i, str) or not i:
                raise ValueError(f"assignment ids must be nonempty strings, got {i!r}")
        if len(set(ids)) != len(ids):
            raise ValueError("assignment ids must be unique")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.ndim != 1:
                raise ValueError("labels must be a 1-D integer array")
        labels = labels.astype(np.int64, copy=True)
        if len(ids) != labels.shape[0]:
            raise ValueError(
                f"{len(ids)} ids but {labels.shape[0]} labels"
            )
        if labels.size and labels.min() < NOISE:
            raise ValueError(f"labels below {NOISE} are not allowed")
        labels.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.ids)

    def as_dict(self):
        return {i: int(lab) for i, lab in zip(self.ids, self.labels)}

    def compact(self):
        """Same assignment with non-noise labels remapped to 0..K-1, first-seen order."""
        mapping = {}
        out = np.empty_like(self.labels)
        for k, lab in enumerate(self.labels):
            lab = int(lab)
            if lab == NOISE:
                out[k] = NOISE
                continue
            if lab not in mapping:
                mapping[lab] = len(mapping)
            out[k] = mapping[lab]
        return Assignment(self.ids, out, self.algorithm, self.phase)


_METRIC_RANGES = {
    "silhouette": (-1.0, 1.0),
    "dbi": (0.0, math.inf),
    "distinctness": (0.0, 2.0),
    "contingency": (0.0, 2.0),
    "variance": (0.0, math.inf),
}


@dataclass(frozen=True)
class MetricsReport:
    """One evaluated run: the five quality metrics plus counts and timings.

    ``None`` marks a metric that was undefined for the run (e.g. fewer than
    two clusters).  NaN is rejected outright.
    """

    silhouette: float | None
    dbi: float | None
    distinctness: float | None
    contingency: float | None
    variance: float | None
    n_clusters: int
    n_noise: int
    train_seconds: float
    predict_seconds: float

    def __post_init__(self):
        for name, (lo, hi) in _METRIC_RANGES.items():
            v = getattr(self, name)
            if v is None:
                continue
            v = float(v)
            if math.isnan(v):
                raise ValueError(f"{name} must not be NaN; use None for undefined")
            if not (lo - 1e-12 <= v <= hi + 1e-12):
                raise ValueError(f"{name}={v!r} outside [{lo}, {hi}]")
            object.__setattr__(self, name, v)
        for name in ("n_clusters", "n_noise"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"{name} must be a nonnegative int, got {v!r}")
            object.__setattr__(self, name, int(v))
        for name in ("train_seconds", "predict_seconds"):
            v = float(getattr(self, name))
            if math.isnan(v) or v < 0:
                raise ValueError(f"{name} must be >= 0, got {v!r}")
            object.__setattr__(self, name, v)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


class ClusterMetric(NamedTuple):
    """A metric with its per-cluster breakdown."""

    overall: float
    per_cluster: dict


def pairwise_distances(A, B, metric="euclidean"):
    """Dense (len(A), len(B)) distance matrix.

    ``euclidean`` uses the squared-norm expansion; ``cosine`` is
    ``1 - cosine similarity`` and raises for zero rows (no direction).
    """
    A = as_matrix(A, name="A")
    B = as_matrix(B, name="B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(
            f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}"
        )
    if metric == "euclidean":
        sq_a = np.einsum("ij,ij->i", A, A)
        sq_b = np.einsum("ij,ij->i", B, B)
        d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (A @ B.T)
        return np.sqrt(np.maximum(d2, 0.0))
    if metric == "cosine":
        na = np.linalg.norm(A, axis=1)
        nb = np.linalg.norm(B, axis=1)
        for name, norms in (("A", na), ("B", nb)):
            bad = np.nonzero(norms == 0.0)[0]
            if bad.size:
                raise ValueError(
                    f"cosine distance undefined: {name} row {int(bad[0])} is a zero vector"
                )
        sims = (A / na[:, None]) @ (B / nb[:, None]).T
        return np.clip(1.0 - sims, 0.0, 2.0)
    raise InvalidParameterError(f"unknown metric {metric!r}")


def _points_labels(points, labels):
    X = as_matrix(points, name="points")
    if isinstance(labels, Assignment):
        labels = labels.labels
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError(
            f"labels must be 1-D with length {X.shape[0]}, got shape {y.shape}"
        )
    if not np.issubdtype(y.dtype, np.integer):
        raise ValueError("labels must be integers")
    return X, y.astype(np.int64)


def _clustered(points, labels):
    """Drop noise; return (X, y, unique labels in first-seen order)."""
    X, y = _points_labels(points, labels)
    mask = y != NOISE
    X, y = X[mask], y[mask]
    seen = {}
    for lab in y:
        lab = int(lab)
        if lab not in seen:
            seen[lab] = len(seen)
    return X, y, list(seen)


def silhouette(points, labels, metric="euclidean"):
    """Mean silhouette over non-noise points; ``None`` below two clusters.

    Per point: ``a`` is its mean distance to its own cluster's other
    members, ``b`` the smallest mean distance to any other cluster, and the
    score is ``(b - a) / max(a, b)``.  Singleton-cluster points score 0.
    """
    X, y, uniq = _clustered(points, labels)
    if len(uniq) < 2:
        return None
    n = X.shape[0]
    order = np.array(sorted(uniq))
    col = np.searchsorted(order, y)
    k = order.size
    D = pairwise_distances(X, X, metric)
    # Self-distances are identically zero; the expansion leaves ~sqrt(eps)
    # residue on the diagonal, which would otherwise leak into ``a``.
    np.fill_diagonal(D, 0.0)
    sums = np.zeros((n, k))
    for j in range(k):
        sums[:, j] = D[:, col == j].sum(axis=1)
    counts = np.bincount(col, minlength=k).astype(np.float64)
    own = sums[np.arange(n), col]
    own_count = counts[col]
    multi = own_count > 1
    a = np.zeros(n)
    a[multi] = own[multi] / (own_count[multi] - 1.0)
    means_other = sums / counts[None, :]
    means_other[np.arange(n), col] = np.inf
    b = means_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.zeros(n)
    ok = multi & (denom > 0.0)
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return float(s.mean())


def davies_bouldin(points, labels, metric="euclidean"):
    """Davies-Bouldin index over non-noise clusters; ``None`` below two.

    Per cluster: scatter ``S`` is the mean member-to-centroid distance;
    separation ``M`` the centroid-to-centroid distance.  Coincident
    centroids make the ratio undefined and raise
    :class:`DegenerateMetricError` naming the offending pair.
    """
    X, y, uniq = _clustered(points, labels)
    if len(uniq) < 2:
        return None
    uniq = sorted(uniq)
    k = len(uniq)
    centroids = np.stack([X[y == lab].mean(axis=0) for lab in uniq])
    scatter = np.empty(k)
    for j, lab in enumerate(uniq):
        members = X[y == lab]
        scatter[j] = pairwise_distances(members, centroids[j : j + 1], metric).mean()
    sep = pairwise_distances(centroids, centroids, metric)
    ii, jj = np.triu_indices(k, k=1)
    coincident = np.nonzero(sep[ii, jj] == 0.0)[0]
    if coincident.size:
        a, b = uniq[int(ii[coincident[0]])], uniq[int(jj[coincident[0]])]
        raise DegenerateMetricError(
            f"clusters {a} and {b} have coincident centroids; "
            "their separation ratio is undefined"
        )
    ratios = (scatter[:, None] + scatter[None, :]) / np.where(sep > 0.0, sep, np.inf)
    np.fill_diagonal(ratios, -np.inf)
    return float(ratios.max(axis=1).mean())


def _centroids_first_seen(X, y, uniq):
    cents = np.stack([X[y == lab].mean(axis=0) for lab in uniq])
    zero = np.nonzero(np.linalg.norm(cents, axis=1) == 0.0)[0]
    if zero.size:
        raise ValueError(
            f"cluster {uniq[int(zero[0])]} has a zero centroid; "
            "cosine-based metrics are undefined for it"
        )
    return cents


def distinctness(points, labels, combine="mean"):
    """How far each cluster's centroid sits from the other centroids.

    Per cluster: the average and the minimum cosine distance from its
    centroid to every other centroid, combined per ``combine``:
    ``"mean"`` averages the two (the default), ``"avg"`` keeps the average
    only, ``"min"`` the minimum only.  Overall value is the unweighted mean
    over clusters.  ``None`` below two clusters.
    """
    if combine not in ("mean", "avg", "min"):
        raise InvalidParameterError(
            f"combine must be 'mean', 'avg' or 'min', got {combine!r}"
        )
    X, y, uniq = _clustered(points, labels)
    if len(uniq) < 2:
        return None
    cents = _centroids_first_seen(X, y, uniq)
    dist = pairwise_distances(cents, cents, "cosine")
    np.fill_diagonal(dist, np.nan)
    per = {}
    for j, lab in enumerate(uniq):
        others = dist[j][~np.isnan(dist[j])]
        avg = float(others.mean())
        low = float(others.min())
        if combine == "mean":
            per[lab] = 0.5 * (avg + low)
        elif combine == "avg":
            per[lab] = avg
        else:
            per[lab] = low
    overall = float(np.mean(list(per.values())))
    return ClusterMetric(overall, per)


def contingency(points, labels, rank="similarity"):
    """Cosine distance from each centroid to the cluster's top-ranked member.

    ``rank="similarity"`` takes the member most cosine-similar to the
    centroid (ties: lowest point index); ``rank="first"`` takes the
    first-ingested member.  A low value means the cluster's summary is
    anchored by a real member.  ``None`` when there are no clusters.
    """
    if rank not in ("similarity", "first"):
        raise InvalidParameterError(
            f"rank must be 'similarity' or 'first', got {rank!r}"
        )
    X, y, uniq = _clustered(points, labels)
    if not uniq:
        return None
    cents = _centroids_first_seen(X, y, uniq)
    per = {}
    for j, lab in enumerate(uniq):
        members = X[y == lab]
        if rank == "similarity":
            norms = np.linalg.norm(members, axis=1)
            bad = np.nonzero(norms == 0.0)[0]
            if bad.size:
                raise ValueError(
                    f"cluster {lab} member {int(bad[0])} is a zero vector; "
                    "cosine ranking is undefined"
                )
            sims = (members @ cents[j]) / (norms * np.linalg.norm(cents[j]))
            top = int(np.argmax(sims))
        else:
            top = 0
        per[lab] = cosine_distance(cents[j], members[top])
    overall = float(np.mean(list(per.values())))
    return ClusterMetric(overall, per)


def variance(points, labels):
    """Mean squared member-to-centroid distance per cluster (euclidean).

    Overall value is the unweighted mean over clusters; ``None`` when there
    are no clusters.
    """
    X, y, uniq = _clustered(points, labels)
    if not uniq:
        return None
    per = {}
    for lab in uniq:
        members = X[y == lab]
        c = members.mean(axis=0)
        diff = members - c
        per[lab] = float(np.einsum("ij,ij->i", diff, diff).mean())
    overall = float(np.mean(list(per.values())))
    return ClusterMetric(overall, per)


def adjusted_rand_index(labels_a, labels_b):
    """Adjusted Rand index between two labelings of the same points.

    Noise (-1) is treated as a cluster label of its own on both sides.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValueError(
            f"labelings must be 1-D and equal length, got {a.shape} vs {b.shape}"
        )
    if a.size == 0:
        raise ValueError("labelings must be nonempty")
    return float(adjusted_rand_score(a, b))


def fingerprint(centroid, keywords):
    """Cosine similarity of ``centroid`` to each named keyword vector.

    ``keywords`` maps names to vectors (any insertion-ordered mapping or an
    iterable of ``(name, vector)`` pairs); the result preserves that order.
    Zero vectors raise — they have no direction to compare against.
    """
    c = as_vector(centroid, name="centroid")
    nc = float(np.linalg.norm(c))
    if nc == 0.0:
        raise ValueError("fingerprint is undefined for a zero centroid")
    items = keywords.items() if hasattr(keywords, "items") else keywords
    out = {}
    for name, vec in items:
        if not isinstance(name, str) or not name:
            raise ValueError(f"keyword names must be nonempty strings, got {name!r}")
        if name in out:
            raise ValueError(f"duplicate keyword {name!r}")
        v = as_vector(vec, dim=c.shape[0], name=f"keyword {name!r}")
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            raise ValueError(f"keyword {name!r} is a zero vector")
        sim = float(c @ v) / (nc * nv)
        out[name] = min(1.0, max(-1.0, sim))
    return out


def write_fingerprint_file(path, per_cluster):
    """Write per-cluster fingerprints as JSON lines, ascending cluster id.

    Each line: ``{"cluster": <id>, "fingerprint": [[keyword, similarity], ...]}``
    with the keyword order preserved from the fingerprint mapping.
    """
    lines = []
    for cid in sorted(per_cluster):
        fp = per_cluster[cid]
        lines.append(
            json.dumps(
                {"cluster": int(cid), "fingerprint": [[k, v] for k, v in fp.items()]}
            )
        )
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
