"""Stream replay harness: synthetic streams, prequential evaluation, comparison.

The replay protocol is prequential ("test, then train"): points inside the
pretrain window only update the model; points inside the target window are
first predicted, and the prediction recorded, before the model may learn
from them.  The batch baseline ignores the pretrain window entirely and
clusters the finished target window in one shot.

All wall-clock figures come from ``time.perf_counter`` around the actual
model calls, split into cumulative train and predict time.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import chain

import numpy as np
from scipy.optimize import linear_sum_assignment

from .batch import DbscanParams, dbscan
from .core import NOISE, TIME_JITTER, StreamPoint
from .dbstream import DBStream
from .denstream import DenStream
from .exceptions import InvalidParameterError, OutOfOrderError
from .metrics import (
    Assignment,
    MetricsReport,
    contingency,
    davies_bouldin,
    distinctness,
    silhouette,
    variance,
)
from .validation import (
    check_nonnegative,
    check_positive,
    check_positive_int,
    check_unit_interval,
)

__all__ = [
    "ReplayConfig",
    "SyntheticStreamSpec",
    "generate_stream",
    "make_model",
    "replay",
    "compare",
    "match_labels",
    "COMPARE_COLUMNS",
]

#: Column order of the comparison table, exactly as emitted.
COMPARE_COLUMNS = (
    "algorithm",
    "silhouette",
    "dbi",
    "distinctness",
    "contingency",
    "variance",
    "train_s",
    "predict_s",
    "clusters",
)

_ALGORITHMS = ("denstream", "dbstream", "batch")


@dataclass(frozen=True)
class ReplayConfig:
    """How to replay a stream: algorithm, windows, and metric options."""

    algorithm: str
    pretrain_window: float
    target_window: float
    params: dict = field(default_factory=dict)
    metric: str = "euclidean"
    distinctness_combine: str = "mean"
    contingency_rank: str = "similarity"
    seed: int | None = None

    def __post_init__(self):
        if self.algorithm not in _ALGORITHMS:
            raise InvalidParameterError(
                f"algorithm must be one of {_ALGORITHMS}, got {self.algorithm!r}"
            )
        object.__setattr__(
            self, "pretrain_window",
            check_nonnegative(self.pretrain_window, "pretrain_window"),
        )
        object.__setattr__(
            self, "target_window",
            check_positive(self.target_window, "target_window"),
        )
        object.__setattr__(self, "params", dict(self.params))
        if self.metric not in ("euclidean", "cosine"):
            raise InvalidParameterError(
                f"metric must be 'euclidean' or 'cosine', got {self.metric!r}"
            )


def make_model(config):
    """Construct (and thereby validate) the model for an online config."""
    if config.algorithm == "denstream":
        return DenStream(**config.params)
    if config.algorithm == "dbstream":
        return DBStream(**config.params)
    raise InvalidParameterError(
        f"{config.algorithm!r} is not an online algorithm"
    )


@dataclass(frozen=True)
class SyntheticStreamSpec:
    """Gaussian-mixture stream with drift, births, deaths, and noise.

    Components are isotropic Gaussians of scale ``component_std`` whose
    means random-walk with per-point steps of scale ``drift_std``.  New
    components are born at ``birth_rate`` expected births per time unit and
    die after an exponential lifetime of mean ``lifetime_mean`` (``None``:
    immortal).  ``lifetimes`` pins explicit lifetimes for the initial
    components (entries of ``None`` fall back to the draw).  A
    ``noise_fraction`` of points is uniform over the bounding box of the
    live means inflated by five component scales.  Timestamps are regular:
    point ``i`` arrives at ``i / rate``.
    """

    dim: int
    n_components: int
    component_std: float
    drift_std: float = 0.0
    birth_rate: float = 0.0
    lifetime_mean: float | None = None
    lifetimes: tuple | None = None
    noise_fraction: float = 0.0
    rate: float = 1.0
    duration: float = 1.0
    mean_box: float = 50.0
    min_separation: float = 0.0
    means: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "dim", check_positive_int(self.dim, "dim"))
        if not isinstance(self.n_components, int) or self.n_components < 0:
            raise InvalidParameterError(
                f"n_components must be an int >= 0, got {self.n_components!r}"
            )
        object.__setattr__(
            self, "component_std",
            check_positive(self.component_std, "component_std"),
        )
        object.__setattr__(
            self, "drift_std", check_nonnegative(self.drift_std, "drift_std")
        )
        object.__setattr__(
            self, "birth_rate", check_nonnegative(self.birth_rate, "birth_rate")
        )
        if self.lifetime_mean is not None:
            object.__setattr__(
                self, "lifetime_mean",
                check_positive(self.lifetime_mean, "lifetime_mean"),
            )
        object.__setattr__(
            self, "noise_fraction",
            check_unit_interval(self.noise_fraction, "noise_fraction",
                                open_low=False, open_high=True),
        )
        object.__setattr__(self, "rate", check_positive(self.rate, "rate"))
        object.__setattr__(self, "duration", check_positive(self.duration, "duration"))
        object.__setattr__(self, "mean_box", check_positive(self.mean_box, "mean_box"))
        object.__setattr__(
            self, "min_separation",
            check_nonnegative(self.min_separation, "min_separation"),
        )
        if self.lifetimes is not None:
            lifetimes = tuple(self.lifetimes)
            if len(lifetimes) != self.n_components:
                raise InvalidParameterError(
                    f"lifetimes must have one entry per initial component "
                    f"({self.n_components}), got {len(lifetimes)}"
                )
            for v in lifetimes:
                if v is not None:
                    check_positive(v, "lifetimes entry")
            object.__setattr__(self, "lifetimes", lifetimes)
        if self.means is not None:
            means = tuple(
                tuple(float(v) for v in m) for m in self.means
            )
            if len(means) != self.n_components:
                raise InvalidParameterError(
                    f"means must have one entry per initial component "
                    f"({self.n_components}), got {len(means)}"
                )
            for m in means:
                if len(m) != self.dim:
                    raise InvalidParameterError(
                        f"explicit mean has dimension {len(m)}, expected {self.dim}"
                    )
            object.__setattr__(self, "means", means)


class _Component:
    __slots__ = ("label", "mean", "death")

    def __init__(self, label, mean, death):
        self.label = label
        self.mean = mean
        self.death = death


def _sample_mean(rng, spec, existing):
    for _ in range(1000):
        m = rng.uniform(-spec.mean_box, spec.mean_box, spec.dim)
        if all(
            float(np.linalg.norm(m - e)) >= spec.min_separation for e in existing
        ):
            return m
    raise InvalidParameterError(
        "could not place a component mean respecting min_separation "
        f"{spec.min_separation!r} inside the box after 1000 tries"
    )


def generate_stream(spec, seed):
    """Yield the synthetic stream for ``(spec, seed)``.

    Deterministic: the same spec and seed produce byte-identical streams.
    ``seed`` is mandatory — unseeded synthetic data cannot be replayed.
    """
    if seed is None:
        raise InvalidParameterError("seed is mandatory for synthetic streams")
    rng = np.random.default_rng(int(seed))
    comps = []
    next_label = 0
    for k in range(spec.n_components):
        if spec.means is not None:
            mean = np.asarray(spec.means[k], dtype=np.float64)
        else:
            mean = _sample_mean(rng, spec, [c.mean for c in comps])
        pinned = spec.lifetimes[k] if spec.lifetimes is not None else None
        if pinned is not None:
            death = float(pinned)
        elif spec.lifetime_mean is not None:
            death = float(rng.exponential(spec.lifetime_mean))
        else:
            death = math.inf
        comps.append(_Component(next_label, mean, death))
        next_label += 1

    births_per_point = spec.birth_rate / spec.rate
    n_points = int(round(spec.rate * spec.duration))
    five_sigma = 5.0 * spec.component_std
    for i in range(n_points):
        t = i / spec.rate
        comps = [c for c in comps if c.death > t]
        if births_per_point > 0.0:
            for _ in range(int(rng.poisson(births_per_point))):
                mean = _sample_mean(rng, spec, [c.mean for c in comps])
                if spec.lifetime_mean is not None:
                    death = t + float(rng.exponential(spec.lifetime_mean))
                else:
                    death = math.inf
                comps.append(_Component(next_label, mean, death))
                next_label += 1
        if spec.drift_std > 0.0:
            for c in comps:
                c.mean = c.mean + rng.normal(0.0, spec.drift_std, spec.dim)
        emit_noise = rng.random() < spec.noise_fraction
        if emit_noise or not comps:
            if comps:
                means = np.stack([c.mean for c in comps])
                lo = means.min(axis=0) - five_sigma
                hi = means.max(axis=0) + five_sigma
            else:
                lo = np.full(spec.dim, -spec.mean_box - five_sigma)
                hi = np.full(spec.dim, spec.mean_box + five_sigma)
            x = rng.uniform(lo, hi)
            label = NOISE
        else:
            c = comps[int(rng.integers(len(comps)))]
            x = c.mean + spec.component_std * rng.standard_normal(spec.dim)
            label = c.label
        yield StreamPoint(id=f"s{i:07d}", t=t, x=x, label=label)


def _ordered(stream):
    """Pass points through, enforcing (jitter-tolerant) time order."""
    last = -math.inf
    for p in stream:
        if p.t < last - TIME_JITTER:
            raise OutOfOrderError(
                f"stream point {p.id!r} at t={p.t!r} arrived after t={last!r}"
            )
        if p.t > last:
            last = p.t
        yield p


def _metrics_for(X, labels, config, train_s, predict_s):
    labels = np.asarray(labels, dtype=np.int64)
    n_noise = int((labels == NOISE).sum())
    cluster_labels = np.unique(labels[labels != NOISE])
    if len(X) == 0:
        return MetricsReport(None, None, None, None, None, 0, 0, train_s, predict_s)
    X = np.stack(X)
    dis = distinctness(X, labels, combine=config.distinctness_combine)
    con = contingency(X, labels, rank=config.contingency_rank)
    var = variance(X, labels)
    return MetricsReport(
        silhouette=silhouette(X, labels, metric=config.metric),
        dbi=davies_bouldin(X, labels, metric=config.metric),
        distinctness=None if dis is None else dis.overall,
        contingency=None if con is None else con.overall,
        variance=None if var is None else var.overall,
        n_clusters=int(cluster_labels.size),
        n_noise=n_noise,
        train_seconds=train_s,
        predict_seconds=predict_s,
    )


def replay(stream, config, model=None):
    """Prequentially replay ``stream`` under ``config``.

    Returns ``(assignment, report)`` for the target window.  ``model``
    injects a pre-built online model (mainly for instrumented tests);
    by default the model is constructed from ``config.params``.

    Window semantics: with ``t0`` the first point's timestamp, pretrain is
    ``[t0, t0 + pretrain_window)`` and target is the following
    ``target_window``; later points are not consumed.
    """
    it = _ordered(stream)
    first = next(it, None)
    empty = Assignment((), np.empty(0, dtype=np.int64), config.algorithm, "target")
    if first is None:
        return empty, _metrics_for([], [], config, 0.0, 0.0)
    t0 = first.t
    pre_end = t0 + config.pretrain_window
    tgt_end = pre_end + config.target_window

    if config.algorithm == "batch":
        params = DbscanParams(**config.params)
        target = []
        for p in chain([first], it):
            if p.t >= tgt_end:
                break
            if p.t >= pre_end:
                target.append(p)
        if not target:
            return empty, _metrics_for([], [], config, 0.0, 0.0)
        X = np.stack([p.x for p in target])
        start = time.perf_counter()
        labels = dbscan(X, params)
        train_s = time.perf_counter() - start
        assignment = Assignment(
            tuple(p.id for p in target), labels, "batch", "target"
        )
        report = _metrics_for(list(X), labels, config, train_s, 0.0)
        return assignment, report

    m = make_model(config) if model is None else model
    ids = []
    labels = []
    vectors = []
    train_s = 0.0
    predict_s = 0.0
    for p in chain([first], it):
        if p.t >= tgt_end:
            break
        if p.t < pre_end:
            start = time.perf_counter()
            m.learn_one(p)
            train_s += time.perf_counter() - start
        else:
            start = time.perf_counter()
            lab = m.predict_one(p)
            predict_s += time.perf_counter() - start
            start = time.perf_counter()
            m.learn_one(p)
            train_s += time.perf_counter() - start
            ids.append(p.id)
            labels.append(int(lab))
            vectors.append(p.x)
    assignment = Assignment(
        tuple(ids), np.asarray(labels, dtype=np.int64), config.algorithm, "target"
    )
    report = _metrics_for(vectors, labels, config, train_s, predict_s)
    return assignment, report


def _cell(value):
    return None if value is None else value


def compare(stream, configs):
    """Replay the same stream under several configs; one table row each.

    Returns a list of dicts with exactly :data:`COMPARE_COLUMNS` as keys,
    in config order.  The stream is materialised once so every config sees
    identical points.
    """
    points = list(stream)
    rows = []
    for config in configs:
        _, report = replay(iter(points), config)
        rows.append(
            {
                "algorithm": config.algorithm,
                "silhouette": _cell(report.silhouette),
                "dbi": _cell(report.dbi),
                "distinctness": _cell(report.distinctness),
                "contingency": _cell(report.contingency),
                "variance": _cell(report.variance),
                "train_s": report.train_seconds,
                "predict_s": report.predict_seconds,
                "clusters": report.n_clusters,
            }
        )
    return rows


def match_labels(reference, other):
    """Map ``other``'s cluster labels onto ``reference``'s label space.

    Builds the contingency table over ids present in both assignments and
    solves the maximum-overlap matching (Hungarian method).  Matched labels
    map to their reference partner; labels with no (positive-overlap) match
    get fresh ids above every reference label.  Noise is never mapped — it
    stays noise on both sides.
    """
    if not isinstance(reference, Assignment) or not isinstance(other, Assignment):
        raise TypeError("match_labels expects two Assignments")
    ref_map = reference.as_dict()
    oth_map = other.as_dict()
    shared = [i for i in oth_map if i in ref_map]
    if not shared:
        raise ValueError("assignments share no point ids; nothing to match on")
    pairs = [
        (ref_map[i], oth_map[i])
        for i in shared
        if ref_map[i] != NOISE and oth_map[i] != NOISE
    ]
    rows = sorted({a for a, _ in pairs})
    cols = sorted({b for _, b in pairs})
    mapping = {}
    if rows and cols:
        table = np.zeros((len(rows), len(cols)), dtype=np.int64)
        ri = {a: k for k, a in enumerate(rows)}
        ci = {b: k for k, b in enumerate(cols)}
        for a, b in pairs:
            table[ri[a], ci[b]] += 1
        r_idx, c_idx = linear_sum_assignment(table, maximize=True)
        for r, c in zip(r_idx, c_idx):
            if table[r, c] > 0:
                mapping[cols[c]] = rows[r]
    ref_labels = [int(v) for v in reference.labels if v != NOISE]
    fresh = max(ref_labels, default=-1) + 1
    for b in sorted({int(v) for v in other.labels if v != NOISE}):
        if b not in mapping:
            mapping[b] = fresh
            fresh += 1
    return mapping
