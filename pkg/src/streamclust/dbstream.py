"""Online clustering with moving micro-cluster centers and shared density.

Each micro-cluster is a leaky counter with a *moving* center: every point
within ``radius`` of a center bumps that cluster's decayed weight and pulls
the center toward the point through a Gaussian kernel.  Points covered by
two or more micro-clusters additionally feed a decayed *shared density*
edge between every covered pair; those edges, normalised by the endpoint
weights, decide which micro-clusters belong to the same macro cluster.

Two structural rules keep the geometry sane:

* centers never end a learn step closer than ``radius`` to each other —
  moves that would violate this are reverted (weights keep their update);
* a new micro-cluster opens only for points no existing center covers, so
  fresh centers are born at least ``radius`` from every live center.

Cleanup runs every ``cleanup_interval`` time units and deletes weak
micro-clusters and weak or orphaned edges.  The macro labelling is cached
and recomputed at most once per mutation period (see
:class:`~streamclust.base.BaseStreamClusterer`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import SNAPSHOT_VERSION, BaseStreamClusterer
from .core import NOISE, decay_factors
from .validation import check_nonnegative, check_positive, check_unit_interval

__all__ = ["DBStream", "DBStreamMicro", "SharedDensityEdge"]


@dataclass(frozen=True)
class DBStreamMicro:
    """Read-only view of one live micro-cluster."""

    id: int
    center: np.ndarray
    w: float
    t_last: float


@dataclass(frozen=True)
class SharedDensityEdge:
    """Read-only view of one shared-density edge (``id_lo < id_hi``)."""

    id_lo: int
    id_hi: int
    s: float
    t_last: float


class _MacroCache:
    """Frozen macro labelling: id mapping plus arrays aligned for predict."""

    __slots__ = ("by_id", "positions", "labels")

    def __init__(self, by_id, positions, labels):
        self.by_id = by_id
        self.positions = positions
        self.labels = labels


class DBStream(BaseStreamClusterer):
    """Streaming clusterer with moving centers and shared-density reclustering.

    Parameters
    ----------
    radius : float
        Coverage radius of a micro-cluster center.
    decay : float
        Base-2 exponential forgetting rate for weights and edges.
    cleanup_interval : float
        Time between cleanup passes; also sets the weak-weight threshold
        ``2 ** (-decay * cleanup_interval)``.
    connectivity : float in (0, 1]
        Minimum ratio of decayed shared density to the endpoints' mean
        decayed weight for two micro-clusters to join one macro cluster.
        The same factor scales the weak-edge threshold at cleanup.
    min_weight : float, default 1.0
        Micro-clusters below this decayed weight are excluded from the
        macro labelling (and can therefore never be predicted).
    kernel_sigma : float, optional
        Width of the Gaussian pull on centers.  Defaults to ``radius / 3``.
    """

    _snapshot_format = "streamclust.dbstream"

    def __init__(
        self,
        radius,
        decay,
        cleanup_interval,
        connectivity,
        min_weight=1.0,
        kernel_sigma=None,
    ):
        self.radius = radius
        self.decay = decay
        self.cleanup_interval = cleanup_interval
        self.connectivity = connectivity
        self.min_weight = min_weight
        self.kernel_sigma = kernel_sigma
        self._configure()
        self._init_state()
        self._centers = None
        self._sq = None
        self._w = None
        self._tl = None
        self._mids = None
        self._n = 0
        self._next_id = 0
        self._id_pos = {}
        self._edges = {}
        self._t_last_cleanup = None

    def _configure(self):
        self._radius = check_positive(self.radius, "radius")
        self._decay = check_positive(self.decay, "decay")
        self._gap = check_positive(self.cleanup_interval, "cleanup_interval")
        self._connectivity = check_unit_interval(self.connectivity, "connectivity")
        self._min_weight = check_nonnegative(self.min_weight, "min_weight")
        self._sigma = (
            self._radius / 3.0
            if self.kernel_sigma is None
            else check_positive(self.kernel_sigma, "kernel_sigma")
        )

    def set_params(self, **params):
        super().set_params(**params)
        self._configure()
        if hasattr(self, "_edges"):
            self._mark_dirty()
        return self

    # -- storage ---------------------------------------------------------------

    def _grow(self, d):
        if self._centers is None:
            cap = 64
            self._centers = np.empty((cap, d), dtype=np.float64)
            self._sq = np.empty(cap, dtype=np.float64)
            self._w = np.empty(cap, dtype=np.float64)
            self._tl = np.empty(cap, dtype=np.float64)
            self._mids = np.empty(cap, dtype=np.int64)
        else:
            cap = self._centers.shape[0] * 2
            for name in ("_centers", "_sq", "_w", "_tl", "_mids"):
                old = getattr(self, name)
                shape = (cap, d) if old.ndim == 2 else (cap,)
                new = np.empty(shape, dtype=old.dtype)
                new[: self._n] = old[: self._n]
                setattr(self, name, new)

    def _append_micro(self, x, t):
        if self._centers is None or self._n == self._centers.shape[0]:
            self._grow(x.shape[0])
        n = self._n
        self._centers[n] = x
        self._sq[n] = x @ x
        self._w[n] = 1.0
        self._tl[n] = t
        self._mids[n] = self._next_id
        self._id_pos[self._next_id] = n
        self._next_id += 1
        self._n = n + 1

    def _compact(self, keep):
        idx = np.nonzero(keep)[0]
        k = idx.size
        for mid in self._mids[: self._n][~keep]:
            del self._id_pos[int(mid)]
        for name in ("_centers", "_sq", "_w", "_tl", "_mids"):
            arr = getattr(self, name)
            arr[:k] = arr[: self._n][idx]
        self._n = k
        for pos, mid in enumerate(self._mids[:k]):
            self._id_pos[int(mid)] = pos

    # -- inspection --------------------------------------------------------------

    @property
    def n_micro_clusters(self):
        return self._n

    @property
    def micro_clusters(self):
        """Live micro-clusters in first-seen order (read-only views)."""
        return tuple(
            DBStreamMicro(
                id=int(self._mids[i]),
                center=self._centers[i].copy(),
                w=float(self._w[i]),
                t_last=float(self._tl[i]),
            )
            for i in range(self._n)
        )

    @property
    def shared_density_edges(self):
        """Live shared-density edges (read-only views), canonical id order."""
        return tuple(
            SharedDensityEdge(id_lo=k[0], id_hi=k[1], s=e[0], t_last=e[1])
            for k, e in self._edges.items()
        )

    def shared_density(self, id_a, id_b, t=None):
        """Decayed shared density between two micro-cluster ids as of ``t``.

        Symmetric in its arguments; 0.0 when no edge exists.
        """
        key = (id_a, id_b) if id_a < id_b else (id_b, id_a)
        e = self._edges.get(key)
        if e is None:
            return 0.0
        t = self._read_time(t)
        return e[0] * float(np.exp2(-self._decay * max(0.0, t - e[1])))

    def weight_of(self, micro_id, t=None):
        """Decayed weight of one micro-cluster id as of ``t``."""
        pos = self._id_pos[micro_id]
        t = self._read_time(t)
        return float(self._w[pos]) * float(
            np.exp2(-self._decay * max(0.0, t - float(self._tl[pos])))
        )

    def state_size_bytes(self):
        """Rough in-memory footprint; scales with live state, not stream length."""
        total = 0
        if self._centers is not None:
            total += (
                self._centers.nbytes
                + self._sq.nbytes
                + self._w.nbytes
                + self._tl.nbytes
                + self._mids.nbytes
            )
        total += len(self._edges) * (2 * 8 + 2 * 8)
        total += len(self._id_pos) * 16
        if self._cache is not None:
            total += 16 * len(self._cache.by_id)
        return total

    # -- online updates ---------------------------------------------------------------

    def _learn(self, x, t):
        n = self._n
        if n == 0:
            self._append_micro(x, t)
        else:
            d2 = self._sq[:n] - 2.0 * (self._centers[:n] @ x) + x @ x
            covered = np.nonzero(d2 <= self._radius * self._radius)[0]
            if covered.size == 0:
                # born at distance > radius from every live center
                self._append_micro(x, t)
            else:
                self._update_covered(x, t, covered, d2[covered])
        if self._t_last_cleanup is None:
            self._t_last_cleanup = t
        elif t - self._t_last_cleanup >= self._gap:
            self._cleanup_now(t)
        self._mark_dirty()

    def _update_covered(self, x, t, covered, d2):
        centers = self._centers
        old = centers[covered].copy()
        fade = np.exp2(-self._decay * (t - self._tl[covered]))
        self._w[covered] = self._w[covered] * fade + 1.0
        pull = np.exp(-np.maximum(d2, 0.0) / (2.0 * self._sigma * self._sigma))
        centers[covered] += pull[:, None] * (x - centers[covered])
        self._tl[covered] = t
        if covered.size > 1:
            self._bump_edges(covered, t)
        self._revert_conflicts(covered, old)
        rows = centers[covered]
        self._sq[covered] = np.einsum("ij,ij->i", rows, rows)

    def _bump_edges(self, covered, t):
        mids = self._mids
        edges = self._edges
        decay = self._decay
        for a in range(covered.size):
            ia = int(mids[covered[a]])
            for b in range(a + 1, covered.size):
                ib = int(mids[covered[b]])
                key = (ia, ib) if ia < ib else (ib, ia)
                e = edges.get(key)
                if e is None:
                    edges[key] = [1.0, t]
                else:
                    e[0] = e[0] * float(np.exp2(-decay * (t - e[1]))) + 1.0
                    e[1] = t

    def _revert_conflicts(self, covered, old):
        """Undo center moves until no pair of centers sits closer than ``radius``.

        A single pass is not enough: reverting one member of a conflicting
        pair can leave its (already moved) partner conflicting with a third
        center, so this iterates to a fixpoint.  Each pass reverts at least
        one still-moved center, bounding the loop by ``covered.size``.
        Unmoved centers satisfied the spacing before the call and their
        positions are untouched, so on exit *every* live pair is >= radius
        apart.  Weight and edge updates are kept regardless.
        """
        n = self._n
        centers = self._centers[:n]
        r2 = self._radius * self._radius
        pos_of = {int(g): k for k, g in enumerate(covered)}
        reverted = np.zeros(covered.size, dtype=bool)
        for _ in range(covered.size):
            active = covered[~reverted]
            if active.size == 0:
                break
            sq_all = np.einsum("ij,ij->i", centers, centers)
            moved = centers[active]
            d2 = sq_all[active][:, None] + sq_all[None, :] - 2.0 * (moved @ centers.T)
            d2[np.arange(active.size), active] = np.inf
            rows, cols = np.nonzero(d2 < r2)
            if rows.size == 0:
                break
            to_revert = set()
            for rpos, col in zip(rows, cols):
                to_revert.add(int(active[rpos]))
                j = int(col)
                k = pos_of.get(j)
                if k is not None and not reverted[k]:
                    to_revert.add(j)
            for i in to_revert:
                k = pos_of[i]
                centers[i] = old[k]
                reverted[k] = True

    # -- cleanup ----------------------------------------------------------------------

    def cleanup(self, t=None):
        """Run a cleanup pass as of ``t`` (model clock by default).

        Deletes micro-clusters whose decayed weight fell strictly below
        ``2 ** (-decay * cleanup_interval)`` and edges whose decayed shared
        density fell strictly below ``connectivity`` times that bound or
        whose endpoints died.  Ties survive.
        """
        t = self._clock(self.t_seen_ if t is None else t)
        self._cleanup_now(t)
        return self

    def _cleanup_now(self, t):
        w_weak = float(np.exp2(-self._decay * self._gap))
        changed = False
        if self._n:
            decayed = self._w[: self._n] * decay_factors(
                self._decay, t - self._tl[: self._n]
            )
            keep = decayed >= w_weak
            if not keep.all():
                self._compact(keep)
                changed = True
        threshold = self._connectivity * w_weak
        doomed = []
        for key, e in self._edges.items():
            if key[0] not in self._id_pos or key[1] not in self._id_pos:
                doomed.append(key)
                continue
            s_now = e[0] * float(np.exp2(-self._decay * max(0.0, t - e[1])))
            if s_now < threshold:
                doomed.append(key)
        for key in doomed:
            del self._edges[key]
        self._t_last_cleanup = t
        if changed or doomed:
            self._mark_dirty()

    # -- offline phase -------------------------------------------------------------------

    def _recompute(self, t):
        n = self._n
        if n == 0:
            return _MacroCache({}, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
        decayed = self._w[:n] * decay_factors(self._decay, t - self._tl[:n])
        included = decayed >= self._min_weight
        adjacency = {}
        for (ia, ib), e in self._edges.items():
            pa = self._id_pos.get(ia)
            pb = self._id_pos.get(ib)
            if pa is None or pb is None or not (included[pa] and included[pb]):
                continue
            s_now = e[0] * float(np.exp2(-self._decay * max(0.0, t - e[1])))
            mean_w = 0.5 * (decayed[pa] + decayed[pb])
            if mean_w > 0.0 and s_now / mean_w >= self._connectivity:
                adjacency.setdefault(pa, []).append(pb)
                adjacency.setdefault(pb, []).append(pa)
        pos_label = {}
        next_label = 0
        for seed in range(n):
            if not included[seed] or seed in pos_label:
                continue
            pos_label[seed] = next_label
            stack = [seed]
            while stack:
                k = stack.pop()
                for j in adjacency.get(k, ()):
                    if j not in pos_label:
                        pos_label[j] = next_label
                        stack.append(j)
            next_label += 1
        positions = np.fromiter(pos_label.keys(), dtype=np.int64, count=len(pos_label))
        labels = np.fromiter(pos_label.values(), dtype=np.int64, count=len(pos_label))
        order = np.argsort(positions, kind="stable")
        positions = positions[order]
        labels = labels[order]
        by_id = {
            int(self._mids[p]): int(lab) for p, lab in zip(positions, labels)
        }
        return _MacroCache(by_id, positions, labels)

    def recluster(self, t=None, force_recompute=False):
        """Mapping micro-cluster id -> macro label as of ``t``.

        Micro-clusters whose decayed weight is below ``min_weight`` are
        excluded (absent from the mapping).  Included micro-clusters are
        connected when their decayed shared density, divided by the mean of
        their decayed weights, reaches ``connectivity``.  Labels are
        ``0..K-1`` in first-seen order.  Cached until the next mutation.
        """
        cache = self._labels_cache(self._read_time(t), force_recompute)
        return dict(cache.by_id)

    def _predict(self, x, t):
        cache = self._labels_cache(t)
        if cache.positions.size == 0:
            return NOISE
        candidates = self._centers[cache.positions]
        d2 = (
            np.einsum("ij,ij->i", candidates, candidates)
            - 2.0 * (candidates @ x)
            + x @ x
        )
        best = int(np.argmin(d2))
        if math.sqrt(max(float(d2[best]), 0.0)) <= self._radius:
            return int(cache.labels[best])
        return NOISE

    # -- snapshots ---------------------------------------------------------------------------

    def to_snapshot(self):
        macro = None
        if not self._dirty and self._cache is not None:
            macro = [[int(k), int(v)] for k, v in self._cache.by_id.items()]
        return {
            "format": self._snapshot_format,
            "version": SNAPSHOT_VERSION,
            "params": {
                "radius": self._radius,
                "decay": self._decay,
                "cleanup_interval": self._gap,
                "connectivity": self._connectivity,
                "min_weight": self._min_weight,
                "kernel_sigma": self._sigma,
            },
            "t_seen": self.t_seen_,
            "t_last_cleanup": self._t_last_cleanup,
            "recompute_count": self.recompute_count_,
            "next_id": self._next_id,
            "micros": [
                [
                    int(self._mids[i]),
                    float(self._w[i]),
                    float(self._tl[i]),
                    self._centers[i].tolist(),
                ]
                for i in range(self._n)
            ],
            "edges": [
                [k[0], k[1], e[0], e[1]] for k, e in self._edges.items()
            ],
            "macro": macro,
        }

    def _restore(self, snap):
        for mid, w, t_last, center in snap["micros"]:
            x = np.asarray(center, dtype=np.float64)
            self._append_micro(x, t_last)
            pos = self._n - 1
            self._w[pos] = float(w)
            self._mids[pos] = int(mid)
            del self._id_pos[self._next_id - 1]
            self._id_pos[int(mid)] = pos
            self.dim_ = x.shape[0]
        self._next_id = int(snap["next_id"])
        self._edges = {
            (int(a), int(b)): [float(s), float(tl)] for a, b, s, tl in snap["edges"]
        }
        self.t_seen_ = snap["t_seen"]
        self._t_last_cleanup = snap["t_last_cleanup"]
        self.recompute_count_ = int(snap["recompute_count"])
        macro = snap["macro"]
        if macro is None:
            self._mark_dirty()
        else:
            by_id = {int(k): int(v) for k, v in macro}
            positions = np.array(
                [self._id_pos[mid] for mid in by_id], dtype=np.int64
            )
            labels = np.array(list(by_id.values()), dtype=np.int64)
            order = np.argsort(positions, kind="stable")
            self._cache = _MacroCache(by_id, positions[order], labels[order])
            self._dirty = False
