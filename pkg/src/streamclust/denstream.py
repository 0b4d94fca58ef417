"""Online density-based clustering with potential and outlier micro-clusters.

The model keeps two populations of decayed micro-clusters: *potential*
micro-clusters (p-micros) that carry enough weight to matter, and *outlier*
micro-clusters (o-micros) that may either grow into p-micros or fade away.
New points try to merge into the nearest p-micro, then the nearest o-micro,
and open a fresh o-micro only when neither merge keeps the radius within
``eps``.  A periodic pruning pass deletes p-micros whose decayed weight has
fallen below ``beta * mu`` and o-micros below an age-dependent lower bound.

Macro clusters are the connected components of the p-micro centers under an
``eps_offline`` center-distance threshold; the labelling is cached and only
recomputed after a mutation (see :class:`~streamclust.base.BaseStreamClusterer`).
"""

from __future__ import annotations

import math

import numpy as np

from .base import SNAPSHOT_VERSION, BaseStreamClusterer
from .core import NOISE, MicroCluster, decay_factors
from .exceptions import InvalidParameterError
from .validation import check_positive, check_unit_interval

__all__ = ["DenStream", "pruning_period"]


def pruning_period(beta, mu, decay):
    """Interval (whole time units, >= 1) between pruning passes.

    This is the shortest horizon after which a fresh o-micro that receives
    no further points is guaranteed to fall below the survival bound:
    ``ceil((1/decay) * log2(beta*mu / (beta*mu - 1)))``.

    Requires ``beta * mu > 1``; at or below 1 the weight threshold can never
    be crossed downward and the interval is undefined.
    """
    beta = check_unit_interval(beta, "beta")
    mu = check_positive(mu, "mu")
    decay = check_positive(decay, "decay")
    bm = beta * mu
    if bm <= 1.0:
        raise InvalidParameterError(
            f"beta * mu must be > 1 for pruning to terminate, got {bm!r}"
        )
    return max(1, math.ceil(math.log2(bm / (bm - 1.0)) / decay))


class _CenterIndex:
    """Packed matrix of micro-cluster centers for vectorised nearest scans.

    Rows mirror the owner's micro-cluster list (same order).  Decay never
    moves a center, so rows change only when a micro-cluster absorbs a
    point, is appended, or is deleted.
    """

    __slots__ = ("_m", "_sq", "n")

    def __init__(self):
        self._m = None
        self._sq = None
        self.n = 0

    def _grow(self, d):
        if self._m is None:
            cap = 64
            self._m = np.empty((cap, d), dtype=np.float64)
            self._sq = np.empty(cap, dtype=np.float64)
        else:
            cap = self._m.shape[0] * 2
            m = np.empty((cap, d), dtype=np.float64)
            sq = np.empty(cap, dtype=np.float64)
            m[: self.n] = self._m[: self.n]
            sq[: self.n] = self._sq[: self.n]
            self._m, self._sq = m, sq

    def append(self, center):
        if self._m is None or self.n == self._m.shape[0]:
            self._grow(center.shape[0])
        self._m[self.n] = center
        self._sq[self.n] = center @ center
        self.n += 1

    def set_row(self, i, center):
        self._m[i] = center
        self._sq[i] = center @ center

    def remove(self, i):
        if i < self.n - 1:
            self._m[i : self.n - 1] = self._m[i + 1 : self.n]
            self._sq[i : self.n - 1] = self._sq[i + 1 : self.n]
        self.n -= 1

    def keep(self, mask):
        k = int(mask.sum())
        if k < self.n:
            self._m[:k] = self._m[: self.n][mask]
            self._sq[:k] = self._sq[: self.n][mask]
            self.n = k

    def centers(self):
        return self._m[: self.n]

    def sqnorms(self):
        return self._sq[: self.n]

    def nearest(self, x):
        """(row index, distance) of the nearest center; (-1, inf) when empty.

        Ties resolve to the lowest row index (``argmin`` keeps the first
        minimum).
        """
        if self.n == 0:
            return -1, math.inf
        d2 = self._sq[: self.n] - 2.0 * (self._m[: self.n] @ x) + x @ x
        i = int(np.argmin(d2))
        return i, math.sqrt(max(float(d2[i]), 0.0))


class DenStream(BaseStreamClusterer):
    """Streaming clusterer over decayed micro-clusters.

    Parameters
    ----------
    eps : float
        Maximum micro-cluster radius; a merge is kept only if the resulting
        radius stays within this bound.
    beta : float in (0, 1]
        Potential threshold factor.  A micro-cluster is *potential* while
        its decayed weight exceeds ``beta * mu``; ``beta * mu`` must exceed 1.
    mu : float
        Core weight scale.
    decay : float
        Base-2 exponential forgetting rate (higher forgets faster).
    eps_offline : float, optional
        Center-distance threshold connecting p-micros into macro clusters.
        Defaults to ``2 * eps``.
    assign_radius : float, optional
        Maximum center distance for ``predict_one`` to adopt a p-micro's
        macro label; farther points are noise.  Defaults to ``eps``.
    """

    _snapshot_format = "streamclust.denstream"

    def __init__(self, eps, beta, mu, decay, eps_offline=None, assign_radius=None):
        self.eps = eps
        self.beta = beta
        self.mu = mu
        self.decay = decay
        self.eps_offline = eps_offline
        self.assign_radius = assign_radius
        self._configure()
        self._init_state()
        self._p = []
        self._o = []
        self._p_index = _CenterIndex()
        self._o_index = _CenterIndex()
        self._t_last_prune = None

    def _configure(self):
        self._eps = check_positive(self.eps, "eps")
        self._beta = check_unit_interval(self.beta, "beta")
        self._mu = check_positive(self.mu, "mu")
        self._decay = check_positive(self.decay, "decay")
        if self._beta * self._mu <= 1.0:
            raise InvalidParameterError(
                f"beta * mu must be > 1, got {self._beta * self._mu!r}"
            )
        self._eps_offline = (
            2.0 * self._eps
            if self.eps_offline is None
            else check_positive(self.eps_offline, "eps_offline")
        )
        self._assign_radius = (
            self._eps
            if self.assign_radius is None
            else check_positive(self.assign_radius, "assign_radius")
        )
        self._prune_every = pruning_period(self._beta, self._mu, self._decay)

    def set_params(self, **params):
        super().set_params(**params)
        self._configure()
        if hasattr(self, "_p"):
            self._mark_dirty()
        return self

    # -- inspection ---------------------------------------------------------

    @property
    def p_micro_clusters(self):
        """Live potential micro-clusters, in first-seen order (read-only)."""
        return tuple(self._p)

    @property
    def o_micro_clusters(self):
        """Live outlier micro-clusters, in first-seen order (read-only)."""
        return tuple(self._o)

    @property
    def n_micro_clusters(self):
        return len(self._p) + len(self._o)

    def state_size_bytes(self):
        """Rough in-memory footprint of the model state.

        Scales with the number of live micro-clusters times the dimension,
        never with how many points have streamed through.
        """
        per_micro = 6 * 8 + (8 * self.dim_ if self.dim_ else 0)
        total = (len(self._p) + len(self._o)) * per_micro
        for index in (self._p_index, self._o_index):
            if index._m is not None:
                total += index._m.nbytes + index._sq.nbytes
        if self._cache is not None:
            total += 16 * len(self._cache)
        return total

    # -- online updates --------------------------------------------------------

    def _learn(self, x, t):
        merged = False
        if self._p:
            i, _ = self._p_index.nearest(x)
            mc = self._p[i]
            if mc.merged_radius(x, t) <= self._eps:
                mc.absorb(x, t)
                self._p_index.set_row(i, mc.ls / mc.w)
                merged = True
        if not merged and self._o:
            j, _ = self._o_index.nearest(x)
            oc = self._o[j]
            if oc.merged_radius(x, t) <= self._eps:
                oc.absorb(x, t)
                if oc.w > self._beta * self._mu:
                    # promotion: strict: a decayed weight of exactly beta*mu stays outlier
                    self._o.pop(j)
                    self._o_index.remove(j)
                    self._p.append(oc)
                    self._p_index.append(oc.ls / oc.w)
                else:
                    self._o_index.set_row(j, oc.ls / oc.w)
                merged = True
        if not merged:
            oc = MicroCluster.from_point(self._decay, x, t)
            self._o.append(oc)
            self._o_index.append(oc.ls / oc.w)
        if self._t_last_prune is None:
            self._t_last_prune = t
        elif t - self._t_last_prune >= self._prune_every:
            self._prune_now(t)
        self._mark_dirty()

    def prune(self, t=None):
        """Run a pruning pass as of ``t`` (model clock by default).

        Deletes p-micros whose decayed weight fell below ``beta * mu`` and
        o-micros whose decayed weight fell below the age-dependent survival
        bound.  Ties survive; only strictly smaller weights are deleted.
        """
        t = self._clock(self.t_seen_ if t is None else t)
        self._prune_now(t)
        return self

    def _prune_now(self, t):
        deleted = False
        if self._p:
            w = np.array([mc.w for mc in self._p])
            tl = np.array([mc.t_last for mc in self._p])
            decayed = w * decay_factors(self._decay, t - tl)
            keep = decayed >= self._beta * self._mu
            if not keep.all():
                self._p = [mc for mc, k in zip(self._p, keep) if k]
                self._p_index.keep(keep)
                deleted = True
        if self._o:
            w = np.array([mc.w for mc in self._o])
            tl = np.array([mc.t_last for mc in self._o])
            t0 = np.array([mc.t_created for mc in self._o])
            decayed = w * decay_factors(self._decay, t - tl)
            tp = float(self._prune_every)
            # survival bound rises from 1 at birth towards 1/(1 - 2**(-decay*Tp))
            bound = (np.exp2(-self._decay * (t - t0 + tp)) - 1.0) / (
                np.exp2(-self._decay * tp) - 1.0
            )
            keep = decayed >= bound
            if not keep.all():
                self._o = [mc for mc, k in zip(self._o, keep) if k]
                self._o_index.keep(keep)
                deleted = True
        self._t_last_prune = t
        if deleted:
            self._mark_dirty()

    # -- offline phase ------------------------------------------------------------

    def _recompute(self, t):
        m = len(self._p)
        labels = np.full(m, -1, dtype=np.int64)
        if m == 0:
            return labels
        centers = self._p_index.centers()
        sq = self._p_index.sqnorms()
        d2 = sq[:, None] + sq[None, :] - 2.0 * (centers @ centers.T)
        adjacency = d2 <= self._eps_offline * self._eps_offline
        next_label = 0
        for seed in range(m):
            if labels[seed] != -1:
                continue
            labels[seed] = next_label
            stack = [seed]
            while stack:
                k = stack.pop()
                for j in np.nonzero(adjacency[k])[0]:
                    if labels[j] == -1:
                        labels[j] = next_label
                        stack.append(int(j))
            next_label += 1
        return labels

    def macro_clusters(self, t=None, force_recompute=False):
        """Mapping p-micro index -> macro label.

        Labels are ``0..K-1`` in first-seen (p-list) order; two p-micros
        share a label iff their centers are connected through center
        distances of at most ``eps_offline``.  The result is cached until
        the next mutation; ``force_recompute`` bypasses the cache (and still
        counts in ``recompute_count_``).
        """
        labels = self._labels_cache(self._read_time(t), force_recompute)
        return {i: int(lab) for i, lab in enumerate(labels)}

    def _predict(self, x, t):
        if not self._p:
            return NOISE
        labels = self._labels_cache(t)
        i, dist = self._p_index.nearest(x)
        if dist <= self._assign_radius:
            return int(labels[i])
        return NOISE

    # -- snapshots -------------------------------------------------------------------

    @staticmethod
    def _dump_micro(mc):
        return {
            "w": mc.w,
            "ls": mc.ls.tolist(),
            "ss": mc.ss,
            "t_last": mc.t_last,
            "t_created": mc.t_created,
        }

    def _load_micro(self, rec):
        return MicroCluster(
            decay=self._decay,
            w=rec["w"],
            ls=np.asarray(rec["ls"], dtype=np.float64),
            ss=rec["ss"],
            t_last=rec["t_last"],
            t_created=rec["t_created"],
        )

    def to_snapshot(self):
        macro = None
        if not self._dirty and self._cache is not None:
            macro = [int(v) for v in self._cache]
        return {
            "format": self._snapshot_format,
            "version": SNAPSHOT_VERSION,
            "params": {
                "eps": self._eps,
                "beta": self._beta,
                "mu": self._mu,
                "decay": self._decay,
                "eps_offline": self._eps_offline,
                "assign_radius": self._assign_radius,
            },
            "t_seen": self.t_seen_,
            "t_last_prune": self._t_last_prune,
            "recompute_count": self.recompute_count_,
            "p": [self._dump_micro(mc) for mc in self._p],
            "o": [self._dump_micro(mc) for mc in self._o],
            "macro": macro,
        }

    def _restore(self, snap):
        self._p = [self._load_micro(r) for r in snap["p"]]
        self._o = [self._load_micro(r) for r in snap["o"]]
        for mc in self._p:
            self._p_index.append(mc.ls / mc.w)
            self.dim_ = mc.dim
        for mc in self._o:
            self._o_index.append(mc.ls / mc.w)
            self.dim_ = mc.dim
        self.t_seen_ = snap["t_seen"]
        self._t_last_prune = snap["t_last_prune"]
        self.recompute_count_ = int(snap["recompute_count"])
        macro = snap["macro"]
        if macro is None:
            self._mark_dirty()
        else:
            if len(macro) != len(self._p):
                raise ValueError("snapshot macro labelling does not match p-micros")
            self._cache = np.asarray(macro, dtype=np.int64)
            self._dirty = False
