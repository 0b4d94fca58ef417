"""Decay algebra, distance functions, and the micro-cluster summary statistic.

Everything that fades in this library fades through :func:`decay_factor` /
:func:`decay_factors` (one scalar and one vector entry point over the same
``np.exp2`` call), so equal elapsed times always produce bitwise-equal
survival fractions regardless of which component computed them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyClusterError, OutOfOrderError
from .validation import as_vector

#: Cluster label assigned to points that belong to no dense region.
NOISE = -1

#: Timestamps may run backwards by at most this much (clock jitter); such
#: points are treated as arriving at the model's current time.  Anything
#: older raises :class:`OutOfOrderError`.
TIME_JITTER = 1e-6

#: Radius radicands more negative than this indicate corrupted statistics
#: rather than floating-point cancellation.
_RADICAND_GUARD = 1e-9
_RADICAND_RTOL = 1e-12


def decay_factor(decay, elapsed):
    """Fraction of weight surviving after ``elapsed`` time units.

    Base-2 exponential forgetting: ``2 ** (-decay * elapsed)``.  Equals 1.0
    at ``elapsed == 0`` and strictly decreases as ``elapsed`` grows.
    """
    if not (isinstance(decay, (int, float)) and math.isfinite(decay)) or decay <= 0:
        raise ValueError(f"decay rate must be finite and > 0, got {decay!r}")
    if not (isinstance(elapsed, (int, float)) and math.isfinite(elapsed)):
        raise ValueError(f"elapsed time must be finite, got {elapsed!r}")
    if elapsed < 0:
        raise ValueError(f"elapsed time must be >= 0, got {elapsed!r}")
    return float(np.exp2(-decay * float(elapsed)))


def decay_factors(decay, elapsed):
    """Vectorised :func:`decay_factor` over an array of elapsed times.

    Uses the same ``np.exp2`` code path as the scalar form, so a scalar and
    a vector evaluation of the same elapsed time agree bit for bit.
    Negative entries (reads earlier than an entity's last touch) are clamped
    to zero elapsed time, i.e. no decay.
    """
    dts = np.asarray(elapsed, dtype=np.float64)
    return np.exp2(-decay * np.maximum(dts, 0.0))


def euclidean(a, b):
    """Euclidean distance between two vectors of equal dimension."""
    a = as_vector(a, name="a")
    b = as_vector(b, dim=a.shape[0], name="b")
    return float(np.linalg.norm(a - b))


def cosine_distance(a, b):
    """1 - cosine similarity, clipped into [0, 2].

    Raises ``ValueError`` for zero vectors: they have no direction, so the
    quantity is undefined rather than silently zero or NaN.
    """
    a = as_vector(a, name="a")
    b = as_vector(b, dim=a.shape[0], name="b")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance is undefined for zero vectors")
    sim = float(a @ b) / (na * nb)
    return min(2.0, max(0.0, 1.0 - sim))


@dataclass(frozen=True, slots=True)
class StreamPoint:
    """One timestamped observation: an embedding vector with an identity.

    ``label`` carries ground truth when the stream is synthetic or
    annotated; live streams leave it ``None``.
    """

    id: str
    t: float
    x: np.ndarray
    label: int | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError(f"point id must be a nonempty string, got {self.id!r}")
        t = self.t
        if not (isinstance(t, (int, float)) and math.isfinite(t)):
            raise ValueError(f"point {self.id!r}: timestamp must be finite, got {t!r}")
        x = as_vector(self.x, name=f"point {self.id!r} vector")
        object.__setattr__(self, "t", float(t))
        object.__setattr__(self, "x", x)
        if self.label is not None and not isinstance(self.label, (int, np.integer)):
            raise ValueError(
                f"point {self.id!r}: label must be an int or None, got {self.label!r}"
            )

    @property
    def dim(self):
        return self.x.shape[0]


@dataclass(slots=True)
class MicroCluster:
    """Decayed summary of nearby points.

    Carries the weight ``w``, the weighted linear sum ``ls`` and the
    weighted sum of squared norms ``ss``, all faded by the same base-2
    exponential.  Because the three fade together, the derived center and
    radius are invariant under pure decay; only absorbing a point moves
    them.

    ``t_last`` is the time the statistics are currently expressed at;
    ``t_created`` is the birth time (used by outlier-pruning policies).
    Decay is lazy: nothing fades until :meth:`fade` or :meth:`absorb` is
    called with a later timestamp.
    """

    decay: float
    w: float
    ls: np.ndarray
    ss: float
    t_last: float
    t_created: float

    def __post_init__(self):
        if not (isinstance(self.decay, (int, float)) and math.isfinite(self.decay)):
            raise ValueError(f"decay rate must be finite, got {self.decay!r}")
        if self.decay <= 0:
            raise ValueError(f"decay rate must be > 0, got {self.decay!r}")
        ls = np.asarray(self.ls, dtype=np.float64)
        if ls.ndim != 1:
            raise ValueError(f"ls must be a 1-D vector, got shape {ls.shape}")
        self.ls = ls
        for name in ("w", "ss", "t_last", "t_created"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError(f"{name} must be finite, got {v!r}")
            setattr(self, name, float(v))
        if self.ss < 0:
            raise ValueError(f"ss must be >= 0, got {self.ss!r}")

    @classmethod
    def from_point(cls, decay, x, t):
        """Open a fresh micro-cluster around a single observation."""
        x = as_vector(x)
        return cls(
            decay=decay,
            w=1.0,
            ls=x.copy(),
            ss=float(x @ x),
            t_last=float(t),
            t_created=float(t),
        )

    @property
    def dim(self):
        return self.ls.shape[0]

    def copy(self):
        return MicroCluster(
            decay=self.decay,
            w=self.w,
            ls=self.ls.copy(),
            ss=self.ss,
            t_last=self.t_last,
            t_created=self.t_created,
        )

    # -- time handling ----------------------------------------------------

    def _elapsed(self, t):
        """Elapsed time from ``t_last`` to ``t``, tolerating tiny regressions.

        Timestamps up to ``TIME_JITTER`` older than ``t_last`` count as
        "now" (elapsed 0); anything older is a hard error.
        """
        dt = float(t) - self.t_last
        if dt < 0.0:
            if -dt <= TIME_JITTER:
                return 0.0
            raise OutOfOrderError(
                f"timestamp {t!r} precedes cluster time {self.t_last!r} "
                f"by more than {TIME_JITTER}"
            )
        return dt

    # -- mutating operations ----------------------------------------------

    def fade(self, t):
        """Decay the statistics in place to time ``t``.  Returns ``self``."""
        dt = self._elapsed(t)
        if dt > 0.0:
            f = float(np.exp2(-self.decay * dt))
            self.w *= f
            self.ls *= f
            self.ss *= f
            self.t_last = self.t_last + dt
        return self

    def absorb(self, x, t):
        """Decay to ``t``, then add one unit-weight observation at ``x``.

        The decay-then-add order matters: the new point must not be faded
        by the elapsed time that preceded it.
        """
        x = as_vector(x, dim=self.dim)
        self.fade(t)
        self.w += 1.0
        self.ls += x
        self.ss += float(x @ x)
        return self

    # -- derived views (never mutate) ---------------------------------------

    def center(self):
        """Weighted mean position.  Invariant under pure decay."""
        if self.w <= 0.0:
            raise EmptyClusterError("center is undefined for weight <= 0")
        return self.ls / self.w

    def radius(self):
        """RMS deviation of the summarised mass from its center.

        The radicand ``ss/w - ||center||**2`` can dip a hair below zero
        through floating-point cancellation; values within the guard
        tolerance clamp to zero, anything worse means the statistics were
        corrupted and raises.
        """
        if self.w <= 0.0:
            raise EmptyClusterError("radius is undefined for weight <= 0")
        c = self.ls / self.w
        mean_sq = self.ss / self.w
        norm_sq = float(c @ c)
        radicand = mean_sq - norm_sq
        # Cancellation error grows with the magnitudes being subtracted, so
        # the guard is relative to them with an absolute floor for tiny stats.
        tol = max(_RADICAND_GUARD, _RADICAND_RTOL * (mean_sq + norm_sq))
        if radicand < -tol:
            raise ValueError(
                f"radius radicand {radicand!r} is negative beyond tolerance; "
                "micro-cluster statistics are inconsistent"
            )
        return math.sqrt(max(0.0, radicand))

    def merged_radius(self, x, t):
        """Radius this cluster *would* have after ``absorb(x, t)``.

        Pure: evaluates the tentative merge without touching the stored
        statistics, so callers can test the radius criterion first and only
        commit when it holds.
        """
        x = as_vector(x, dim=self.dim)
        dt = self._elapsed(t)
        f = float(np.exp2(-self.decay * dt)) if dt > 0.0 else 1.0
        w = self.w * f + 1.0
        ls = self.ls * f + x
        ss = self.ss * f + float(x @ x)
        mean_sq = ss / w
        norm_sq = float(ls @ ls) / (w * w)
        radicand = mean_sq - norm_sq
        tol = max(_RADICAND_GUARD, _RADICAND_RTOL * (mean_sq + norm_sq))
        if radicand < -tol:
            raise ValueError(
                f"radius radicand {radicand!r} is negative beyond tolerance; "
                "micro-cluster statistics are inconsistent"
            )
        return math.sqrt(max(0.0, radicand))

    def weight_at(self, t):
        """Decayed weight as of time ``t``, without mutating.

        Reads earlier than ``t_last`` clamp to ``t_last`` (no negative
        decay), which makes stale read-outs well defined.
        """
        dt = float(t) - self.t_last
        if dt <= 0.0:
            return self.w
        return self.w * float(np.exp2(-self.decay * dt))
