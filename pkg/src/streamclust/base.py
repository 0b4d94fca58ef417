"""Shared plumbing for the online clusterers.

Both online models follow the same discipline:

* timestamps are validated against the model clock (small jitter clamps,
  real regressions raise);
* every mutation marks the cached macro-clustering dirty and drops it;
* reads rebuild the cache at most once per dirty period, guarded by a lock
  so concurrent readers cannot trigger duplicate recomputation
  (``recompute_count_`` makes this observable);
* array-level ``fit`` / ``predict`` wrap the per-point operations so the
  estimators compose with the usual scikit-learn tooling.

Thread-safety contract: one writer at a time, any number of concurrent
readers while no writer is active.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading

import numpy as np
from sklearn.base import BaseEstimator

from .core import TIME_JITTER, StreamPoint
from .exceptions import DimensionMismatchError, OutOfOrderError
from .validation import as_matrix, as_vector

SNAPSHOT_VERSION = 1


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a sibling temp file and rename.

    Readers never observe a partially written file; the target either holds
    the old content or the complete new content.
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class BaseStreamClusterer(BaseEstimator):
    """Common state machine for the online clusterers.

    Subclasses implement ``_learn(x, t)``, ``_predict(x, t)`` and
    ``_recompute(t)`` (which returns the macro-labelling cache object), plus
    the snapshot hooks ``to_snapshot`` / ``_restore``.
    """

    #: subclasses override; used to stamp and check snapshots
    _snapshot_format = "streamclust.base"

    def _init_state(self):
        self.dim_ = None
        self.t_seen_ = None
        self.recompute_count_ = 0
        self._dirty = True
        self._cache = None
        self._lock = threading.Lock()

    # -- time & dimension discipline ----------------------------------------

    def _clock(self, t):
        """Advance the model clock to ``t``, clamping jitter-scale regressions."""
        t = float(t)
        if self.t_seen_ is None or t >= self.t_seen_:
            self.t_seen_ = t
            return t
        if self.t_seen_ - t <= TIME_JITTER:
            return self.t_seen_
        raise OutOfOrderError(
            f"timestamp {t!r} precedes the model clock {self.t_seen_!r} "
            f"by more than {TIME_JITTER}"
        )

    def _check_dim(self, x, name="x"):
        x = as_vector(x, name=name)
        if self.dim_ is None:
            self.dim_ = x.shape[0]
        elif x.shape[0] != self.dim_:
            raise DimensionMismatchError(
                f"{name} has dimension {x.shape[0]}, but this model ingests "
                f"dimension {self.dim_}"
            )
        return x

    def _read_time(self, t):
        """Resolve the as-of time for a read-only operation."""
        if t is None:
            return self.t_seen_ if self.t_seen_ is not None else 0.0
        t = float(t)
        if not np.isfinite(t):
            raise ValueError(f"time must be finite, got {t!r}")
        return t

    # -- cache discipline ----------------------------------------------------

    def _mark_dirty(self):
        self._dirty = True
        self._cache = None

    def _labels_cache(self, t, force_recompute=False):
        """Return the macro-labelling, recomputing at most once per dirty period.

        The double-checked lock means that when several readers race on a
        dirty model, exactly one pays for the recompute and the rest reuse
        its result.
        """
        if not force_recompute:
            cache = self._cache
            if not self._dirty and cache is not None:
                return cache
        with self._lock:
            if force_recompute or self._dirty or self._cache is None:
                self._cache = self._recompute(t)
                self.recompute_count_ += 1
                self._dirty = False
            return self._cache

    # -- hooks ----------------------------------------------------------------

    def _learn(self, x, t):  # pragma: no cover - abstract
        raise NotImplementedError

    def _predict(self, x, t):  # pragma: no cover - abstract
        raise NotImplementedError

    def _recompute(self, t):  # pragma: no cover - abstract
        raise NotImplementedError

    # -- per-point API ---------------------------------------------------------

    def learn_one(self, point):
        """Fold one :class:`StreamPoint` into the model.  Returns ``self``."""
        if not isinstance(point, StreamPoint):
            raise TypeError(
                f"learn_one expects a StreamPoint, got {type(point).__name__}; "
                "use fit(X, timestamps=...) for raw arrays"
            )
        x = self._check_dim(point.x, name=f"point {point.id!r}")
        t = self._clock(point.t)
        self._learn(x, t)
        return self

    def predict_one(self, point, t=None):
        """Macro label for one observation, or ``NOISE``.

        Accepts a :class:`StreamPoint` (whose timestamp is used unless ``t``
        is given) or a bare vector (as-of the model clock unless ``t`` is
        given).  Never mutates the model state beyond the shared label
        cache.
        """
        if isinstance(point, StreamPoint):
            x = point.x
            if t is None:
                t = point.t
        else:
            x = point
        x = as_vector(x, name="x")
        if self.dim_ is not None and x.shape[0] != self.dim_:
            raise DimensionMismatchError(
                f"x has dimension {x.shape[0]}, but this model ingests "
                f"dimension {self.dim_}"
            )
        return self._predict(x, self._read_time(t))

    # -- array API ----------------------------------------------------------------

    def fit(self, X, y=None, timestamps=None):
        """Ingest the rows of ``X`` in order.

        ``timestamps`` defaults to unit spacing: ``0, 1, 2, ...`` on a fresh
        model, continuing from the model clock otherwise.
        """
        X = as_matrix(X)
        n = X.shape[0]
        if timestamps is None:
            start = 0.0 if self.t_seen_ is None else self.t_seen_ + 1.0
            timestamps = start + np.arange(n, dtype=np.float64)
        else:
            timestamps = np.asarray(timestamps, dtype=np.float64)
            if timestamps.shape != (n,):
                raise ValueError(
                    f"timestamps must have shape ({n},), got {timestamps.shape}"
                )
            if not np.isfinite(timestamps).all():
                raise ValueError("timestamps contain non-finite values")
        for i in range(n):
            x = self._check_dim(X[i], name=f"X[{i}]")
            self._learn(x, self._clock(timestamps[i]))
        return self

    def predict(self, X, t=None):
        """Macro labels for the rows of ``X`` as of time ``t`` (model clock default)."""
        X = as_matrix(X)
        t = self._read_time(t)
        return np.array([self._predict(X[i], t) for i in range(X.shape[0])], dtype=np.int64)

    def fit_predict(self, X, y=None, timestamps=None):
        self.fit(X, y=y, timestamps=timestamps)
        return self.predict(X)

    # -- snapshots -------------------------------------------------------------------

    def to_snapshot(self):  # pragma: no cover - abstract
        raise NotImplementedError

    def _restore(self, snap):  # pragma: no cover - abstract
        raise NotImplementedError

    @classmethod
    def from_snapshot(cls, snap):
        """Rebuild a model from :meth:`to_snapshot` output.

        Snapshot floats round-trip through ``repr`` (shortest form that
        parses back to the same double), so a restored model is bitwise
        identical to the saved one.
        """
        if not isinstance(snap, dict):
            raise ValueError(f"snapshot must be a dict, got {type(snap).__name__}")
        fmt = snap.get("format")
        if fmt != cls._snapshot_format:
            raise ValueError(
                f"snapshot format {fmt!r} does not match {cls._snapshot_format!r}"
            )
        version = snap.get("version")
        if version != SNAPSHOT_VERSION:
            raise ValueError(
                f"unsupported snapshot version {version!r}; "
                f"this build reads version {SNAPSHOT_VERSION}"
            )
        model = cls(**snap["params"])
        model._restore(snap)
        return model

    def save(self, path):
        """Serialise to ``path`` as JSON, atomically."""
        atomic_write_text(path, json.dumps(self.to_snapshot()) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            snap = json.load(fh)
        return cls.from_snapshot(snap)
