"""Exception types shared across the library.

Everything derives from ``ValueError`` so callers that only want a coarse
"bad input" net can catch that alone, while tests and the CLI can
distinguish the precise failure.
"""


class InvalidParameterError(ValueError):
    """Algorithm parameters violate their documented constraints."""


class DimensionMismatchError(ValueError):
    """Vectors of different dimensionality were mixed in one model or call."""


class OutOfOrderError(ValueError):
    """A timestamp ran backwards by more than the jitter tolerance."""


class EmptyClusterError(ValueError):
    """Center or radius was requested from a micro-cluster with no weight."""


class DegenerateMetricError(ValueError):
    """A metric is undefined because of coincident cluster structure."""
