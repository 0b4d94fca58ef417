"""Streaming density-based clustering with a batch baseline and replay harness."""

from .core import (
    NOISE,
    MicroCluster,
    StreamPoint,
    cosine_distance,
    decay_factor,
    decay_factors,
    euclidean,
)
from .exceptions import (
    DegenerateMetricError,
    DimensionMismatchError,
    EmptyClusterError,
    InvalidParameterError,
    OutOfOrderError,
)
from .denstream import DenStream, pruning_period
from .dbstream import DBStream, DBStreamMicro, SharedDensityEdge
from .batch import BatchDBSCAN, DbscanParams, batch_daily_baseline, dbscan
from .metrics import (
    Assignment,
    ClusterMetric,
    MetricsReport,
    adjusted_rand_index,
    contingency,
    davies_bouldin,
    distinctness,
    fingerprint,
    pairwise_distances,
    silhouette,
    variance,
    write_fingerprint_file,
)
from .harness import (
    COMPARE_COLUMNS,
    ReplayConfig,
    SyntheticStreamSpec,
    compare,
    generate_stream,
    make_model,
    match_labels,
    replay,
)

__version__ = "0.1.0"

__all__ = [
    "NOISE",
    "MicroCluster",
    "StreamPoint",
    "cosine_distance",
    "decay_factor",
    "decay_factors",
    "euclidean",
    "DegenerateMetricError",
    "DimensionMismatchError",
    "EmptyClusterError",
    "InvalidParameterError",
    "OutOfOrderError",
    "DenStream",
    "pruning_period",
    "DBStream",
    "DBStreamMicro",
    "SharedDensityEdge",
    "BatchDBSCAN",
    "DbscanParams",
    "batch_daily_baseline",
    "dbscan",
    "Assignment",
    "ClusterMetric",
    "MetricsReport",
    "adjusted_rand_index",
    "contingency",
    "davies_bouldin",
    "distinctness",
    "fingerprint",
    "pairwise_distances",
    "silhouette",
    "variance",
    "write_fingerprint_file",
    "COMPARE_COLUMNS",
    "ReplayConfig",
    "SyntheticStreamSpec",
    "compare",
    "generate_stream",
    "make_model",
    "match_labels",
    "replay",
    "__version__",
]
