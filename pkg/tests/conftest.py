"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from streamclust import DenStream, StreamPoint

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def make_points(rng, n, dim, spread=10.0, t_step=0.1, start=0.0, prefix="p"):
    """n random points with regularly spaced timestamps."""
    xs = rng.uniform(-spread, spread, size=(n, dim))
    return [
        StreamPoint(id=f"{prefix}{i}", t=start + i * t_step, x=xs[i])
        for i in range(n)
    ]


def blob_data(rng, centers, per_cluster, std=1.0, noise=0, noise_spread=None):
    """Labelled Gaussian blobs plus optional uniform noise; returns (X, y)."""
    centers = np.asarray(centers, dtype=np.float64)
    k, dim = centers.shape
    xs, ys = [], []
    for label in range(k):
        xs.append(centers[label] + std * rng.standard_normal((per_cluster, dim)))
        ys.extend([label] * per_cluster)
    if noise:
        spread = noise_spread or (np.abs(centers).max() + 6 * std)
        xs.append(rng.uniform(-spread, spread, size=(noise, dim)))
        ys.extend([-1] * noise)
    X = np.vstack(xs)
    y = np.asarray(ys, dtype=np.int64)
    order = rng.permutation(len(y))
    return X[order], y[order]


def denstream_with_sites(sites, eps=1.0, beta=0.5, mu=3.0, decay=0.1, **kw):
    """A DenStream holding exactly one p-micro per site, centered there.

    Feeds each site enough coincident points to cross the promotion
    threshold; coincident absorbs keep the center exactly on the site.
    """
    sites = np.asarray(sites, dtype=np.float64)
    model = DenStream(eps=eps, beta=beta, mu=mu, decay=decay, **kw)
    pumps = int(np.floor(beta * mu)) + 1
    i = 0
    for site in sites:
        for _ in range(pumps + 1):
            model.learn_one(StreamPoint(id=f"site{i}", t=0.0, x=site))
            i += 1
    assert len(model.p_micro_clusters) == len(sites)
    assert len(model.o_micro_clusters) == 0
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
