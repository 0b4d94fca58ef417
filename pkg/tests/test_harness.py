"""Stream generator, prequential replay, comparison table, label matching."""

import numpy as np
import pytest

from streamclust import (
    COMPARE_COLUMNS,
    Assignment,
    DenStream,
    InvalidParameterError,
    NOISE,
    OutOfOrderError,
    ReplayConfig,
    StreamPoint,
    SyntheticStreamSpec,
    compare,
    generate_stream,
    match_labels,
    replay,
)

DENSTREAM_PARAMS = dict(eps=2.0, beta=0.5, mu=4.0, decay=0.01)


def static_spec(**over):
    kw = dict(
        dim=2, n_components=3, component_std=0.5, rate=100.0, duration=2.0,
        mean_box=30.0, min_separation=15.0,
    )
    kw.update(over)
    return SyntheticStreamSpec(**kw)


def hand_stream(ts, prefix="h"):
    # points sit off the origin: cosine-based metrics reject zero vectors
    return [
        StreamPoint(f"{prefix}{i}", float(t), [float(i) + 1.0, 1.0])
        for i, t in enumerate(ts)
    ]


class TestSpecValidation:
    @pytest.mark.parametrize(
        "kw",
        [dict(dim=0), dict(n_components=-1), dict(component_std=0.0),
         dict(drift_std=-1.0), dict(noise_fraction=1.0),
         dict(noise_fraction=-0.1), dict(rate=0.0), dict(duration=0.0),
         dict(lifetimes=(1.0,)), dict(means=((0.0, 0.0),))],
    )
    def test_bad_values_rejected(self, kw):
        with pytest.raises(InvalidParameterError):
            static_spec(**kw)

    def test_mean_dimension_checked(self):
        with pytest.raises(InvalidParameterError):
            static_spec(n_components=1, means=((0.0, 0.0, 0.0),))

    def test_frozen(self):
        spec = static_spec()
        with pytest.raises(Exception):
            spec.dim = 5


class TestGenerator:
    def test_seed_mandatory(self):
        with pytest.raises(InvalidParameterError, match="seed"):
            next(generate_stream(static_spec(), None))

    def test_deterministic_byte_identical(self):
        spec = static_spec(drift_std=0.05, noise_fraction=0.1,
                           birth_rate=0.5, lifetime_mean=1.0)
        a = list(generate_stream(spec, 99))
        b = list(generate_stream(spec, 99))
        assert len(a) == len(b) == 200
        for p, q in zip(a, b):
            assert p.id == q.id and p.t == q.t and p.label == q.label
            assert p.x.tobytes() == q.x.tobytes()

    def test_seed_changes_stream(self):
        spec = static_spec()
        a = np.stack([p.x for p in generate_stream(spec, 1)])
        b = np.stack([p.x for p in generate_stream(spec, 2)])
        assert not np.array_equal(a, b)

    def test_shape_ids_and_clock(self):
        points = list(generate_stream(static_spec(), 7))
        assert len(points) == 200  # rate * duration
        assert [p.id for p in points[:3]] == ["s0000000", "s0000001", "s0000002"]
        for i, p in enumerate(points):
            assert p.t == i / 100.0
            assert p.x.shape == (2,)
            assert p.label in (0, 1, 2)  # no noise configured

    def test_noise_fraction_empirical(self):
        spec = static_spec(noise_fraction=0.2, rate=1000.0, duration=20.0)
        labels = np.array([p.label for p in generate_stream(spec, 40)])
        frac = (labels == NOISE).mean()
        assert abs(frac - 0.2) < 0.02

    def test_explicit_means_honoured(self):
        spec = static_spec(
            n_components=2, means=((0.0, 0.0), (20.0, 0.0)),
            component_std=0.1, min_separation=0.0,
        )
        for p in generate_stream(spec, 3):
            target = np.array([0.0, 0.0]) if p.label == 0 else np.array([20.0, 0.0])
            assert np.linalg.norm(p.x - target) < 1.0

    def test_min_separation_spreads_components(self):
        spec = static_spec(component_std=0.01, min_separation=25.0)
        by_label = {}
        for p in generate_stream(spec, 11):
            by_label.setdefault(p.label, []).append(p.x)
        centers = {k: np.mean(v, axis=0) for k, v in by_label.items()}
        keys = sorted(centers)
        for i in range(len(keys)):
            for j in range(i + 1, len(keys)):
                assert np.linalg.norm(centers[keys[i]] - centers[keys[j]]) > 20.0

    def test_impossible_separation_raises(self):
        spec = static_spec(mean_box=1.0, min_separation=500.0)
        with pytest.raises(InvalidParameterError, match="min_separation"):
            list(generate_stream(spec, 5))

    def test_lifetime_kills_component(self):
        spec = static_spec(
            n_components=2, lifetimes=(0.5, None), rate=100.0, duration=2.0,
        )
        saw_after_death = [
            p for p in generate_stream(spec, 21) if p.t >= 0.5 and p.label == 0
        ]
        assert saw_after_death == []
        labels = {p.label for p in generate_stream(spec, 21) if p.t >= 0.5}
        assert 1 in labels

    def test_births_add_fresh_labels(self):
        spec = static_spec(birth_rate=2.0, duration=5.0, rate=100.0,
                           min_separation=0.0)
        labels = {p.label for p in generate_stream(spec, 8)}
        assert max(labels) > 2  # beyond the three initial components

    def test_no_components_yields_pure_noise(self):
        spec = static_spec(n_components=0, noise_fraction=0.5)
        points = list(generate_stream(spec, 4))
        assert len(points) == 200
        assert all(p.label == NOISE for p in points)

    def test_drift_moves_means(self):
        spec = static_spec(
            n_components=1, drift_std=0.5, component_std=0.01,
            rate=100.0, duration=10.0, min_separation=0.0,
        )
        xs = np.stack([p.x for p in generate_stream(spec, 6)])
        early = xs[:50].mean(axis=0)
        late = xs[-50:].mean(axis=0)
        assert np.linalg.norm(late - early) > 1.0


class TestReplayConfigValidation:
    def test_bad_algorithm(self):
        with pytest.raises(InvalidParameterError, match="algorithm"):
            ReplayConfig("kmeans", 0.0, 1.0)

    def test_bad_windows(self):
        with pytest.raises(InvalidParameterError):
            ReplayConfig("denstream", -1.0, 1.0)
        with pytest.raises(InvalidParameterError):
            ReplayConfig("denstream", 0.0, 0.0)

    def test_bad_metric(self):
        with pytest.raises(InvalidParameterError, match="metric"):
            ReplayConfig("denstream", 0.0, 1.0, metric="manhattan")

    def test_bad_model_params_surface_at_construction(self):
        from streamclust.harness import make_model
        config = ReplayConfig("denstream", 0.0, 1.0, params=dict(
            eps=1.0, beta=0.5, mu=1.0, decay=0.1,
        ))
        with pytest.raises(InvalidParameterError):
            make_model(config)


class _SpyModel(DenStream):
    """Records the (operation, point id) call sequence."""

    def __init__(self, **kw):
        super().__init__(**kw)
        self.calls = []

    def learn_one(self, point):
        self.calls.append(("learn", point.id))
        return super().learn_one(point)

    def predict_one(self, point, t=None):
        if isinstance(point, StreamPoint):
            self.calls.append(("predict", point.id))
        return super().predict_one(point, t=t)


class TestReplay:
    def test_window_split_half_open(self):
        # pretrain [0, 2), target [2, 4): t=2.0 belongs to target,
        # t=4.0 is out
        stream = hand_stream([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
        config = ReplayConfig("denstream", 2.0, 2.0, params=DENSTREAM_PARAMS)
        assignment, report = replay(stream, config)
        assert assignment.ids == ("h2", "h3")
        assert report.n_clusters >= 0

    def test_windows_anchor_at_first_timestamp(self):
        stream = hand_stream([100.0, 101.0, 102.0, 103.0, 104.0])
        config = ReplayConfig("denstream", 2.0, 2.0, params=DENSTREAM_PARAMS)
        assignment, _ = replay(stream, config)
        assert assignment.ids == ("h2", "h3")

    def test_points_beyond_target_left_unconsumed(self):
        stream = iter(hand_stream([0.0, 1.0, 2.0, 3.0, 4.0, 5.0]))
        config = ReplayConfig("denstream", 2.0, 2.0, params=DENSTREAM_PARAMS)
        replay(stream, config)
        remaining = list(stream)
        assert [p.id for p in remaining] == ["h5"]  # h4 broke the loop

    def test_prequential_predict_precedes_learn(self):
        spy = _SpyModel(**DENSTREAM_PARAMS)
        stream = hand_stream([0.0, 1.0, 2.0, 3.0])
        config = ReplayConfig("denstream", 2.0, 2.0, params=DENSTREAM_PARAMS)
        replay(stream, config, model=spy)
        assert spy.calls == [
            ("learn", "h0"), ("learn", "h1"),
            ("predict", "h2"), ("learn", "h2"),
            ("predict", "h3"), ("learn", "h3"),
        ]

    def test_online_labels_come_from_the_model(self):
        spec = static_spec(rate=200.0, duration=4.0, component_std=0.3)
        config = ReplayConfig(
            "denstream", 2.0, 2.0,
            params=dict(eps=2.0, beta=0.5, mu=4.0, decay=0.01),
        )
        assignment, report = replay(generate_stream(spec, 17), config)
        assert len(assignment) == 400
        assert report.n_clusters >= 2
        assert report.train_seconds > 0.0 and report.predict_seconds > 0.0

    def test_batch_sees_only_target_window(self):
        # identical target, differing pretrain: batch output must be
        # byte-identical because it never looks at the pretrain window
        target = hand_stream([2.0, 2.5, 3.0, 3.5])
        pre_a = [StreamPoint("a0", 0.0, [100.0, 0.0])]
        pre_b = [StreamPoint("b0", 0.0, [-55.0, 3.0]),
                 StreamPoint("b1", 1.0, [7.0, -9.0])]
        config = ReplayConfig("batch", 2.0, 2.0,
                              params=dict(eps=1.5, min_samples=2))
        asg_a, _ = replay(pre_a + target, config)
        asg_b, _ = replay(pre_b + target, config)
        assert asg_a.ids == asg_b.ids
        assert np.array_equal(asg_a.labels, asg_b.labels)

    def test_batch_timing_has_no_predict_phase(self):
        stream = hand_stream([0.0, 1.0, 2.0, 3.0])
        config = ReplayConfig("batch", 0.0, 10.0,
                              params=dict(eps=1.5, min_samples=2))
        _, report = replay(stream, config)
        assert report.predict_seconds == 0.0
        assert report.train_seconds > 0.0

    def test_empty_stream(self):
        config = ReplayConfig("denstream", 1.0, 1.0, params=DENSTREAM_PARAMS)
        assignment, report = replay(iter([]), config)
        assert len(assignment) == 0
        assert report.n_clusters == 0 and report.n_noise == 0
        assert report.silhouette is None and report.variance is None
        assert report.train_seconds == 0.0 and report.predict_seconds == 0.0

    def test_empty_target_window(self):
        stream = hand_stream([0.0, 0.5])  # everything in pretrain
        config = ReplayConfig("denstream", 2.0, 2.0, params=DENSTREAM_PARAMS)
        assignment, report = replay(stream, config)
        assert len(assignment) == 0
        assert report.silhouette is None

    def test_out_of_order_stream_raises_naming_point(self):
        stream = [
            StreamPoint("ok", 5.0, [0.0, 0.0]),
            StreamPoint("bad", 1.0, [0.0, 0.0]),
        ]
        config = ReplayConfig("denstream", 0.0, 10.0, params=DENSTREAM_PARAMS)
        with pytest.raises(OutOfOrderError, match="bad"):
            replay(stream, config)

    def test_assignment_provenance(self):
        stream = hand_stream([0.0, 1.0])
        config = ReplayConfig("dbstream", 0.0, 10.0, params=dict(
            radius=1.5, decay=0.01, cleanup_interval=100.0, connectivity=0.5,
        ))
        assignment, _ = replay(stream, config)
        assert assignment.algorithm == "dbstream"
        assert assignment.phase == "target"


class TestCompare:
    def _configs(self):
        return [
            ReplayConfig("denstream", 1.0, 2.0, params=DENSTREAM_PARAMS),
            ReplayConfig("dbstream", 1.0, 2.0, params=dict(
                radius=2.0, decay=0.01, cleanup_interval=10.0,
                connectivity=0.3,
            )),
            ReplayConfig("batch", 1.0, 2.0, params=dict(eps=2.0, min_samples=3)),
        ]

    def test_one_row_per_config_with_exact_columns(self):
        spec = static_spec(rate=100.0, duration=3.0)
        rows = compare(generate_stream(spec, 23), self._configs())
        assert len(rows) == 3
        for row in rows:
            assert tuple(row.keys()) == COMPARE_COLUMNS
        assert [r["algorithm"] for r in rows] == ["denstream", "dbstream", "batch"]

    def test_single_pass_stream_feeds_every_config(self):
        spec = static_spec(rate=100.0, duration=3.0)
        rows = compare(generate_stream(spec, 23), self._configs())
        for row in rows:
            assert row["clusters"] >= 1

    def test_metric_columns_deterministic_across_runs(self):
        spec = static_spec(rate=100.0, duration=3.0, noise_fraction=0.05)
        a = compare(generate_stream(spec, 31), self._configs())
        b = compare(generate_stream(spec, 31), self._configs())
        volatile = {"train_s", "predict_s"}
        for ra, rb in zip(a, b):
            for col in COMPARE_COLUMNS:
                if col not in volatile:
                    assert ra[col] == rb[col], col


class TestMatchLabels:
    def test_identity(self):
        a = Assignment(("p1", "p2", "p3"), [0, 1, NOISE])
        assert match_labels(a, a) == {0: 0, 1: 1}

    def test_recovers_permutation(self):
        ids = tuple(f"p{i}" for i in range(9))
        ref = Assignment(ids, [0, 0, 0, 1, 1, 1, 2, 2, 2])
        oth = Assignment(ids, [2, 2, 2, 0, 0, 0, 1, 1, 1])
        assert match_labels(ref, oth) == {2: 0, 0: 1, 1: 2}

    def test_extra_cluster_gets_fresh_label(self):
        ids = tuple(f"p{i}" for i in range(9))
        ref = Assignment(ids, [0, 0, 0, 1, 1, 1, NOISE, NOISE, NOISE])
        oth = Assignment(ids, [5, 5, 5, 7, 7, 7, 9, 9, 9])
        # cluster 9 only overlaps reference noise: fresh id above max(0, 1)
        assert match_labels(ref, oth) == {5: 0, 7: 1, 9: 2}

    def test_maximizes_overlap(self):
        ids = tuple(f"p{i}" for i in range(10))
        ref = Assignment(ids, [0] * 6 + [1] * 4)
        oth = Assignment(ids, [8] * 2 + [3] * 4 + [8] * 4)
        # label 3 overlaps ref-0 on 4 points; label 8 overlaps ref-0 on 2
        # and ref-1 on 4: the assignment 3->0, 8->1 dominates
        assert match_labels(ref, oth) == {3: 0, 8: 1}

    def test_partial_id_overlap_uses_intersection(self):
        ref = Assignment(("a", "b", "c"), [0, 0, 1])
        oth = Assignment(("b", "c", "z"), [4, 6, 6])
        got = match_labels(ref, oth)
        assert got[4] == 0 and got[6] == 1

    def test_disjoint_ids_rejected(self):
        ref = Assignment(("a",), [0])
        oth = Assignment(("z",), [0])
        with pytest.raises(ValueError, match="share no point ids"):
            match_labels(ref, oth)

    def test_noise_never_in_mapping(self):
        ids = tuple(f"p{i}" for i in range(4))
        ref = Assignment(ids, [0, 0, NOISE, NOISE])
        oth = Assignment(ids, [1, 1, NOISE, NOISE])
        got = match_labels(ref, oth)
        assert NOISE not in got
        assert NOISE not in got.values()

    def test_type_checked(self):
        with pytest.raises(TypeError):
            match_labels({"a": 0}, Assignment(("a",), [0]))


class TestMemoryEnvelope:
    def test_state_grows_sublinearly_in_stream_length(self):
        # ten times the stream must not even double the model footprint:
        # decay caps the live micro-cluster population for a static scene
        spec_short = static_spec(rate=200.0, duration=5.0, noise_fraction=0.05)
        spec_long = static_spec(rate=200.0, duration=50.0, noise_fraction=0.05)
        params = dict(eps=2.0, beta=0.5, mu=4.0, decay=0.1)
        sizes = []
        for spec, seed in ((spec_short, 3), (spec_long, 3)):
            model = DenStream(**params)
            config = ReplayConfig(
                "denstream", 1.0, spec.duration, params=params,
            )
            replay(generate_stream(spec, seed), config, model=model)
            model.prune()
            sizes.append(model.state_size_bytes())
        assert sizes[1] < 2 * sizes[0]
