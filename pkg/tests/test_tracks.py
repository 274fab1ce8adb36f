import math

import numpy as np
import pytest

from smine.errors import InsufficientDataError, InvalidInputError
from smine.tracks import (
    LogManifest,
    NormStats,
    Track,
    TrackState,
    apply_norm,
    estimate_velocity,
    fit_norm_stats,
    load_log,
    normalize_track,
    quaternion_from_yaw,
    save_log,
    velocity_series,
    yaw_from_quaternion,
)


def make_state(ts_ns, tx=0.0, ty=0.0, tz=0.0, yaw=0.0, l=4.0, w=2.0, h=1.5):
    qw, qx, qy, qz = quaternion_from_yaw(yaw)
    return TrackState(ts_ns=ts_ns, tx=tx, ty=ty, tz=tz, qw=qw, qx=qx, qy=qy, qz=qz,
                      length=l, width=w, height=h)


def line_track(track_id="t0", category="VEHICLE", n=5, dt_ns=100_000_000, speed=1.0):
    states = tuple(
        make_state(i * dt_ns, tx=speed * i * dt_ns / 1e9) for i in range(n)
    )
    return Track(track_id=track_id, category=category, states=states)


class TestTrackState:
    def test_rejects_non_unit_quaternion(self):
        with pytest.raises(InvalidInputError):
            TrackState(ts_ns=0, tx=0, ty=0, tz=0, qw=0.5, qx=0, qy=0, qz=0,
                       length=1, width=1, height=1)

    def test_rejects_non_positive_dims(self):
        with pytest.raises(InvalidInputError):
            make_state(0, l=0.0)

    def test_vector_order(self):
        s = make_state(0, tx=1.0, ty=2.0, tz=3.0)
        v = s.vector()
        assert v.shape == (10,)
        assert list(v[:3]) == [1.0, 2.0, 3.0]
        assert list(v[7:]) == [4.0, 2.0, 1.5]


class TestTrack:
    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            Track(track_id="x", category="VEHICLE", states=())

    def test_rejects_non_increasing_timestamps(self):
        states = (make_state(0), make_state(0))
        with pytest.raises(InvalidInputError):
            Track(track_id="x", category="VEHICLE", states=states)

    def test_index_of_ts(self):
        t = line_track(n=4)
        assert t.index_of_ts(100_000_000) == 1
        assert t.index_of_ts(150_000_000) is None


class TestLogManifest:
    def test_rejects_track_outside_duration(self):
        t = line_track(n=3)  # last ts = 0.2 s
        with pytest.raises(InvalidInputError):
            LogManifest(log_id="l", duration=0.1, frame_rate=10.0, tracks=(t,))

    def test_rejects_bad_scalars(self):
        with pytest.raises(InvalidInputError):
            LogManifest(log_id="l", duration=0.0, frame_rate=10.0)
        with pytest.raises(InvalidInputError):
            LogManifest(log_id="l", duration=1.0, frame_rate=0.0)


class TestYaw:
    def test_identity(self):
        assert yaw_from_quaternion((1, 0, 0, 0)) == 0.0

    def test_quarter_turn(self):
        q = (math.cos(math.pi / 4), 0, 0, math.sin(math.pi / 4))
        assert yaw_from_quaternion(q) == pytest.approx(math.pi / 2, abs=1e-12)

    def test_half_turn_maps_to_pi(self):
        assert yaw_from_quaternion((0, 0, 0, 1)) == pytest.approx(math.pi, abs=1e-12)

    def test_double_cover(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            yaw = rng.uniform(-math.pi, math.pi)
            q = np.array(quaternion_from_yaw(yaw))
            assert yaw_from_quaternion(q) == yaw_from_quaternion(-q)

    def test_rejects_non_unit(self):
        with pytest.raises(InvalidInputError):
            yaw_from_quaternion((1.1, 0, 0, 0))


class TestVelocity:
    def test_forward_difference_at_start(self):
        states = (make_state(0, tx=0.0), make_state(100_000_000, tx=1.0))
        t = Track("a", "VEHICLE", states)
        np.testing.assert_allclose(estimate_velocity(t, 0), [10.0, 0.0, 0.0])

    def test_constant_position_is_zero(self):
        states = tuple(make_state(i * 100_000_000) for i in range(4))
        t = Track("a", "VEHICLE", states)
        for i in range(4):
            np.testing.assert_array_equal(estimate_velocity(t, i), [0.0, 0.0, 0.0])

    def test_central_difference_interior(self):
        # hand-check oracle: (p2 - p0) / (t2 - t0) = (2 - 0) / 0.2 = 10
        states = (
            make_state(0, tx=0.0),
            make_state(100_000_000, tx=1.0),
            make_state(200_000_000, tx=2.0),
        )
        t = Track("a", "VEHICLE", states)
        np.testing.assert_allclose(estimate_velocity(t, 1), [10.0, 0.0, 0.0])

    def test_single_state_raises(self):
        t = Track("a", "VEHICLE", (make_state(0),))
        with pytest.raises(InsufficientDataError):
            estimate_velocity(t, 0)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(3)
        pos = rng.normal(size=(6, 3))
        ts = [i * 100_000_000 for i in range(6)]
        shift = np.array([5.0, -2.0, 1.0])

        def build(p):
            return Track("a", "VEHICLE", tuple(
                make_state(ts[i], tx=p[i, 0], ty=p[i, 1], tz=p[i, 2]) for i in range(6)
            ))

        base, shifted = build(pos), build(pos + shift)
        np.testing.assert_allclose(velocity_series(base), velocity_series(shifted), atol=1e-9)


def two_pass_stats_oracle(matrices):
    """Independent two-pass mean / population-variance computation."""
    data = np.concatenate(matrices, axis=0)
    n = data.shape[0]
    mean = data.sum(axis=0) / n
    var = ((data - mean) ** 2).sum(axis=0) / n
    return mean, np.sqrt(var)


class TestNormStats:
    def test_two_point_dimension(self):
        # values {0, 2} in tx -> mean 1, population std 1
        states = (make_state(0, tx=0.0), make_state(100_000_000, tx=2.0))
        stats = fit_norm_stats([Track("a", "VEHICLE", states)])
        assert stats.mean[0] == 1.0
        assert stats.std[0] == 1.0

    def test_constant_dimension_clamped(self):
        t = line_track(n=3, speed=0.0)
        stats = fit_norm_stats([t])
        assert stats.std[1] == 1e-8  # ty constant
        normed = apply_norm(stats, t.states[0])
        assert normed[1] == 0.0

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(11)
        tracks = []
        for k in range(5):
            n = int(rng.integers(10, 16))
            states = tuple(
                make_state(
                    i * 50_000_000,
                    tx=float(rng.normal(0, 30)),
                    ty=float(rng.normal(0, 30)),
                    tz=float(rng.normal(0, 2)),
                    yaw=float(rng.uniform(-3, 3)),
                    l=float(rng.uniform(0.5, 10)),
                    w=float(rng.uniform(0.5, 4)),
                    h=float(rng.uniform(0.5, 4)),
                )
                for i in range(n)
            )
            tracks.append(Track(f"t{k}", "VEHICLE", states))
        total_states = sum(len(t) for t in tracks)
        assert total_states >= 50
        stats = fit_norm_stats(tracks)
        mean, std = two_pass_stats_oracle([t.state_matrix for t in tracks])
        np.testing.assert_allclose(stats.mean, mean, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(stats.std, np.maximum(std, 1e-8), rtol=1e-12)

    def test_empty_collection_raises(self):
        with pytest.raises(InvalidInputError):
            fit_norm_stats([])


class TestApplyNorm:
    def test_state_equal_to_mean_is_zero(self):
        t = line_track(n=4)
        stats = fit_norm_stats([t])
        np.testing.assert_allclose(apply_norm(stats, stats.mean.copy()), np.zeros(10), atol=0)

    def test_identity_stats(self):
        stats = NormStats(mean=np.zeros(10), std=np.ones(10))
        s = make_state(0, tx=1.5)
        np.testing.assert_array_equal(apply_norm(stats, s), s.vector())

    def test_scalar_example(self):
        stats = NormStats(mean=np.ones(10), std=np.full(10, 2.0))
        out = apply_norm(stats, np.full(10, 5.0))
        np.testing.assert_array_equal(out, np.full(10, 2.0))

    def test_normalized_corpus_has_unit_stats(self):
        rng = np.random.default_rng(23)
        states = tuple(
            make_state(i * 50_000_000, tx=float(rng.normal(0, 5)),
                       ty=float(rng.normal(0, 5)), yaw=float(rng.uniform(-1, 1)))
            for i in range(40)
        )
        t = Track("a", "VEHICLE", states)
        stats = fit_norm_stats([t])
        normed = normalize_track(stats, t)
        mu = normed.mean(axis=0)
        sd = normed.std(axis=0)
        nondegenerate = stats.std > 1e-6
        assert np.all(np.abs(mu[nondegenerate]) < 1e-9)
        assert np.all(np.abs(sd[nondegenerate] - 1.0) < 1e-9)


class TestLogFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        tracks = []
        for k in range(3):
            states = tuple(
                make_state(i * 100_000_000, tx=float(rng.normal()), ty=float(rng.normal()),
                           yaw=float(rng.uniform(-3, 3)))
                for i in range(8)
            )
            tracks.append(Track(f"trk_{k}", "PEDESTRIAN", states))
        log = LogManifest(log_id="log0", duration=15.0, frame_rate=10.0,
                          camera_ids=("ring_front_center",), tracks=tuple(tracks))
        path = tmp_path / "log0.jsonl"
        save_log(log, path)
        loaded = load_log(path)
        assert loaded.log_id == log.log_id
        assert loaded.duration == log.duration
        assert loaded.frame_rate == log.frame_rate
        assert loaded.camera_ids == log.camera_ids
        assert len(loaded.tracks) == len(log.tracks)
        for a, b in zip(loaded.tracks, log.tracks):
            assert a == b  # dataclass equality covers exact float round-trip
