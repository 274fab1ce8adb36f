import math

import numpy as np
import pytest

from smine.coarse import (
    Lexicons,
    TimeRegion,
    WindowScore,
    extract_query_terms,
    load_lexicon,
    merge_intervals,
    partition_windows,
    pool_window,
    query_text_for_embedding,
    rank_and_merge,
    restrict_tracks,
    sample_uniform,
    score_log_windows,
    score_window,
)
from smine.embeddings import StoreBuilder
from smine.errors import InvalidInputError, UndefinedSimilarityError
from smine.tracks import LogManifest, Track

from test_tracks import make_state


def coverage_oracle(duration, window, stride):
    """Enumerate window starts directly: i*stride while it fits, then the
    clipped tail if the last window does not reach the end."""
    starts = []
    i = 0
    while i * stride + window <= duration + 1e-9:
        starts.append(i * stride)
        i += 1
    if starts[-1] + window < duration - 1e-9:
        starts.append(duration - window)
    return starts


class TestPartitionWindows:
    def test_paper_defaults(self):
        wins = partition_windows(15.0, 3.0, 1.0)
        assert len(wins) == 13
        assert [w[0] for w in wins] == list(range(13))

    def test_single_window(self):
        assert partition_windows(3.0, 3.0, 1.0) == [(0.0, 3.0)]

    def test_clipped_tail(self):
        wins = partition_windows(15.0, 4.0, 3.0)
        starts = [w[0] for w in wins]
        assert starts == coverage_oracle(15.0, 4.0, 3.0)
        assert starts == [0.0, 3.0, 6.0, 9.0, 11.0]
        assert wins[-1] == (11.0, 15.0)

    def test_window_exceeding_duration_rejected(self):
        with pytest.raises(InvalidInputError):
            partition_windows(2.0, 3.0, 1.0)

    def test_random_against_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            duration = float(rng.uniform(2, 30))
            window = float(rng.uniform(0.5, duration))
            stride = float(rng.uniform(0.25, 5))
            wins = partition_windows(duration, window, stride)
            assert [w[0] for w in wins] == pytest.approx(
                coverage_oracle(duration, window, stride)
            )
            for a, b in wins:
                assert b == pytest.approx(min(a + window, duration))


class TestPoolWindow:
    def test_two_frames(self):
        np.testing.assert_array_equal(pool_window([(1.0, 0.0), (0.0, 1.0)]), [0.5, 0.5])

    def test_single_frame_identity(self):
        v = np.array([3.0, -1.0, 2.0])
        np.testing.assert_array_equal(pool_window([v]), v)

    def test_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(4)
        frames = rng.normal(size=(5, 8))
        oracle = sum(frames[i] for i in range(5)) / 5.0
        np.testing.assert_allclose(pool_window(frames), oracle, atol=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(5)
        frames = rng.normal(size=(7, 6))
        perm = rng.permutation(7)
        np.testing.assert_allclose(pool_window(frames), pool_window(frames[perm]), atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            pool_window(np.empty((0, 4)))


class TestScoreWindow:
    def test_parallel(self):
        assert score_window([1.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert score_window([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)

    def test_45_degrees(self):
        assert score_window([1.0, 1.0], [1.0, 0.0]) == pytest.approx(math.sqrt(0.5))

    def test_zero_vector_rejected(self):
        with pytest.raises(UndefinedSimilarityError):
            score_window([0.0, 0.0], [1.0, 0.0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            u = rng.normal(size=5)
            v = rng.normal(size=5)
            a, b = rng.uniform(0.01, 100, size=2)
            assert abs(score_window(a * u, b * v) - score_window(u, v)) < 1e-12


def sort_merge_oracle(scores, k):
    """Full-sort oracle: group by window, sort, slice, union intervals."""
    grouped = {}
    for ws in scores:
        key = (ws.log_id, ws.start, ws.end)
        grouped[key] = grouped.get(key, 0.0) + ws.score
    items = sorted(grouped.items(), key=lambda kv: (-kv[1], kv[0][1], kv[0][0]))[:k]
    per_log = {}
    for (log_id, a, b), _ in items:
        per_log.setdefault(log_id, []).append((a, b))
    out = {}
    for log_id, spans in per_log.items():
        spans.sort()
        merged = []
        for a, b in spans:
            if merged and a <= merged[-1][1] + 1e-9:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        out[log_id] = tuple(merged)
    return out


class TestRankAndMerge:
    def test_overlap_merge(self):
        scores = [WindowScore("l", 2.0, 5.0, 1.0), WindowScore("l", 4.0, 7.0, 0.9)]
        region = rank_and_merge(scores, k=5)
        assert region.for_log("l") == ((2.0, 7.0),)

    def test_k_larger_than_count(self):
        scores = [WindowScore("l", float(i), float(i + 3), 0.1 * i) for i in range(4)]
        region = rank_and_merge(scores, k=100)
        assert region.for_log("l") == ((0.0, 6.0),)

    def test_random_against_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            scores = [
                WindowScore("log_a", float(i), float(i + 3), float(rng.normal()))
                for i in range(13)
            ]
            k = int(rng.integers(1, 14))
            region = rank_and_merge(scores, k)
            assert dict(region.intervals) == sort_merge_oracle(scores, k)

    def test_empty_scores_empty_region(self):
        assert rank_and_merge([], k=3).is_empty()

    def test_per_view_scores_summed_before_ranking(self):
        # window [0,3] wins only when its two views are accumulated
        scores = [
            WindowScore("l", 0.0, 3.0, 0.4),
            WindowScore("l", 0.0, 3.0, 0.4),
            WindowScore("l", 5.0, 8.0, 0.6),
        ]
        region = rank_and_merge(scores, k=1)
        assert region.for_log("l") == ((0.0, 3.0),)

    def test_output_disjoint_sorted_union_preserved(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            scores = [
                WindowScore("l", float(s), float(s + rng.uniform(1, 4)), float(rng.normal()))
                for s in rng.uniform(0, 20, size=10)
            ]
            k = int(rng.integers(1, 11))
            region = rank_and_merge(scores, k)
            spans = region.for_log("l")
            for (a1, b1), (a2, b2) in zip(spans, spans[1:]):
                assert b1 < a2  # disjoint and sorted
            # union identical to union of selected windows (sampled probe)
            grouped = {}
            for ws in scores:
                key = (ws.log_id, ws.start, ws.end)
                grouped[key] = grouped.get(key, 0.0) + ws.score
            top = sorted(grouped.items(), key=lambda kv: (-kv[1], kv[0][1], kv[0][0]))[:k]
            for t in np.linspace(0, 25, 400):
                in_top = any(a <= t <= b for (_, a, b), _ in top)
                in_region = any(a <= t <= b for a, b in spans)
                assert in_top == in_region

    def test_recall_property_top_window_always_contained(self):
        rng = np.random.default_rng(9)
        for k in range(1, 6):
            scores = [
                WindowScore("l", float(i), float(i + 3), float(rng.uniform(0, 0.5)))
                for i in range(13)
            ]
            planted = WindowScore("l", 6.0, 9.0, 5.0)
            region = rank_and_merge(scores + [planted], k)
            assert any(a <= 6.0 and 9.0 <= b for a, b in region.for_log("l"))


class TestTimeRegion:
    def test_rejects_overlapping(self):
        with pytest.raises(InvalidInputError):
            TimeRegion({"l": ((0.0, 2.0), (1.0, 3.0))})

    def test_contains_ts(self):
        region = TimeRegion({"l": ((1.0, 2.0),)})
        assert region.contains_ts_ns("l", 1_500_000_000)
        assert region.contains_ts_ns("l", 2_000_000_000)
        assert not region.contains_ts_ns("l", 2_000_000_001)
        assert not region.contains_ts_ns("other", 1_500_000_000)


def interval_overlap_oracle(track, spans):
    return any(a <= ts / 1e9 <= b for ts in track.ts_ns for a, b in spans)


class TestRestrictTracks:
    def _log(self):
        t1 = Track("early", "VEHICLE",
                   tuple(make_state(i * 500_000_000) for i in range(3)))  # [0, 1]s
        t2 = Track("late", "VEHICLE",
                   tuple(make_state(3_000_000_000 + i * 500_000_000) for i in range(3)))  # [3, 4]s
        return LogManifest(log_id="l", duration=15.0, frame_rate=2.0, tracks=(t1, t2))

    def test_whole_log_region_is_identity(self):
        log = self._log()
        out = restrict_tracks(log, TimeRegion({"l": ((0.0, 15.0),)}))
        assert [t.track_id for t in out.tracks] == ["early", "late"]

    def test_empty_region_drops_all(self):
        out = restrict_tracks(self._log(), TimeRegion({}))
        assert out.tracks == ()

    def test_partial_region_matches_oracle(self):
        log = self._log()
        region = TimeRegion({"l": ((2.0, 5.0),)})
        out = restrict_tracks(log, region)
        expected = [t.track_id for t in log.tracks
                    if interval_overlap_oracle(t, region.for_log("l"))]
        assert [t.track_id for t in out.tracks] == expected == ["late"]
        assert out.active_region == ((2.0, 5.0),)

    def test_states_outside_region_kept(self):
        log = self._log()
        out = restrict_tracks(log, TimeRegion({"l": ((3.5, 3.6),)}))
        assert len(out.tracks) == 1
        assert len(out.tracks[0]) == 3  # context states preserved


def lexicon_match_oracle(query, lexicons):
    """Scan the lowercased token stream for lexicon phrases, longest first."""
    phrases = sorted(
        (p.lower().split() for p in (*lexicons.colors, *lexicons.entities, *lexicons.relations)),
        key=len,
        reverse=True,
    )
    import re as _re
    tokens = _re.findall(r"[a-z0-9]+", query.lower())
    hits, i = [], 0
    while i < len(tokens):
        for p in phrases:
            if tokens[i : i + len(p)] == p:
                term = " ".join(p)
                if term not in hits:
                    hits.append(term)
                i += len(p)
                break
        else:
            i += 1
    return hits


class TestExtractQueryTerms:
    def test_documented_example(self):
        terms = extract_query_terms("a red truck in front of the ego vehicle")
        assert terms == lexicon_match_oracle(
            "a red truck in front of the ego vehicle", Lexicons()
        )
        assert terms == ["red", "truck", "in front of", "vehicle"]

    def test_no_hits_falls_back_to_raw_query(self):
        assert extract_query_terms("something happens") == []
        assert query_text_for_embedding("something happens") == "something happens"

    def test_pedestrian_crossing_left(self):
        terms = extract_query_terms("pedestrian crossing left")
        assert terms == lexicon_match_oracle("pedestrian crossing left", Lexicons())
        assert terms == ["pedestrian", "crossing", "left"]

    def test_dedup_preserves_order(self):
        assert extract_query_terms("red car near red bus") == ["red", "car", "near", "bus"]

    def test_custom_lexicon_file(self, tmp_path):
        f = tmp_path / "colors.txt"
        f.write_text("# comment line\nteal\nmagenta  # trailing\n\n")
        assert load_lexicon(f) == ("teal", "magenta")
        lex = Lexicons(colors=load_lexicon(f))
        assert extract_query_terms("a teal vehicle", lex) == ["teal", "vehicle"]


class TestScoreLogWindows:
    def test_accumulates_across_views_and_finds_planted_window(self):
        rng = np.random.default_rng(10)
        dim = 8
        target = np.zeros(dim)
        target[0] = 1.0
        b = StoreBuilder(dim)
        cameras = ("cam_a", "cam_b")
        for cam in cameras:
            for i in range(150):  # 10 Hz, 15 s
                ts = i * 100_000_000
                t = ts / 1e9
                if 6.0 <= t <= 9.0:
                    vec = target + rng.normal(scale=0.01, size=dim)
                else:
                    vec = rng.normal(scale=1.0, size=dim)
                    vec[0] = -abs(vec[0])
                b.add_frame("l", cam, ts, vec)
        store = b.build()
        scores = score_log_windows(store, "l", 15.0, cameras, target,
                                   window=3.0, stride=1.0, frames_per_window=5)
        assert len(scores) == 13
        best = max(scores, key=lambda ws: ws.score)
        assert best.start == 6.0
        # two views should roughly double the similarity mass
        assert best.score > 1.5

    def test_missing_view_contributes_zero(self):
        dim = 4
        b = StoreBuilder(dim)
        for i in range(30):
            b.add_frame("l", "cam_a", i * 500_000_000, np.ones(dim))
        store = b.build()
        scores = score_log_windows(store, "l", 15.0, ("cam_a", "cam_missing"),
                                   np.ones(dim))
        assert all(ws.score == pytest.approx(1.0) for ws in scores)


class TestSampleUniform:
    def test_fewer_than_n_takes_all(self):
        assert sample_uniform([1, 2, 3], 5) == [1, 2, 3]

    def test_even_spacing(self):
        assert sample_uniform(list(range(9)), 3) == [0, 4, 8]
