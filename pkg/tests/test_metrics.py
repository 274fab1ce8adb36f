import math

import numpy as np
import pytest

from smine.errors import InvalidInputError
from smine.mask import ScenarioMask
from smine.metrics import (
    Box3D,
    DEFAULT_ALPHAS,
    EvalInput,
    boxes_from_log,
    evaluate_benchmark,
    format_table,
    hota_full,
    hota_score,
    hota_temporal,
    iou_3d,
    log_f1,
    timestamp_f1,
)
from smine.tracks import LogManifest, Track

import hota_oracle
from test_tracks import make_state


def unit_box(cx=0.0, cy=0.0, cz=0.0, yaw=0.0, l=1.0, w=1.0, h=1.0):
    return Box3D(cx=cx, cy=cy, cz=cz, yaw=yaw, length=l, width=w, height=h)


class TestIou3d:
    def test_identical_boxes(self):
        b = unit_box(l=4.0, w=2.0, h=1.5, yaw=0.7)
        assert iou_3d(b, b) == pytest.approx(1.0)

    def test_disjoint(self):
        assert iou_3d(unit_box(), unit_box(cx=5.0)) == 0.0

    def test_axis_aligned_partial_overlap_analytic(self):
        # quarter shift along x on unit cubes: inter 0.75, union 1.25
        a = unit_box()
        b = unit_box(cx=0.25)
        assert iou_3d(a, b) == pytest.approx(0.75 / 1.25, abs=1e-12)

    def test_height_overlap(self):
        a = unit_box()
        b = unit_box(cz=0.5)  # half vertical overlap
        assert iou_3d(a, b) == pytest.approx(0.5 / 1.5, abs=1e-12)
        assert iou_3d(unit_box(), unit_box(cz=2.0)) == 0.0

    def test_rotated_45_degrees_monte_carlo(self):
        a = unit_box(l=2.0, w=2.0)
        b = unit_box(l=2.0, w=2.0, yaw=math.pi / 4)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1.5, 1.5, size=(200_000, 2))

        def inside(box, p):
            c, s = math.cos(-box.yaw), math.sin(-box.yaw)
            x = c * (p[:, 0] - box.cx) - s * (p[:, 1] - box.cy)
            y = s * (p[:, 0] - box.cx) + c * (p[:, 1] - box.cy)
            return (np.abs(x) <= box.length / 2) & (np.abs(y) <= box.width / 2)

        in_a, in_b = inside(a, pts), inside(b, pts)
        area = 9.0
        inter = in_a.__and__(in_b).mean() * area
        union = (in_a | in_b).mean() * area
        expected = inter / union  # height overlap is total
        assert iou_3d(a, b) == pytest.approx(expected, abs=0.01)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = unit_box(*rng.uniform(-2, 2, size=3), yaw=rng.uniform(-3, 3),
                         l=rng.uniform(0.5, 3), w=rng.uniform(0.5, 3), h=rng.uniform(0.5, 3))
            b = unit_box(*rng.uniform(-2, 2, size=3), yaw=rng.uniform(-3, 3),
                         l=rng.uniform(0.5, 3), w=rng.uniform(0.5, 3), h=rng.uniform(0.5, 3))
            assert iou_3d(a, b) == pytest.approx(iou_3d(b, a), abs=1e-12)
            assert 0.0 <= iou_3d(a, b) <= 1.0


def counting_ts_oracle(pred, gt):
    pred, gt = set(pred), set(gt)
    if not pred and not gt:
        return (1.0, 1.0, 1.0)
    tp = sum(1 for t in pred if t in gt)
    p = tp / len(pred) if pred else 0.0
    r = tp / len(gt) if gt else 0.0
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return (p, r, f1)


class TestTimestampF1:
    def test_perfect(self):
        assert timestamp_f1({1, 2}, {1, 2}) == (1.0, 1.0, 1.0)

    def test_documented_example(self):
        p, r, f1 = timestamp_f1({3, 4, 5}, {2, 3, 4})
        assert (p, r) == (2 / 3, 2 / 3)
        assert f1 == pytest.approx(2 / 3)

    def test_empty_pred_nonempty_gt(self):
        assert timestamp_f1(set(), {1}) == (0.0, 0.0, 0.0)

    def test_empty_vs_empty_is_perfect(self):
        assert timestamp_f1(set(), set()) == (1.0, 1.0, 1.0)

    def test_symmetric_f1(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            pred = set(rng.integers(0, 30, size=rng.integers(0, 15)).tolist())
            gt = set(rng.integers(0, 30, size=rng.integers(0, 15)).tolist())
            assert timestamp_f1(pred, gt)[2] == timestamp_f1(gt, pred)[2]

    def test_matches_counting_oracle_randomized(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            pred = set(rng.integers(0, 40, size=rng.integers(0, 20)).tolist())
            gt = set(rng.integers(0, 40, size=rng.integers(0, 20)).tolist())
            assert timestamp_f1(pred, gt) == counting_ts_oracle(pred, gt)


def counting_log_oracle(decisions):
    tp = sum(1 for p, g in decisions if p and g)
    fp = sum(1 for p, g in decisions if p and not g)
    fn = sum(1 for p, g in decisions if not p and g)
    if tp == fp == fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


class TestLogF1:
    def test_all_correct_positives(self):
        assert log_f1([(True, True)] * 4) == 1.0

    def test_one_tp_one_fp(self):
        assert log_f1([(True, True), (True, False)]) == pytest.approx(2 / 3)

    def test_vacuous_all_negative(self):
        assert log_f1([(False, False)] * 3) == 1.0

    def test_matches_counting_oracle_randomized(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            n = int(rng.integers(1, 20))
            decisions = [(bool(rng.integers(2)), bool(rng.integers(2)))
                         for _ in range(n)]
            assert log_f1(decisions) == counting_log_oracle(decisions)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            log_f1([])


def random_tracks_case(rng, max_tracks=3, max_frames=10):
    """Random boxed pred/gt dictionaries with overlapping geometry."""
    frames = [i * 100_000_000 for i in range(int(rng.integers(1, max_frames + 1)))]
    gt, pred = {}, {}
    n_gt = int(rng.integers(1, max_tracks + 1))
    n_pred = int(rng.integers(1, max_tracks + 1))
    centers = {i: rng.uniform(-4, 4, size=2) for i in range(max(n_gt, n_pred))}
    for ts in frames:
        for i in range(n_gt):
            if rng.random() < 0.8:
                cx, cy = centers[i] + rng.normal(0, 0.3, size=2)
                gt[(f"g{i}", ts)] = unit_box(cx, cy, 0.0, rng.uniform(-0.3, 0.3),
                                             l=2.0, w=1.0, h=1.5)
        for i in range(n_pred):
            if rng.random() < 0.8:
                cx, cy = centers[i] + rng.normal(0, 0.3, size=2)
                pred[(f"p{i}", ts)] = unit_box(cx, cy, 0.0, rng.uniform(-0.3, 0.3),
                                               l=2.0, w=1.0, h=1.5)
    return pred, gt


class TestHota:
    def test_perfect_prediction_is_one(self):
        rng = np.random.default_rng(5)
        pred, gt = {}, {}
        for i in range(3):
            for ts in range(5):
                box = unit_box(float(i * 4), float(ts), 0.0, 0.1 * i, l=2.0, w=1.0)
                gt[(f"t{i}", ts)] = box
                pred[(f"t{i}", ts)] = box
        assert hota_score(pred, gt) == 1.0

    def test_empty_pred_vs_nonempty_gt(self):
        gt = {("g0", 0): unit_box()}
        assert hota_score({}, gt) == 0.0
        assert hota_score(gt, {}) == 0.0

    def test_both_empty(self):
        assert hota_score({}, {}) == 1.0

    def test_single_pair_iou_06_matches_per_threshold_oracle(self):
        # IoU exactly 0.6 on every frame with consistent identity
        pred, gt = {}, {}
        for ts in range(5):
            gt[("g0", ts)] = unit_box(cy=float(ts) * 3)
            pred[("p0", ts)] = unit_box(cx=0.25, cy=float(ts) * 3)
        got = hota_score(pred, gt)
        assert got == hota_oracle.oracle_hota(pred, gt)
        matched_alphas = sum(1 for a in DEFAULT_ALPHAS if 0.6 >= a - 1e-12)
        assert got == pytest.approx(matched_alphas / len(DEFAULT_ALPHAS))

    def test_identity_swap_penalizes_association(self):
        # two gt tracks; predictions swap identities halfway
        pred, gt = {}, {}
        for ts in range(6):
            gt[("a", ts)] = unit_box(cy=0.0, cx=float(ts))
            gt[("b", ts)] = unit_box(cy=8.0, cx=float(ts))
            pa, pb = ("x", "y") if ts < 3 else ("y", "x")
            pred[(pa, ts)] = unit_box(cy=0.0, cx=float(ts))
            pred[(pb, ts)] = unit_box(cy=8.0, cx=float(ts))
        score = hota_score(pred, gt)
        assert score == hota_oracle.oracle_hota(pred, gt)
        assert score < 1.0  # perfect detection, broken association
        # per match: TPA=3, FNA=3 (other-pred frames), FPA=3 -> A = 1/3
        assert score == pytest.approx(math.sqrt(1 / 3), abs=1e-9)

    def test_randomized_cases_match_exhaustive_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            pred, gt = random_tracks_case(rng)
            assert hota_score(pred, gt) == hota_oracle.oracle_hota(pred, gt)

    def test_track_id_permutation_invariance(self):
        rng = np.random.default_rng(7)
        pred, gt = random_tracks_case(rng)
        renamed_pred = {(f"renamed_{t}", ts): b for (t, ts), b in pred.items()}
        renamed_gt = {(f"other_{t}", ts): b for (t, ts), b in gt.items()}
        assert hota_score(pred, gt) == pytest.approx(
            hota_score(renamed_pred, renamed_gt), abs=1e-12
        )

    def test_range_in_unit_interval(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            pred, gt = random_tracks_case(rng)
            assert 0.0 <= hota_score(pred, gt) <= 1.0


class TestHotaTemporal:
    def test_restriction_to_scenario_ranges(self):
        pred, gt = {}, {}
        for ts_s in range(10):
            ts = ts_s * 1_000_000_000
            gt[("g0", ts)] = unit_box(cy=float(ts_s))
            # predictions correct inside [2, 5] s, garbage elsewhere
            if 2 <= ts_s <= 5:
                pred[("p0", ts)] = unit_box(cy=float(ts_s))
            else:
                pred[("p0", ts)] = unit_box(cy=float(ts_s) + 50.0)
        eval_input = EvalInput(pred=pred, gt=gt, scenario_ranges=((2.0, 5.0),))
        assert hota_temporal(eval_input) == 1.0
        assert hota_full(eval_input) < 1.0

    def test_empty_after_restriction(self):
        gt = {("g0", 9_000_000_000): unit_box()}
        eval_input = EvalInput(pred={}, gt=gt, scenario_ranges=((0.0, 1.0),))
        assert hota_temporal(eval_input) == 1.0  # both sides empty in range


class TestBenchmarkAggregation:
    def _log_with_mask(self, log_id="log0", n=6):
        track = Track("veh", "VEHICLE",
                      tuple(make_state(i * 100_000_000, tx=float(i)) for i in range(n)))
        log = LogManifest(log_id=log_id, duration=2.0, frame_rate=10.0, tracks=(track,))
        mask = ScenarioMask.single(log_id, {("veh", i * 100_000_000) for i in range(2, 5)})
        return log, mask

    def test_perfect_predictions_score_one_everywhere(self):
        log, mask = self._log_with_mask()
        result = evaluate_benchmark({"log0": log}, {"log0": mask}, {"log0": mask})
        assert result.hota_t == 1.0
        assert result.hota == 1.0
        assert result.ts_f1 == 1.0
        assert result.log_f1 == 1.0

    def test_boxes_from_log_rejects_foreign_mask(self):
        log, _ = self._log_with_mask()
        bad = ScenarioMask.single("log0", {("ghost", 0)})
        with pytest.raises(InvalidInputError):
            boxes_from_log(log, bad)

    def test_true_negative_logs_counted_via_log_f1(self):
        log_a, mask = self._log_with_mask("log_a")
        log_b, _ = self._log_with_mask("log_b")
        result = evaluate_benchmark(
            {"log_a": log_a, "log_b": log_b},
            {"log_a": mask},  # log_b predicted empty
            {"log_a": mask},  # log_b truly empty
        )
        assert result.log_f1 == 1.0
        assert result.per_log[1].hota_t is None  # skipped, not averaged

    def test_format_table_contains_summary(self):
        log, mask = self._log_with_mask()
        result = evaluate_benchmark({"log0": log}, {"log0": mask}, {"log0": mask})
        table = format_table(result)
        assert "HOTA-T" in table and "Log-F1" in table
        assert "log0" in table
