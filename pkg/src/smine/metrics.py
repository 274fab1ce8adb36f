"""Benchmark metrics over predicted vs ground-truth scenario masks:
Timestamp-F1, Log-F1, and HOTA (full-log and scenario-timeframe variants).

Conventions, documented because toolkits differ: empty-vs-empty counts as
perfect (1.0) for every metric; one-sided emptiness scores 0.0 for HOTA
and precision/recall.  3D IoU is computed on yaw-aligned boxes as 2D
footprint polygon intersection times vertical overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from shapely.geometry import Polygon

from .errors import InvalidInputError
from .mask import ScenarioMask
from .tracks import NS_PER_S, LogManifest, yaw_from_quaternion

DEFAULT_ALPHAS = tuple(round(0.05 * i, 2) for i in range(1, 20))  # 0.05 .. 0.95

_ELIGIBLE_BONUS = 1.0e6  # dominates any per-frame association mass


@dataclass(frozen=True)
class Box3D:
    """Yaw-aligned 3D box: center, heading, and dimensions."""

    cx: float
    cy: float
    cz: float
    yaw: float
    length: float
    width: float
    height: float

    def footprint(self) -> Polygon:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.length / 2.0, self.width / 2.0
        corners = [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)]
        return Polygon([
            (self.cx + c * x - s * y, self.cy + s * x + c * y) for x, y in corners
        ])


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Footprint polygon intersection area times vertical overlap over union."""
    inter_2d = a.footprint().intersection(b.footprint()).area
    if inter_2d <= 0.0:
        return 0.0
    z_lo = max(a.cz - a.height / 2.0, b.cz - b.height / 2.0)
    z_hi = min(a.cz + a.height / 2.0, b.cz + b.height / 2.0)
    h_overlap = max(0.0, z_hi - z_lo)
    inter = inter_2d * h_overlap
    vol_a = a.length * a.width * a.height
    vol_b = b.length * b.width * b.height
    union = vol_a + vol_b - inter
    return inter / union if union > 0 else 0.0


Entry = tuple[str, int]  # (track_id, ts_ns)


@dataclass(frozen=True)
class EvalInput:
    """One log's predicted and ground-truth boxed mask entries plus the
    scenario time ranges ([start, end] seconds; empty means the whole log)."""

    pred: Mapping[Entry, Box3D]
    gt: Mapping[Entry, Box3D]
    scenario_ranges: tuple[tuple[float, float], ...] = ()


def boxes_from_log(log: LogManifest, mask: ScenarioMask) -> dict[Entry, Box3D]:
    """Attach each mask entry's 3D box from the log's track states."""
    out: dict[Entry, Box3D] = {}
    for track_id, ts in mask.for_log(log.log_id):
        track = log.tracks_by_id.get(track_id)
        if track is None:
            raise InvalidInputError(f"mask references unknown track {track_id!r}")
        idx = track.index_of_ts(ts)
        if idx is None:
            raise InvalidInputError(f"mask timestamp {ts} absent from track {track_id!r}")
        s = track.states[idx]
        out[(track_id, ts)] = Box3D(
            cx=s.tx, cy=s.ty, cz=s.tz,
            yaw=yaw_from_quaternion((s.qw, s.qx, s.qy, s.qz)),
            length=s.length, width=s.width, height=s.height,
        )
    return out


# --- frame-level and log-level F1 ----------------------------------------------


def timestamp_f1(pred: Iterable[int], gt: Iterable[int]) -> tuple[float, float, float]:
    """Precision/recall/F1 over per-frame binary labels.

    Empty vs empty is defined as perfect (1, 1, 1).
    """
    pred = frozenset(pred)
    gt = frozenset(gt)
    if not pred and not gt:
        return (1.0, 1.0, 1.0)
    tp = len(pred & gt)
    precision = tp / len(pred) if pred else 0.0
    recall = tp / len(gt) if gt else 0.0
    if precision + recall == 0.0:
        return (precision, recall, 0.0)
    return (precision, recall, 2.0 * precision * recall / (precision + recall))


def log_f1(decisions: Sequence[tuple[bool, bool]]) -> float:
    """F1 of per-log binary decisions, TP/FP/FN aggregated across logs.

    All-negative benchmarks (zero predicted and zero actual positives)
    count as perfect: 1.0.
    """
    if not decisions:
        raise InvalidInputError("need at least one log decision")
    tp = sum(1 for p, g in decisions if p and g)
    fp = sum(1 for p, g in decisions if p and not g)
    fn = sum(1 for p, g in decisions if not p and g)
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


# --- HOTA -----------------------------------------------------------------------


def _restrict(entries: Mapping[Entry, Box3D],
              ranges: tuple[tuple[float, float], ...]) -> dict[Entry, Box3D]:
    if not ranges:
        return dict(entries)
    bounds = [(round(a * NS_PER_S), round(b * NS_PER_S)) for a, b in ranges]
    return {
        key: box for key, box in entries.items()
        if any(lo <= key[1] <= hi for lo, hi in bounds)
    }


def _frame_data(pred: Mapping[Entry, Box3D], gt: Mapping[Entry, Box3D]):
    """Per frame: sorted id lists and the IoU similarity matrix."""
    frames = sorted({ts for _, ts in pred} | {ts for _, ts in gt})
    data = []
    for ts in frames:
        gt_ids = sorted(t for t, f in gt if f == ts)
        pred_ids = sorted(t for t, f in pred if f == ts)
        sim = np.zeros((len(gt_ids), len(pred_ids)))
        for i, g in enumerate(gt_ids):
            for j, p in enumerate(pred_ids):
                sim[i, j] = iou_3d(gt[(g, ts)], pred[(p, ts)])
        data.append((ts, gt_ids, pred_ids, sim))
    return data


def _global_alignment(frame_data):
    """Association potential between gt and pred identities, accumulated
    over frames from the per-frame IoU Jaccard fractions."""
    gt_ids = sorted({g for _, gids, _, _ in frame_data for g in gids})
    pred_ids = sorted({p for _, _, pids, _ in frame_data for p in pids})
    gi = {g: i for i, g in enumerate(gt_ids)}
    pi = {p: i for i, p in enumerate(pred_ids)}
    potential = np.zeros((len(gt_ids), len(pred_ids)))
    gt_count = np.zeros(len(gt_ids))
    pred_count = np.zeros(len(pred_ids))
    for _ts, gids, pids, sim in frame_data:
        if gids and pids:
            denom = sim.sum(axis=0)[None, :] + sim.sum(axis=1)[:, None] - sim
            frac = np.divide(sim, denom, out=np.zeros_like(sim), where=denom > 1e-12)
            for a, g in enumerate(gids):
                for b, p in enumerate(pids):
                    potential[gi[g], pi[p]] += frac[a, b]
        for g in gids:
            gt_count[gi[g]] += 1
        for p in pids:
            pred_count[pi[p]] += 1
    denom = gt_count[:, None] + pred_count[None, :] - potential
    align = np.divide(potential, denom, out=np.zeros_like(potential),
                      where=denom > 1e-12)
    return gi, pi, align


def _match_frames(frame_data, align, gi, pi, alpha: float):
    """Per frame, Hungarian assignment maximizing (eligible count, then
    association-weighted similarity) over pairs with IoU >= alpha."""
    matches = []  # (ts, gt_id, pred_id)
    for ts, gids, pids, sim in frame_data:
        if not gids or not pids:
            continue
        eligible = sim >= alpha - 1e-12
        if not eligible.any():
            continue
        score = np.zeros_like(sim)
        for a, g in enumerate(gids):
            for b, p in enumerate(pids):
                if eligible[a, b]:
                    score[a, b] = _ELIGIBLE_BONUS + align[gi[g], pi[p]] * sim[a, b]
        rows, cols = linear_sum_assignment(score, maximize=True)
        for a, b in zip(rows, cols):
            if eligible[a, b] and score[a, b] > 0:
                matches.append((ts, gids[a], pids[b]))
    return matches


def _hota_at_alpha(frame_data, align, gi, pi, alpha, n_gt, n_pred) -> float:
    matches = _match_frames(frame_data, align, gi, pi, alpha)
    tp = len(matches)
    fn = n_gt - tp
    fp = n_pred - tp
    if tp == 0:
        return 0.0
    det_a = tp / (tp + fn + fp)
    pair_tpa: dict[tuple[str, str], int] = {}
    gt_frames: dict[str, int] = {}
    pred_frames: dict[str, int] = {}
    for _ts, gids, pids, _sim in frame_data:
        for g in gids:
            gt_frames[g] = gt_frames.get(g, 0) + 1
        for p in pids:
            pred_frames[p] = pred_frames.get(p, 0) + 1
    for _ts, g, p in matches:
        pair_tpa[(g, p)] = pair_tpa.get((g, p), 0) + 1
    ass_sum = 0.0
    for _ts, g, p in sorted(matches):
        tpa = pair_tpa[(g, p)]
        # FNA/FPA: frames where the identity exists but is not in this match
        fna = gt_frames[g] - tpa
        fpa = pred_frames[p] - tpa
        ass_sum += tpa / (tpa + fna + fpa)
    ass_a = ass_sum / tp
    return math.sqrt(det_a * ass_a)


def hota_score(pred: Mapping[Entry, Box3D], gt: Mapping[Entry, Box3D],
               alphas: Sequence[float] = DEFAULT_ALPHAS) -> float:
    """HOTA averaged over the localization threshold grid."""
    if not pred and not gt:
        return 1.0
    if not pred or not gt:
        return 0.0
    frame_data = _frame_data(pred, gt)
    gi, pi, align = _global_alignment(frame_data)
    scores = [
        _hota_at_alpha(frame_data, align, gi, pi, alpha, len(gt), len(pred))
        for alpha in alphas
    ]
    return float(sum(scores) / len(scores))


def hota_temporal(eval_input: EvalInput,
                  alphas: Sequence[float] = DEFAULT_ALPHAS) -> float:
    """HOTA restricted to the scenario-relevant timeframe on both sides."""
    pred = _restrict(eval_input.pred, eval_input.scenario_ranges)
    gt = _restrict(eval_input.gt, eval_input.scenario_ranges)
    return hota_score(pred, gt, alphas)


def hota_full(eval_input: EvalInput,
              alphas: Sequence[float] = DEFAULT_ALPHAS) -> float:
    """HOTA over the full log (no timeframe restriction)."""
    return hota_score(eval_input.pred, eval_input.gt, alphas)


# --- benchmark aggregation -------------------------------------------------------


@dataclass
class LogResult:
    log_id: str
    hota_t: Optional[float]
    hota: Optional[float]
    ts_precision: float
    ts_recall: float
    ts_f1: float
    pred_positive: bool
    gt_positive: bool


@dataclass
class BenchmarkResult:
    per_log: list[LogResult] = field(default_factory=list)
    hota_t: float = 0.0
    hota: float = 0.0
    ts_f1: float = 0.0
    log_f1: float = 0.0

    def summary(self) -> dict:
        return {
            "HOTA-T": self.hota_t,
            "HOTA": self.hota,
            "TS-F1": self.ts_f1,
            "Log-F1": self.log_f1,
        }


def evaluate_benchmark(
    logs: Mapping[str, LogManifest],
    predictions: Mapping[str, ScenarioMask],
    ground_truth: Mapping[str, ScenarioMask],
    scenario_ranges: Optional[Mapping[str, tuple]] = None,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
) -> BenchmarkResult:
    """Score all logs; HOTA columns average over logs where either side is
    non-empty (all-negative logs are credited through Log-F1 instead), and
    the timestamp F1 aggregates frame counts across logs."""
    result = BenchmarkResult()
    decisions = []
    ts_tp = ts_fp = ts_fn = 0
    hota_t_vals, hota_vals = [], []
    for log_id in sorted(logs):
        log = logs[log_id]
        pred_mask = predictions.get(log_id, ScenarioMask.empty())
        gt_mask = ground_truth.get(log_id, ScenarioMask.empty())
        ranges = tuple((scenario_ranges or {}).get(log_id, ()))
        eval_input = EvalInput(
            pred=boxes_from_log(log, pred_mask),
            gt=boxes_from_log(log, gt_mask),
            scenario_ranges=ranges,
        )
        pred_ts = pred_mask.timestamps(log_id)
        gt_ts = gt_mask.timestamps(log_id)
        precision, recall, f1 = timestamp_f1(pred_ts, gt_ts)
        ts_tp += len(pred_ts & gt_ts)
        ts_fp += len(pred_ts - gt_ts)
        ts_fn += len(gt_ts - pred_ts)
        nontrivial = bool(eval_input.pred) or bool(eval_input.gt)
        h_t = hota_temporal(eval_input, alphas) if nontrivial else None
        h = hota_full(eval_input, alphas) if nontrivial else None
        if h_t is not None:
            hota_t_vals.append(h_t)
            hota_vals.append(h)
        decisions.append((not pred_mask.is_empty(), not gt_mask.is_empty()))
        result.per_log.append(LogResult(
            log_id=log_id, hota_t=h_t, hota=h,
            ts_precision=precision, ts_recall=recall, ts_f1=f1,
            pred_positive=not pred_mask.is_empty(),
            gt_positive=not gt_mask.is_empty(),
        ))
    result.log_f1 = log_f1(decisions)
    if ts_tp == ts_fp == ts_fn == 0:
        result.ts_f1 = 1.0
    else:
        result.ts_f1 = 2.0 * ts_tp / (2.0 * ts_tp + ts_fp + ts_fn)
    result.hota_t = float(np.mean(hota_t_vals)) if hota_t_vals else 1.0
    result.hota = float(np.mean(hota_vals)) if hota_vals else 1.0
    return result


def format_table(result: BenchmarkResult) -> str:
    """Fixed-width table in the benchmark's column order."""
    lines = [f"{'log_id':<12} {'HOTA-T':>8} {'HOTA':>8} {'TS-F1':>8}"]
    for r in result.per_log:
        h_t = f"{r.hota_t:.4f}" if r.hota_t is not None else "-"
        h = f"{r.hota:.4f}" if r.hota is not None else "-"
        lines.append(f"{r.log_id:<12} {h_t:>8} {h:>8} {r.ts_f1:>8.4f}")
    lines.append("-" * 40)
    lines.append(
        f"{'summary':<12} {result.hota_t:>8.4f} {result.hota:>8.4f} "
        f"{result.ts_f1:>8.4f}  Log-F1 {result.log_f1:.4f}"
    )
    return "\n".join(lines)
