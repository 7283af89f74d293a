"""Evaluation: detection, semantic IoU, instance AP, panoptic quality, view-level.

Degenerate denominators never raise:

* no true positives: MODP = 0; precision = 1 when there are also no false
  positives, else 0; recall = 1 when there are also no misses, else 0.
* no ground truth: MODA = 1 without false positives, else 0.
* no instances on either side: AP = 1.
* a class absent from both prediction and ground truth has IoU NaN and is
  left out of mIoU.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import (
    AP_THRESHOLDS, BACKGROUND_CLASSES, MATCH_DISTANCE, NUM_SEMANTIC_CLASSES,
    PANOPTIC_THING_OFFSET, PQ_MATCH_IOU, STUFF_CLASSES, VIEW_AP_THRESHOLDS,
    VIEW_CLASSES, SemanticClass,
)
from .volumes import panoptic_to_instances, panoptic_to_semantic


# ----------------------------------------------------------------- detection

@dataclass
class MatchReport:
    pairs: list              # (pred index, gt index, distance)
    fp_count: int
    fn_count: int
    threshold: float = MATCH_DISTANCE

    @property
    def tp_count(self) -> int:
        return len(self.pairs)

    @property
    def distances(self) -> np.ndarray:
        return np.array([d for _, _, d in self.pairs], dtype=np.float64)


def _xy(points) -> np.ndarray:
    if len(points) == 0:
        return np.empty((0, 2))
    if hasattr(points[0], "x"):
        return np.array([[p.x, p.y] for p in points], dtype=np.float64)
    return np.asarray(points, dtype=np.float64).reshape(len(points), -1)[:, :2]


def match_detections(preds, gts, t: float = MATCH_DISTANCE) -> MatchReport:
    """One-to-one matching of predicted and true ground-plane locations.

    Only pairs closer than ``t`` may match. Among admissible matchings the
    one with the most pairs wins, then the smallest total distance.
    """
    if not t > 0:
        raise ValueError(f"match threshold must be positive, got {t}")
    p, g = _xy(preds), _xy(gts)
    if len(p) == 0 or len(g) == 0:
        return MatchReport([], len(p), len(g), t)
    dist = np.hypot(p[:, None, 0] - g[None, :, 0], p[:, None, 1] - g[None, :, 1])
    allowed = dist < t
    # any forbidden pair costs more than every admissible matching together
    big = t * (min(len(p), len(g)) + 1)
    cost = np.where(allowed, dist, big)
    rows, cols = linear_sum_assignment(cost)
    pairs = [(int(r), int(c), float(dist[r, c])) for r, c in zip(rows, cols) if allowed[r, c]]
    pairs.sort()
    return MatchReport(pairs, len(p) - len(pairs), len(g) - len(pairs), t)


def _merge_reports(reports: Sequence[MatchReport]):
    tp = sum(r.tp_count for r in reports)
    fp = sum(r.fp_count for r in reports)
    fn = sum(r.fn_count for r in reports)
    closeness = sum(float(np.sum(1.0 - r.distances / r.threshold)) for r in reports)
    return tp, fp, fn, closeness


def detection_scores(report) -> dict:
    """MODA, MODP, precision, recall, F1 from one MatchReport or a list (pooled counts)."""
    reports = [report] if isinstance(report, MatchReport) else list(report)
    tp, fp, fn, closeness = _merge_reports(reports)
    if tp + fn > 0:
        moda = 1.0 - (fp + fn) / (tp + fn)
    else:
        moda = 1.0 if fp == 0 else 0.0
    modp = closeness / tp if tp > 0 else 0.0
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"moda": moda, "modp": modp, "precision": precision, "recall": recall, "f1": f1,
            "tp": tp, "fp": fp, "fn": fn}


# ----------------------------------------------------------------- semantic

def _labels(x) -> np.ndarray:
    return np.asarray(getattr(x, "labels", x))


def _check_same(pred, gt):
    ps, gs = getattr(pred, "spec", None), getattr(gt, "spec", None)
    if ps is not None and gs is not None and ps != gs:
        raise ValueError("prediction and ground truth use different grids")
    if _labels(pred).shape != _labels(gt).shape:
        raise ValueError(f"shape mismatch: {_labels(pred).shape} vs {_labels(gt).shape}")


def _iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.count_nonzero(a & b)
    union = np.count_nonzero(a | b)
    return inter / union if union else math.nan


def semantic_iou(pred, gt, classes: Iterable[int] = tuple(range(NUM_SEMANTIC_CLASSES)),
                 background: Optional[Sequence[int]] = BACKGROUND_CLASSES) -> dict:
    """Per-class IoU, mIoU over ``classes`` and an optional background super-class.

    Returns ``{"iou": {name: value}, "miou": value}``; the super-class, when
    requested, is reported as ``"Background"`` and is not part of mIoU.
    """
    _check_same(pred, gt)
    p, g = _labels(pred), _labels(gt)
    ious = {}
    for c in classes:
        ious[SemanticClass(c).name.capitalize()] = _iou(p == c, g == c)
    vals = [v for v in ious.values() if not math.isnan(v)]
    miou = float(np.mean(vals)) if vals else math.nan
    if background:
        ious["Background"] = _iou(np.isin(p, background), np.isin(g, background))
    return {"iou": ious, "miou": miou}


# ----------------------------------------------------------------- instances

def _ids(x) -> np.ndarray:
    return np.asarray(getattr(x, "ids", x))


def _segment_ious(pred_ids: np.ndarray, gt_ids: np.ndarray):
    """Ids (excluding 0) and their pairwise IoU matrix."""
    p = pred_ids.ravel().astype(np.int64)
    g = gt_ids.ravel().astype(np.int64)
    pu, p_area = np.unique(p[p > 0], return_counts=True)
    gu, g_area = np.unique(g[g > 0], return_counts=True)
    iou = np.zeros((len(pu), len(gu)))
    if len(pu) and len(gu):
        both = (p > 0) & (g > 0)
        pairs, inter = np.unique(np.stack([p[both], g[both]], 1), axis=0, return_counts=True)
        pi = np.searchsorted(pu, pairs[:, 0])
        gi = np.searchsorted(gu, pairs[:, 1])
        iou[pi, gi] = inter / (p_area[pi] + g_area[gi] - inter)
    return pu, gu, iou


def greedy_match(iou: np.ndarray, threshold: float) -> list:
    """One-to-one pairs by descending IoU, each with IoU >= threshold."""
    pi, gi = np.nonzero(iou >= threshold)
    if len(pi) == 0:
        return []
    order = np.lexsort((gi, pi, -iou[pi, gi]))
    used_p, used_g, out = set(), set(), []
    for k in order:
        a, b = int(pi[k]), int(gi[k])
        if a in used_p or b in used_g:
            continue
        used_p.add(a)
        used_g.add(b)
        out.append((a, b))
    return out


def instance_ap(pred, gt, thresholds: Sequence[float] = AP_THRESHOLDS) -> float:
    """Mean over IoU thresholds of TP / (TP + FP + FN) under greedy mask matching."""
    thresholds = list(thresholds)
    if not thresholds:
        raise ValueError("need at least one IoU threshold")
    pu, gu, iou = _segment_ious(_ids(pred), _ids(gt))
    if len(pu) == 0 and len(gu) == 0:
        return 1.0
    scores = []
    for t in thresholds:
        tp = len(greedy_match(iou, t))
        scores.append(tp / (len(pu) + len(gu) - tp))
    return float(np.mean(scores))


# ----------------------------------------------------------------- panoptic

@dataclass
class PanopticResult:
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int
    per_class: dict = field(default_factory=dict)


def _pq_from_counts(iou_sum: float, tp: int, fp: int, fn: int):
    denom = tp + 0.5 * fp + 0.5 * fn
    sq = iou_sum / tp if tp else 0.0
    rq = tp / denom if denom else 0.0
    return sq * rq, sq, rq


def panoptic_quality(pred, gt, stuff_classes: Sequence[int] = STUFF_CLASSES) -> PanopticResult:
    """PQ / SQ / RQ with IoU > 0.5 matching.

    Stuff classes form one segment each; every pedestrian instance is its own
    segment. The aggregate pools all segments of the evaluated classes, so
    ``pq == sq * rq`` holds for it as well as for each class. Classes with no
    segment on either side are skipped.
    """
    _check_same(pred, gt)
    p, g = _labels(pred).ravel(), _labels(gt).ravel()
    per_class = {}
    totals = [0.0, 0, 0, 0]

    def account(name, iou_sum, tp, fp, fn):
        if tp + fp + fn == 0:
            return
        pq, sq, rq = _pq_from_counts(iou_sum, tp, fp, fn)
        per_class[name] = {"pq": pq, "sq": sq, "rq": rq, "tp": tp, "fp": fp, "fn": fn}
        totals[0] += iou_sum
        totals[1] += tp
        totals[2] += fp
        totals[3] += fn

    for c in stuff_classes:
        pm, gm = p == c, g == c
        has_p, has_g = pm.any(), gm.any()
        iou = _iou(pm, gm) if (has_p or has_g) else 0.0
        matched = has_p and has_g and iou > PQ_MATCH_IOU
        account(SemanticClass(c).name.capitalize(),
                iou if matched else 0.0, int(matched),
                int(has_p and not matched), int(has_g and not matched))

    pu, gu, iou = _segment_ious(panoptic_to_instances(p), panoptic_to_instances(g))
    pi, gi = np.nonzero(iou > PQ_MATCH_IOU)
    if len(set(pi.tolist())) != len(pi) or len(set(gi.tolist())) != len(gi):
        raise AssertionError("a segment matched twice above IoU 0.5")
    account("Pedestrian", float(iou[pi, gi].sum()), len(pi), len(pu) - len(pi), len(gu) - len(pi))

    iou_sum, tp, fp, fn = totals
    pq, sq, rq = _pq_from_counts(iou_sum, tp, fp, fn)
    if tp + fp + fn == 0:
        pq = sq = rq = 1.0
    return PanopticResult(pq, sq, rq, tp, fp, fn, per_class)


# ----------------------------------------------------------------- reports

@dataclass
class MetricReport:
    moda: Optional[float] = None
    modp: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    iou: dict = field(default_factory=dict)
    miou: Optional[float] = None
    ap: Optional[float] = None
    pq: Optional[float] = None
    sq: Optional[float] = None
    rq: Optional[float] = None
    per_view: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _json_safe(asdict(self))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return None if math.isnan(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def reduce_to_view_classes(sem: np.ndarray, keep: Sequence[int] = VIEW_CLASSES) -> np.ndarray:
    """Map every class outside ``keep`` to Free (unlabelled)."""
    sem = np.asarray(sem)
    return np.where(np.isin(sem, keep), sem, SemanticClass.FREE).astype(np.uint8)


def _reduce_panoptic(pan: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    pan = np.asarray(pan, dtype=np.uint32)
    stuff = pan < PANOPTIC_THING_OFFSET
    drop = stuff & ~np.isin(pan, keep)
    return np.where(drop, 0, pan).astype(np.uint32)


def view_report(pred_pan: np.ndarray, gt_pan: np.ndarray, classes: Sequence[int] = VIEW_CLASSES,
                thresholds: Sequence[float] = VIEW_AP_THRESHOLDS) -> dict:
    """All 3-D metrics applied to one pair of 2-D panoptic masks."""
    pred_pan = _reduce_panoptic(pred_pan, classes)
    gt_pan = _reduce_panoptic(gt_pan, classes)
    if pred_pan.shape != gt_pan.shape:
        raise ValueError(f"mask shapes differ: {pred_pan.shape} vs {gt_pan.shape}")
    sem = semantic_iou(panoptic_to_semantic(pred_pan), panoptic_to_semantic(gt_pan),
                       classes, background=None)
    ap = instance_ap(panoptic_to_instances(pred_pan), panoptic_to_instances(gt_pan), thresholds)
    stuff = [c for c in classes if c in STUFF_CLASSES]
    pan = panoptic_quality(pred_pan, gt_pan, stuff)
    return {"iou": sem["iou"], "miou": sem["miou"], "ap": ap,
            "pq": pan.pq, "sq": pan.sq, "rq": pan.rq}


def _nanmean(vals) -> float:
    vals = [v for v in vals if v is not None and not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


def view_level_report(pred_masks: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray],
                      classes: Sequence[int] = VIEW_CLASSES,
                      thresholds: Sequence[float] = VIEW_AP_THRESHOLDS) -> MetricReport:
    """Per-view metrics on panoptic masks, averaged with equal weight per view."""
    if len(pred_masks) != len(gt_masks):
        raise ValueError(f"{len(pred_masks)} predicted views but {len(gt_masks)} ground-truth views")
    views = [view_report(p, g, classes, thresholds) for p, g in zip(pred_masks, gt_masks)]
    if not views:
        return MetricReport()
    names = list(views[0]["iou"])
    iou = {n: _nanmean([v["iou"][n] for v in views]) for n in names}
    return MetricReport(
        iou=iou,
        miou=_nanmean([v["miou"] for v in views]),
        ap=_nanmean([v["ap"] for v in views]),
        pq=_nanmean([v["pq"] for v in views]),
        sq=_nanmean([v["sq"] for v in views]),
        rq=_nanmean([v["rq"] for v in views]),
        per_view=views,
    )


def volume_report(pred_sem, gt_sem, pred_pan=None, gt_pan=None,
                  thresholds: Sequence[float] = AP_THRESHOLDS) -> MetricReport:
    """3-D semantic / instance / panoptic metrics for one frame."""
    sem = semantic_iou(pred_sem, gt_sem)
    report = MetricReport(iou=sem["iou"], miou=sem["miou"])
    if pred_pan is not None and gt_pan is not None:
        report.ap = instance_ap(panoptic_to_instances(_labels(pred_pan)),
                                panoptic_to_instances(_labels(gt_pan)), thresholds)
        pan = panoptic_quality(pred_pan, gt_pan)
        report.pq, report.sq, report.rq = pan.pq, pan.sq, pan.rq
    return report
