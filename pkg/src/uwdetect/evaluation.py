"""Detection evaluation: greedy matching, precision/recall curves, COCO-style
101-point AP and mAP, the F-beta score, and the confidence-threshold sweep
behind early-warning calibration.

Ground truth is passed as a mapping ``image_id -> list of BoundingBox``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .boxgeom import iou
from .dataset_io import BoundingBox, Detection

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_GRID = tuple(i / 100 for i in range(101))
SCHEMA_VERSION = 1


class EvaluationError(ValueError):
    pass


@dataclass
class MatchResult:
    """Outcome of matching detections against ground truth.

    ``matches`` holds ``(detection, gt_index or None, is_tp)`` in visit
    order (descending confidence, ties by input order).
    """

    matches: List[tuple]
    false_negatives: Dict[str, int]

    @property
    def tp(self) -> int:
        return sum(1 for _, _, hit in self.matches if hit)

    @property
    def fp(self) -> int:
        return len(self.matches) - self.tp

    @property
    def fn(self) -> int:
        return sum(self.false_negatives.values())

    @property
    def precision(self) -> float:
        return self.tp / len(self.matches) if self.matches else 0.0

    @property
    def recall(self) -> float:
        total = self.tp + self.fn
        return self.tp / total if total else 0.0


def confidence_order(dets: Sequence[Detection]) -> List[int]:
    """Indices by descending confidence; stable, so ties keep input order."""
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def match_detections(dets: Sequence[Detection], gts: Mapping[str, Sequence[BoundingBox]],
                     iou_threshold: float = 0.5, class_aware: bool = True) -> MatchResult:
    """Greedy matching: each detection, highest confidence first, takes the
    unmatched ground-truth box (same class unless ``class_aware`` is off)
    with the highest IoU at or above the threshold; otherwise it is a false
    positive."""
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    taken = {img: [False] * len(boxes) for img, boxes in gts.items()}
    matches = []
    for i in confidence_order(dets):
        d = dets[i]
        boxes = gts.get(d.image_id, ())
        used = taken.get(d.image_id, [])
        best, best_iou = None, iou_threshold
        for j, g in enumerate(boxes):
            if used[j] or (class_aware and g.class_id != d.box.class_id):
                continue
            overlap = iou(d.box, g)
            if overlap >= best_iou and (best is None or overlap > best_iou):
                best, best_iou = j, overlap
        if best is not None:
            used[best] = True
        matches.append((d, best, best is not None))
    fn = {img: flags.count(False) for img, flags in taken.items()}
    return MatchResult(matches, fn)


@dataclass
class PRCurve:
    """Cumulative precision/recall as the confidence cut is lowered one
    detection at a time."""

    confidences: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    n_gt: int
    tp: np.ndarray = field(default=None)
    fp: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.confidences)


def pr_curve(dets: Sequence[Detection], gts: Mapping[str, Sequence[BoundingBox]],
             iou_threshold: float = 0.5, class_id: Optional[int] = None) -> PRCurve:
    """Curve for one class (or all detections when ``class_id`` is None,
    still matching class-aware)."""
    if class_id is not None:
        dets = [d for d in dets if d.box.class_id == class_id]
        gts = {img: [g for g in boxes if g.class_id == class_id] for img, boxes in gts.items()}
    n_gt = sum(len(b) for b in gts.values())
    result = match_detections(dets, gts, iou_threshold)
    hits = np.array([hit for _, _, hit in result.matches], dtype=bool)
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    conf = np.array([d.confidence for d, _, _ in result.matches], dtype=np.float64)
    kept = np.arange(1, len(hits) + 1)
    precision = tp / kept if len(hits) else np.zeros(0)
    recall = tp / n_gt if n_gt else np.zeros(len(hits))
    return PRCurve(conf, precision, recall, n_gt, tp, fp)


def average_precision(curve: PRCurve) -> float:
    """Mean over recall levels 0, 0.01, ..., 1 of the best precision
    reached at or beyond that recall (0 where the level is never reached)."""
    if len(curve) == 0:
        return 0.0
    # suffix max: best precision from each point onward
    envelope = np.maximum.accumulate(curve.precision[::-1])[::-1]
    grid = np.asarray(RECALL_GRID)
    idx = np.searchsorted(curve.recall, grid, side="left")
    reached = idx < len(curve)
    values = np.zeros(len(grid))
    values[reached] = envelope[idx[reached]]
    return math.fsum(values) / len(grid)


@dataclass
class MapResult:
    map50: float
    map5095: float
    per_class: List[dict]


def map_scores(dets: Sequence[Detection], gts: Mapping[str, Sequence[BoundingBox]],
               iou_thresholds: Sequence[float] = IOU_THRESHOLDS) -> MapResult:
    """Per-class AP at each IoU threshold, averaged over classes that have
    ground truth, then over thresholds."""
    classes = sorted({g.class_id for boxes in gts.values() for g in boxes})
    if not classes:
        raise EvaluationError("nothing to evaluate: no ground-truth boxes")
    table = np.zeros((len(classes), len(iou_thresholds)))
    for ci, c in enumerate(classes):
        for ti, t in enumerate(iou_thresholds):
            table[ci, ti] = average_precision(pr_curve(dets, gts, t, class_id=c))
    per_class = []
    for ci, c in enumerate(classes):
        row = {
            "class_id": c,
            "n_gt": sum(1 for boxes in gts.values() for g in boxes if g.class_id == c),
            "ap": [float(v) for v in table[ci]],
        }
        if 0.5 in iou_thresholds:
            row["ap50"] = float(table[ci, list(iou_thresholds).index(0.5)])
        row["ap5095"] = float(table[ci].mean())
        per_class.append(row)
    per_threshold = table.mean(axis=0)
    map50 = float(per_threshold[list(iou_thresholds).index(0.5)]) if 0.5 in iou_thresholds else float("nan")
    return MapResult(map50, float(per_threshold.mean()), per_class)


def fbeta(precision: float, recall: float, b: float = 2.0) -> float:
    """(1 + b^2) P R / (b^2 P + R), or 0 when the denominator vanishes."""
    if b <= 0:
        raise ValueError("b must be > 0")
    b2 = b * b
    denom = b2 * precision + recall
    if denom == 0:
        return 0.0
    return (1 + b2) * precision * recall / denom


@dataclass
class CalibrationResult:
    best_threshold: float
    best_fbeta: float
    sweep: List[dict]
    best_precision: float = 0.0
    best_recall: float = 0.0


def calibrate_threshold(dets: Sequence[Detection], gts: Mapping[str, Sequence[BoundingBox]],
                        b: float = 2.0, iou_threshold: float = 0.5, grid_step: float = 0.01) -> CalibrationResult:
    """Sweep confidence thresholds and pick the one maximizing F-beta of
    dataset-level (micro-averaged) precision and recall.

    Candidates are the grid 0, step, ..., 1 plus every distinct detection
    confidence. Greedy matching only looks at higher-confidence detections,
    so matching once and taking prefix counts gives the same numbers as
    re-matching each filtered set.

    The reported threshold is the lowest confidence actually kept at the
    best operating point, and equal scores resolve toward the lower cut.
    """
    if not 0 < grid_step <= 0.5:
        raise ValueError("grid_step must lie in (0, 0.5]")
    n_gt = sum(len(boxes) for boxes in gts.values())
    if n_gt == 0:
        raise EvaluationError("nothing to evaluate: no ground-truth boxes")

    result = match_detections(dets, gts, iou_threshold)
    hits = np.array([hit for _, _, hit in result.matches], dtype=bool)
    conf_desc = np.array([d.confidence for d, _, _ in result.matches], dtype=np.float64)
    cum_tp = np.concatenate([[0], np.cumsum(hits)])

    n_steps = int(round(1.0 / grid_step))
    grid = {round(i * grid_step, 12) for i in range(n_steps + 1) if i * grid_step <= 1.0 + 1e-12}
    grid.add(1.0)
    candidates = sorted(grid | set(conf_desc.tolist()))

    # count of detections with confidence >= t, via the ascending copy
    conf_asc = conf_desc[::-1]
    sweep = []
    best = None
    for t in candidates:
        kept = len(conf_asc) - int(np.searchsorted(conf_asc, t, side="left"))
        tp = int(cum_tp[kept])
        fp = kept - tp
        precision = tp / kept if kept else 0.0
        recall = tp / n_gt
        score = fbeta(precision, recall, b)
        sweep.append({"threshold": t, "precision": precision, "recall": recall, "fbeta": score,
                      "tp": tp, "fp": fp, "kept": kept})
        if kept:
            cut = float(conf_desc[kept - 1])
            if best is None or score > best[0] or (score == best[0] and cut < best[1]):
                best = (score, cut, precision, recall)
    if best is None:
        return CalibrationResult(0.0, 0.0, sweep)
    return CalibrationResult(best[1], best[0], sweep, best[2], best[3])


def build_report(dets: Sequence[Detection], gts: Mapping[str, Sequence[BoundingBox]],
                 class_names: Optional[Sequence[str]] = None, b: float = 2.0,
                 iou_threshold: float = 0.5, grid_step: float = 0.01, config_hash: str = "") -> dict:
    """EvalReport as a JSON-ready dict."""
    scores = map_scores(dets, gts)
    calib = calibrate_threshold(dets, gts, b, iou_threshold, grid_step)
    per_class = []
    for row in scores.per_class:
        row = dict(row)
        if class_names and row["class_id"] < len(class_names):
            row["name"] = class_names[row["class_id"]]
        per_class.append(row)
    return {
        "schema_version": SCHEMA_VERSION,
        "config_hash": config_hash,
        "map50": scores.map50,
        "map5095": scores.map5095,
        "per_class": per_class,
        "beta": b,
        "iou_threshold": iou_threshold,
        "fbeta_sweep": [
            {k: row[k] for k in ("threshold", "precision", "recall", "fbeta")} for row in calib.sweep
        ],
        "best": {"threshold": calib.best_threshold, "fbeta": calib.best_fbeta,
                 "precision": calib.best_precision, "recall": calib.best_recall},
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True) + "\n"
