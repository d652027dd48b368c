"""Axis-aligned box geometry: IoU, GIoU, GIoU loss and class-aware NMS."""

from __future__ import annotations

from typing import List, NamedTuple

from .dataset_io import BoundingBox, Detection


class CornerBox(NamedTuple):
    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def area(self) -> float:
        return max(self.x2 - self.x1, 0.0) * max(self.y2 - self.y1, 0.0)

    @classmethod
    def from_box(cls, box: BoundingBox) -> "CornerBox":
        return cls(*box.corners())


def _as_corners(b) -> CornerBox:
    if isinstance(b, BoundingBox):
        return CornerBox.from_box(b)
    box = CornerBox(*b)
    if box.x1 > box.x2 or box.y1 > box.y2:
        raise ValueError(f"corner box must satisfy x1 <= x2 and y1 <= y2: {box}")
    return box


def _intersection(a: CornerBox, b: CornerBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a, b) -> float:
    """Intersection over union; 0 for disjoint boxes or an empty union."""
    a, b = _as_corners(a), _as_corners(b)
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(inter / union, 1.0)


def giou(a, b) -> float:
    """Generalized IoU: IoU minus the share of the smallest enclosing box
    not covered by the union.

    Degenerate inputs: empty union and empty enclosure give 0, empty union
    with a positive enclosure gives -1.
    """
    a, b = _as_corners(a), _as_corners(b)
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    hull = CornerBox(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2)).area
    if union <= 0:
        return 0.0 if hull <= 0 else -1.0
    value = min(inter / union, 1.0)
    if hull > union:
        value -= (hull - union) / hull
    return value


def giou_loss(a, b) -> float:
    return 1.0 - giou(a, b)


def nms(dets: List[Detection], iou_threshold: float) -> List[Detection]:
    """Greedy per-class suppression, highest confidence first.

    Ties in confidence keep input order. A detection is dropped when its
    IoU with an already kept detection of the same class and image exceeds
    ``iou_threshold``.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    kept: List[Detection] = []
    by_group = {}
    for i in order:
        d = dets[i]
        group = by_group.setdefault((d.image_id, d.box.class_id), [])
        if any(iou(d.box, k.box) > iou_threshold for k in group):
            continue
        group.append(d)
        kept.append(d)
    return kept
