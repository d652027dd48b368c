"""Anchor generation: k-means over box (w, h) under 1 - IoU distance, and
grouping of twelve anchors onto the P2/4 ... P5/32 detection levels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

LEVEL_NAMES = ("P2/4", "P3/8", "P4/16", "P5/32")
ANCHORS_PER_LEVEL = 3


def iou_wh(a, b) -> np.ndarray:
    """IoU of (w, h) pairs aligned at a shared corner; (N, 2) x (K, 2) -> (N, K)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    inter = np.minimum(a[:, None, 0], b[None, :, 0]) * np.minimum(a[:, None, 1], b[None, :, 1])
    union = (a[:, 0] * a[:, 1])[:, None] + (b[:, 0] * b[:, 1])[None, :] - inter
    return inter / union


def _distance(boxes, centroids):
    return 1.0 - iou_wh(boxes, centroids)


def _seed_centroids(boxes: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding with probability proportional to squared distance."""
    n = len(boxes)
    chosen = [int(rng.integers(n))]
    nearest = _distance(boxes, boxes[chosen[0]])[:, 0]
    for _ in range(1, k):
        weights = np.clip(nearest, 0.0, None) ** 2
        total = weights.sum()
        if total <= 0:
            # only possible when all remaining boxes duplicate chosen ones
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=weights / total))
        chosen.append(idx)
        nearest = np.minimum(nearest, _distance(boxes, boxes[idx])[:, 0])
    return boxes[chosen].copy()


def kmeans_anchors(boxes_wh, k: int, seed: int = 0, max_iter: int = 300, return_trace: bool = False):
    """Cluster box sizes into ``k`` anchors, sorted ascending by area.

    Lloyd iterations alternate nearest-centroid assignment with a guarded
    update: each centroid moves to the mean or median of its members only
    when that lowers the cluster's summed distance, which keeps the cost
    trace non-increasing. An empty cluster is reseeded at the box farthest
    from its current centroid.

    With ``return_trace=True`` returns ``(centroids, costs)`` where
    ``costs[i]`` is the total distance after the i-th assignment.
    """
    boxes = np.asarray(boxes_wh, dtype=np.float64).reshape(-1, 2)
    if k < 1:
        raise ValueError("k must be >= 1")
    if np.any(boxes <= 0) or not np.all(np.isfinite(boxes)):
        raise ValueError("box widths and heights must be positive and finite")
    n_distinct = len(np.unique(boxes, axis=0))
    if n_distinct < k:
        raise ValueError(f"need at least {k} distinct boxes, got {n_distinct}")

    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(boxes, k, rng)
    trace = []
    assign = None
    for _ in range(max_iter):
        dist = _distance(boxes, centroids)
        new_assign = dist.argmin(axis=1)
        trace.append(float(dist[np.arange(len(boxes)), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        own = dist[np.arange(len(boxes)), assign]
        for j in range(k):
            members = boxes[assign == j]
            if len(members) == 0:
                far = int(own.argmax())
                centroids[j] = boxes[far]
                own[far] = 0.0
                continue
            best = centroids[j]
            best_cost = _distance(members, best).sum()
            for cand in (members.mean(axis=0), np.median(members, axis=0)):
                cost = _distance(members, cand).sum()
                if cost < best_cost:
                    best, best_cost = cand, cost
            centroids[j] = best

    order = np.argsort(centroids[:, 0] * centroids[:, 1], kind="stable")
    centroids = centroids[order]
    if return_trace:
        return centroids, trace
    return centroids


@dataclass(frozen=True)
class AnchorSet:
    """Four named levels with three (w, h) anchors each, in pixels at the
    reference input size."""

    levels: Tuple[Tuple[str, Tuple[Tuple[float, float], ...]], ...]

    def __post_init__(self):
        if len(self.levels) != len(LEVEL_NAMES):
            raise ValueError(f"expected {len(LEVEL_NAMES)} levels, got {len(self.levels)}")
        for name, anchors in self.levels:
            if len(anchors) != ANCHORS_PER_LEVEL:
                raise ValueError(f"{name}: expected {ANCHORS_PER_LEVEL} anchors, got {len(anchors)}")
            if any(w <= 0 or h <= 0 for w, h in anchors):
                raise ValueError(f"{name}: anchor dimensions must be positive")

    def as_dict(self) -> dict:
        return {name: [list(a) for a in anchors] for name, anchors in self.levels}


def assign_to_levels(centroids, key: str = "width") -> AnchorSet:
    """Sort twelve anchors and hand them out three per level, smallest first.

    ``key`` picks the sort order: ``"width"`` (the layout of the usual
    YOLO anchor tables, where widths increase monotonically across levels)
    or ``"area"``. Ties keep input order.
    """
    c = np.asarray(centroids, dtype=np.float64).reshape(-1, 2)
    expected = len(LEVEL_NAMES) * ANCHORS_PER_LEVEL
    if len(c) != expected:
        raise ValueError(f"need exactly {expected} anchors, got {len(c)}")
    if key == "width":
        sort_by = c[:, 0]
    elif key == "area":
        sort_by = c[:, 0] * c[:, 1]
    else:
        raise ValueError(f"unknown sort key {key!r}")
    c = c[np.argsort(sort_by, kind="stable")]
    levels = tuple(
        (name, tuple((float(w), float(h)) for w, h in c[i * ANCHORS_PER_LEVEL:(i + 1) * ANCHORS_PER_LEVEL]))
        for i, name in enumerate(LEVEL_NAMES)
    )
    return AnchorSet(levels)


def format_anchor_file(anchor_set: AnchorSet) -> str:
    """``Pn/s: w1,h1 w2,h2 w3,h3`` per level, dimensions rounded to pixels."""
    lines = []
    for name, anchors in anchor_set.levels:
        dims = " ".join(f"{int(round(w))},{int(round(h))}" for w, h in anchors)
        lines.append(f"{name}: {dims}")
    return "\n".join(lines) + "\n"


def parse_anchor_file(text: str) -> AnchorSet:
    levels = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            name, rest = line.split(":", 1)
            anchors = tuple(tuple(float(v) for v in pair.split(",")) for pair in rest.split())
        except ValueError:
            raise ValueError(f"line {lineno}: malformed anchor line {line!r}") from None
        if any(len(a) != 2 for a in anchors):
            raise ValueError(f"line {lineno}: anchors must be w,h pairs")
        levels.append((name.strip(), anchors))
    return AnchorSet(tuple(levels))


def boxes_to_pixels(boxes, input_size: int = 640) -> np.ndarray:
    """Normalized boxes to (w, h) pixels at the reference input size."""
    return np.array([(b.w * input_size, b.h * input_size) for b in boxes], dtype=np.float64).reshape(-1, 2)


def anchors_from_boxes(boxes, k: int = 12, seed: int = 0, max_iter: int = 300,
                       input_size: int = 640, key: str = "width") -> AnchorSet:
    centroids = kmeans_anchors(boxes_to_pixels(boxes, input_size), k, seed=seed, max_iter=max_iter)
    return assign_to_levels(centroids, key=key)


def level_of(anchor_set: AnchorSet, wh: Sequence[float]) -> str:
    """Name of the level holding an anchor equal to ``wh`` (rounded to pixels)."""
    target = tuple(int(round(v)) for v in wh)
    for name, anchors in anchor_set.levels:
        if any((int(round(w)), int(round(h))) == target for w, h in anchors):
            return name
    raise KeyError(f"no anchor {target}")

