"""Underwater degradation simulator and the turbidity x distance accuracy
harness.

Turbidity follows the single-scattering haze model
``out = in * t + airlight * (1 - t)`` with ``t = exp(-beta * distance)``;
camera defocus is a Gaussian blur whose width grows with the distance from
the focal plane.
"""

from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np
from scipy import ndimage, signal

from .dataset_io import BoundingBox, Detection, Sample
from .evaluation import match_detections
from .image import GRAY, ImageBuffer, luma, to_uint8

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TurbidityParams:
    beta: float = 0.0
    airlight: Tuple[float, float, float] = (40.0, 110.0, 120.0)
    distance: float = 0.0

    def __post_init__(self):
        if self.beta < 0 or self.distance < 0:
            raise ValueError("beta and distance must be >= 0")
        if any(not 0 <= a <= 255 for a in self.airlight):
            raise ValueError("airlight components must lie in [0, 255]")

    @property
    def transmission(self) -> float:
        return math.exp(-self.beta * self.distance)


@dataclass(frozen=True)
class DefocusParams:
    focus_distance: float = 0.0
    blur_gain: float = 0.0

    def __post_init__(self):
        if self.focus_distance < 0 or self.blur_gain < 0:
            raise ValueError("focus_distance and blur_gain must be >= 0")

    def sigma(self, distance: float) -> float:
        return self.blur_gain * abs(distance - self.focus_distance)


def _airlight_for(image: ImageBuffer, airlight) -> np.ndarray:
    a = np.asarray(airlight, dtype=np.float64)
    if image.color_space == GRAY:
        return np.array([a @ np.array([0.299, 0.587, 0.114])]) if a.size == 3 else a.reshape(1)
    return a.reshape(3)


def apply_turbidity(image: ImageBuffer, params: TurbidityParams) -> ImageBuffer:
    t = params.transmission
    if t == 1.0:
        return image.copy()
    a = _airlight_for(image, params.airlight)
    return image.with_data(image.data * t + a * (1.0 - t))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled 1-D Gaussian truncated at 3 sigma and normalized to sum 1."""
    if sigma <= 0:
        return np.ones(1)
    radius = max(int(math.ceil(3 * sigma)), 1)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def blur(image: ImageBuffer, sigma: float) -> ImageBuffer:
    if sigma <= 0:
        return image.copy()
    k = gaussian_kernel(sigma)
    data = image.data.astype(np.float64)
    data = ndimage.correlate1d(data, k, axis=0, mode="nearest")
    data = ndimage.correlate1d(data, k, axis=1, mode="nearest")
    return image.with_data(data)


def apply_defocus(image: ImageBuffer, params: DefocusParams, distance: float) -> ImageBuffer:
    return blur(image, params.sigma(distance))


# -- reference scene and detector ----------------------------------------------

def _shape_mask(kind: str, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    c = size / 2
    if kind == "square":
        m = (np.abs(xx - c) <= size * 0.4) & (np.abs(yy - c) <= size * 0.4)
    elif kind == "disk":
        m = (xx - c) ** 2 + (yy - c) ** 2 <= (size * 0.42) ** 2
    elif kind == "cross":
        bar = size * 0.14
        m = ((np.abs(xx - c) <= bar) | (np.abs(yy - c) <= bar)) & \
            (np.abs(xx - c) <= size * 0.45) & (np.abs(yy - c) <= size * 0.45)
    else:
        raise ValueError(f"unknown shape {kind!r}")
    return m


SHAPES = ("square", "disk", "cross")


def synthetic_shape_scene(size: int = 96, shape_size: int = 20, seed: int = 0) -> Sample:
    """A textured seabed-like background holding one bright shape per class
    (square, disk, cross); box labels are exact."""
    rng = np.random.default_rng(seed)
    base = ndimage.gaussian_filter(rng.normal(0, 1, (size, size)), 3.0)
    base = 70 + 12 * base / (np.abs(base).max() + 1e-12)
    data = np.repeat(base[:, :, None], 3, axis=2) * np.array([0.7, 1.0, 1.05])
    colors = [(230, 200, 90), (240, 120, 80), (220, 230, 235)]
    margin = 4
    cells = size // 2
    slots = [(margin, margin), (cells + margin, margin), (margin, cells + margin), (cells + margin, cells + margin)]
    order = rng.permutation(len(slots))[: len(SHAPES)]
    boxes = []
    for cls, (kind, slot) in enumerate(zip(SHAPES, order)):
        x0, y0 = slots[slot]
        x0 += int(rng.integers(0, cells - shape_size - 2 * margin + 1))
        y0 += int(rng.integers(0, cells - shape_size - 2 * margin + 1))
        mask = _shape_mask(kind, shape_size)
        patch = data[y0:y0 + shape_size, x0:x0 + shape_size]
        patch[mask] = colors[cls]
        boxes.append(BoundingBox((x0 + shape_size / 2) / size, (y0 + shape_size / 2) / size,
                                 shape_size / size, shape_size / size, cls))
    return Sample("synthetic", ImageBuffer(to_uint8(data)), tuple(boxes))


def _window_sums(a: np.ndarray, th: int, tw: int) -> np.ndarray:
    """Sums over every th x tw window (valid positions only)."""
    c = np.pad(a, ((1, 0), (1, 0))).cumsum(axis=0).cumsum(axis=1)
    return c[th:, tw:] - c[:-th, tw:] - c[th:, :-tw] + c[:-th, :-tw]


def _ncc_map(gray: np.ndarray, template: np.ndarray) -> np.ndarray:
    th, tw = template.shape
    n = th * tw
    t = template - template.mean()
    t_norm = math.sqrt(float((t * t).sum()))
    num = signal.correlate(gray, t, mode="valid", method="fft")
    s1 = _window_sums(gray, th, tw)
    s2 = _window_sums(gray * gray, th, tw)
    var = s2 - s1 * s1 / n
    denom = np.sqrt(np.clip(var, 0, None)) * t_norm
    ok = denom > 1e-6 * max(t_norm, 1.0)
    return np.where(ok, num / np.where(ok, denom, 1.0), 0.0)


class TemplateMatchDetector:
    """Normalized cross-correlation against clean crops of the scene's
    labeled objects. Reports, per template, the best-scoring location when
    its correlation clears ``threshold``."""

    thread_safe = True

    def __init__(self, templates: Sequence[Tuple[int, np.ndarray]], threshold: float = 0.8):
        self.templates = [(int(c), np.asarray(t, dtype=np.float64)) for c, t in templates]
        self.threshold = threshold

    @classmethod
    def from_scene(cls, scene: Sample, threshold: float = 0.8) -> "TemplateMatchDetector":
        gray = luma(scene.image)
        h, w = gray.shape
        templates = []
        for b in scene.boxes:
            x1, y1, x2, y2 = b.corners()
            c0, r0 = int(round(x1 * w)), int(round(y1 * h))
            c1, r1 = int(round(x2 * w)), int(round(y2 * h))
            templates.append((b.class_id, gray[r0:r1, c0:c1].copy()))
        return cls(templates, threshold)

    def __call__(self, image: ImageBuffer, image_id: str = "") -> List[Detection]:
        gray = luma(image)
        h, w = gray.shape
        dets = []
        for class_id, tmpl in self.templates:
            th, tw = tmpl.shape
            if th > h or tw > w:
                continue
            score = _ncc_map(gray, tmpl)
            r, c = np.unravel_index(int(score.argmax()), score.shape)
            peak = float(score[r, c])
            if peak < self.threshold:
                continue
            box = BoundingBox((c + tw / 2) / w, (r + th / 2) / h, tw / w, th / h, class_id)
            dets.append(Detection(box, min(max(peak, 0.0), 1.0), image_id))
        return dets


def oracle_detector(scene: Sample):
    """Detector that always returns the scene's ground truth."""
    def detect(image, image_id=""):
        return [Detection(b, 1.0, image_id) for b in scene.boxes]
    detect.thread_safe = True
    return detect


def null_detector(image, image_id=""):
    return []


null_detector.thread_safe = True


# -- accuracy grid ---------------------------------------------------------------

@dataclass
class AccuracyGrid:
    betas: List[float]
    distances: List[float]
    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.float64)
        if self.cells.shape != (len(self.betas), len(self.distances)):
            raise ValueError("cell array does not match the grid axes")
        if np.any((self.cells < 0) | (self.cells > 1)):
            raise ValueError("accuracies must lie in [0, 1]")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("beta\\distance," + ",".join(_num(d) for d in self.distances) + "\n")
        for beta, row in zip(self.betas, self.cells):
            buf.write(_num(beta) + "," + ",".join(f"{v:.6f}" for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "AccuracyGrid":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        distances = [float(v) for v in lines[0].split(",")[1:]]
        betas, cells = [], []
        for ln in lines[1:]:
            parts = ln.split(",")
            betas.append(float(parts[0]))
            cells.append([float(v) for v in parts[1:]])
        return cls(betas, distances, np.array(cells).reshape(len(betas), len(distances)))


def _num(v: float) -> str:
    return repr(float(v))


@dataclass(frozen=True)
class JitterParams:
    gain: float = 0.05
    offset: float = 4.0
    noise_sigma: float = 3.0


def degrade_frame(image: ImageBuffer, beta: float, distance: float, airlight, defocus: DefocusParams,
                  rng: np.random.Generator, jitter: JitterParams = JitterParams()) -> ImageBuffer:
    """Turbidity, then defocus, then random gain/offset and sensor noise."""
    frame = apply_turbidity(image, TurbidityParams(beta, tuple(airlight), distance))
    frame = apply_defocus(frame, defocus, distance)
    gain = 1.0 + rng.uniform(-jitter.gain, jitter.gain)
    offset = rng.uniform(-jitter.offset, jitter.offset)
    noise = rng.normal(0.0, jitter.noise_sigma, frame.data.shape) if jitter.noise_sigma > 0 else 0.0
    return frame.with_data(frame.data * gain + offset + noise)


def frame_correct(dets: Sequence[Detection], truth: Sequence[BoundingBox], iou_threshold: float) -> bool:
    """True when every ground-truth box is matched with the right class."""
    result = match_detections(dets, {"frame": list(truth)}, iou_threshold, class_aware=True)
    return result.fn == 0


def accuracy_grid(scene: Sample, detector: Callable, betas: Sequence[float], distances: Sequence[float],
                  frames_per_cell: int = 100, iou_threshold: float = 0.5, rng_seed: int = 0,
                  defocus: DefocusParams = DefocusParams(), airlight=(40.0, 110.0, 120.0),
                  jitter: JitterParams = JitterParams(), jobs: int = 1) -> AccuracyGrid:
    """Fraction of degraded frames, per (beta, distance) cell, on which the
    detector finds every labeled object.

    Each frame draws from its own generator keyed by (seed, row, column,
    frame), so the grid does not depend on evaluation order. A detector
    that raises counts as a miss. Detectors without a true
    ``thread_safe`` attribute are always run on one thread.
    """
    if frames_per_cell < 1:
        raise ValueError("frames_per_cell must be >= 1")
    betas, distances = list(betas), list(distances)

    def run_cell(ij):
        i, j = ij
        correct = 0
        for f in range(frames_per_cell):
            rng = np.random.default_rng(np.random.SeedSequence([rng_seed, i, j, f]))
            frame = degrade_frame(scene.image, betas[i], distances[j], airlight, defocus, rng, jitter)
            try:
                dets = [Detection(d.box, d.confidence, "frame") for d in detector(frame)]
            except Exception as exc:  # detector is a black box
                log.warning("detector failed on cell (%d, %d) frame %d: %s", i, j, f, exc)
                continue
            correct += frame_correct(dets, scene.boxes, iou_threshold)
        return correct / frames_per_cell

    cells = [(i, j) for i in range(len(betas)) for j in range(len(distances))]
    if jobs > 1 and getattr(detector, "thread_safe", False):
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(run_cell, cells))
    else:
        values = [run_cell(c) for c in cells]
    return AccuracyGrid(betas, distances, np.array(values).reshape(len(betas), len(distances)))
