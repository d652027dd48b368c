"""Label-aware training augmentation: photometric and geometric distortion,
mixup and mosaic, plus the seeded pipeline that chains them.

Every random draw comes from an explicit ``numpy.random.Generator``. The
pipeline derives one generator per image from ``(seed, image_id)`` so the
output does not depend on visit order or worker count.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dataset_io import BoundingBox, Sample, clip_box
from .image import GRAY, ImageBuffer, LUMA_WEIGHTS, resize, to_uint8, warp_image

FILL_VALUE = 114


@dataclass(frozen=True)
class PhotometricConfig:
    hue_delta: float = 0.015
    saturation_range: Tuple[float, float] = (0.7, 1.3)
    value_range: Tuple[float, float] = (0.6, 1.4)
    contrast_range: Tuple[float, float] = (0.8, 1.2)

    def __post_init__(self):
        if not 0 <= self.hue_delta <= 0.5:
            raise ValueError("hue_delta must lie in [0, 0.5]")
        for name in ("saturation_range", "value_range", "contrast_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 0 <= low <= high")


@dataclass(frozen=True)
class GeometricConfig:
    max_rotate_deg: float = 10.0
    max_translate_frac: float = 0.1
    scale_range: Tuple[float, float] = (0.75, 1.25)
    flip_prob: float = 0.5
    # projective terms, in units of 1 / image size
    max_perspective: float = 0.0
    min_area_frac: float = 0.1
    min_size_px: float = 1.0

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError("scale_range must satisfy 0 < low <= high")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must lie in [0, 1]")
        if self.max_rotate_deg < 0 or self.max_translate_frac < 0 or self.max_perspective < 0:
            raise ValueError("rotation, translation and perspective limits must be >= 0")
        if not 0 <= self.min_area_frac <= 1:
            raise ValueError("min_area_frac must lie in [0, 1]")


@dataclass(frozen=True)
class AugmentConfig:
    photometric: PhotometricConfig = field(default_factory=PhotometricConfig)
    geometric: GeometricConfig = field(default_factory=GeometricConfig)
    mixup_lambda_alpha: float = 8.0
    mosaic_center_jitter: float = 0.25
    p_mosaic: float = 0.5
    p_mixup: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.mixup_lambda_alpha <= 0:
            raise ValueError("mixup_lambda_alpha must be > 0")
        if not 0 <= self.mosaic_center_jitter <= 0.5:
            raise ValueError("mosaic_center_jitter must lie in [0, 0.5]")
        for name in ("p_mosaic", "p_mixup"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentConfig":
        """A configuration under which the pipeline is a no-op."""
        return cls(
            photometric=PhotometricConfig(0.0, (1.0, 1.0), (1.0, 1.0), (1.0, 1.0)),
            geometric=GeometricConfig(0.0, 0.0, (1.0, 1.0), 0.0, 0.0),
            p_mosaic=0.0,
            p_mixup=0.0,
            seed=seed,
        )


def image_rng(seed: int, image_id: str) -> np.random.Generator:
    """Generator keyed by (seed, image_id), stable across processes."""
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *words]))


# -- photometric -----------------------------------------------------------

def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Float RGB in [0, 1] to HSV with all components in [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.where(v > 0, c / np.where(v > 0, v, 1), 0.0)
    safe_c = np.where(c > 0, c, 1)
    h = np.where(
        v == r, ((g - b) / safe_c) % 6,
        np.where(v == g, (b - r) / safe_c + 2, (r - g) / safe_c + 4),
    )
    h = np.where(c > 0, h / 6.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    choices = [
        (v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q),
    ]
    out = np.empty(hsv.shape)
    for k, (rr, gg, bb) in enumerate(choices):
        m = i == k
        out[..., 0][m] = rr[m]
        out[..., 1][m] = gg[m]
        out[..., 2][m] = bb[m]
    return out


def photometric_distort(image: ImageBuffer, config: PhotometricConfig, rng: np.random.Generator) -> ImageBuffer:
    """HSV jitter followed by contrast scaling about the mean luma.

    Grayscale images only get the contrast step. Boxes are untouched, so
    callers keep their labels as they are.
    """
    dh = rng.uniform(-config.hue_delta, config.hue_delta)
    sat = rng.uniform(*config.saturation_range)
    val = rng.uniform(*config.value_range)
    contrast = rng.uniform(*config.contrast_range)

    data = image.data.astype(np.float64)
    if image.color_space != GRAY and (dh != 0 or sat != 1 or val != 1):
        hsv = rgb_to_hsv(data / 255.0)
        hsv[..., 0] = (hsv[..., 0] + dh) % 1.0
        hsv[..., 1] = np.clip(hsv[..., 1] * sat, 0.0, 1.0)
        hsv[..., 2] = np.clip(hsv[..., 2] * val, 0.0, 1.0)
        data = hsv_to_rgb(hsv) * 255.0
    if contrast != 1:
        mean = data.mean() if image.channels == 1 else (data @ LUMA_WEIGHTS).mean()
        data = mean + contrast * (data - mean)
    return ImageBuffer(to_uint8(data), image.color_space)


# -- geometric ---------------------------------------------------------------

def warp_matrix(width, height, angle_deg=0.0, scale=1.0, translate=(0.0, 0.0), flip=False,
                perspective=(0.0, 0.0)) -> np.ndarray:
    """Homography in pixel coordinates: perspective, rotation/scale and
    flip about the image center, then translation (fractions of size)."""
    to_center = np.array([[1, 0, -width / 2], [0, 1, -height / 2], [0, 0, 1]], dtype=np.float64)
    persp = np.eye(3)
    persp[2, 0] = perspective[0] / width
    persp[2, 1] = perspective[1] / height
    a = math.radians(angle_deg)
    rot = np.array([[scale * math.cos(a), -scale * math.sin(a), 0],
                    [scale * math.sin(a), scale * math.cos(a), 0],
                    [0, 0, 1]])
    flip_m = np.diag([-1.0 if flip else 1.0, 1.0, 1.0])
    back = np.array([[1, 0, width / 2 + translate[0] * width],
                     [0, 1, height / 2 + translate[1] * height],
                     [0, 0, 1]])
    return back @ flip_m @ rot @ persp @ to_center


def random_warp_matrix(width, height, config: GeometricConfig, rng: np.random.Generator) -> np.ndarray:
    flip = rng.random() < config.flip_prob
    angle = rng.uniform(-config.max_rotate_deg, config.max_rotate_deg)
    scale = rng.uniform(*config.scale_range)
    tx, ty = rng.uniform(-config.max_translate_frac, config.max_translate_frac, size=2)
    px, py = rng.uniform(-config.max_perspective, config.max_perspective, size=2)
    return warp_matrix(width, height, angle, scale, (tx, ty), flip, (px, py))


def transform_boxes(boxes: Sequence[BoundingBox], matrix: np.ndarray, width: int, height: int,
                    min_area_frac: float = 0.1, min_size_px: float = 1.0) -> List[BoundingBox]:
    """Map box corners through ``matrix``, re-axis-align, clip to the frame.

    A box survives when its clipped area keeps at least ``min_area_frac`` of
    the warped (unclipped) area and both sides span ``min_size_px``.
    """
    out = []
    for b in boxes:
        x1, y1, x2, y2 = b.corners()
        pts = np.array([[x1, x1, x2, x2], [y1, y2, y1, y2], [1, 1, 1, 1]], dtype=np.float64)
        pts[0] *= width
        pts[1] *= height
        mapped = matrix @ pts
        if np.any(mapped[2] <= 0):
            continue
        xs = mapped[0] / mapped[2]
        ys = mapped[1] / mapped[2]
        wx1, wx2, wy1, wy2 = xs.min(), xs.max(), ys.min(), ys.max()
        warped_area = (wx2 - wx1) * (wy2 - wy1)
        cx1, cx2 = max(wx1, 0.0), min(wx2, float(width))
        cy1, cy2 = max(wy1, 0.0), min(wy2, float(height))
        if cx2 - cx1 < min_size_px or cy2 - cy1 < min_size_px:
            continue
        if (cx2 - cx1) * (cy2 - cy1) < min_area_frac * warped_area:
            continue
        clipped = clip_box((cx1 + cx2) / 2 / width, (cy1 + cy2) / 2 / height,
                           (cx2 - cx1) / width, (cy2 - cy1) / height, b.class_id)
        if clipped is not None:
            out.append(clipped)
    return out


def warp_sample(image: ImageBuffer, boxes: Sequence[BoundingBox], matrix: np.ndarray,
                config: GeometricConfig = GeometricConfig()):
    if np.array_equal(matrix, np.eye(3)):
        return image.copy(), list(boxes)
    warped = warp_image(image, matrix, fill=FILL_VALUE)
    kept = transform_boxes(boxes, matrix, image.width, image.height, config.min_area_frac, config.min_size_px)
    return warped, kept


def geometric_distort(image: ImageBuffer, boxes: Sequence[BoundingBox], config: GeometricConfig,
                      rng: np.random.Generator):
    """One random flip/rotate/scale/translate/perspective warp applied to
    pixels (bilinear, gray fill) and boxes alike. Returns ``(image, boxes)``."""
    matrix = random_warp_matrix(image.width, image.height, config, rng)
    return warp_sample(image, boxes, matrix, config)


# -- mixing ------------------------------------------------------------------

def mixup(a: Sample, b: Sample, lam: float) -> Sample:
    """Pixel blend ``lam * a + (1 - lam) * b``; boxes of both are kept."""
    if not 0 <= lam <= 1:
        raise ValueError(f"mixup lambda must lie in [0, 1], got {lam}")
    if a.image.data.shape != b.image.data.shape or a.image.color_space != b.image.color_space:
        raise ValueError(
            f"mixup needs images of equal size, got {a.image.data.shape} and {b.image.data.shape}"
        )
    blend = lam * a.image.data.astype(np.float64) + (1 - lam) * b.image.data.astype(np.float64)
    return Sample(a.image_id, ImageBuffer(to_uint8(blend), a.image.color_space),
                  a.boxes + b.boxes, _merge_sources(a.sources, b.sources))


def _merge_sources(*groups) -> tuple:
    seen = []
    for group in groups:
        for s in group:
            if s not in seen:
                seen.append(s)
    return tuple(seen)


def mosaic_center(width: int, height: int, jitter: float, rng: np.random.Generator) -> Tuple[int, int]:
    dx, dy = rng.uniform(-jitter, jitter, size=2)
    xc = int(round(width / 2 + dx * width))
    yc = int(round(height / 2 + dy * height))
    return min(max(xc, 1), width - 1), min(max(yc, 1), height - 1)


def mosaic(tiles: Sequence[Sample], output_size, config: AugmentConfig, rng: np.random.Generator,
           center: Optional[Tuple[int, int]] = None, image_id: Optional[str] = None) -> Sample:
    """Tile four samples around a jittered center point.

    Tiles fill the top-left, top-right, bottom-left and bottom-right
    quadrants in that order, each resized to its quadrant. ``output_size``
    is an int (square) or ``(width, height)``.
    """
    if len(tiles) != 4:
        raise ValueError(f"mosaic needs exactly 4 tiles, got {len(tiles)}")
    width, height = (output_size, output_size) if isinstance(output_size, int) else output_size
    if width < 2 or height < 2:
        raise ValueError("mosaic output must be at least 2x2")
    spaces = {t.image.color_space for t in tiles}
    if len(spaces) != 1:
        raise ValueError("mosaic tiles must share a color space")
    if center is None:
        center = mosaic_center(width, height, config.mosaic_center_jitter, rng)
    xc, yc = center
    quadrants = [(0, 0, xc, yc), (xc, 0, width, yc), (0, yc, xc, height), (xc, yc, width, height)]

    canvas = np.full((height, width, tiles[0].image.channels), FILL_VALUE, dtype=np.uint8)
    boxes = []
    geo = config.geometric
    for tile, (x0, y0, x1, y1) in zip(tiles, quadrants):
        qw, qh = x1 - x0, y1 - y0
        canvas[y0:y1, x0:x1] = resize(tile.image, qw, qh).data
        for b in tile.boxes:
            bx1 = x0 + (b.cx - b.w / 2) * qw
            bx2 = x0 + (b.cx + b.w / 2) * qw
            by1 = y0 + (b.cy - b.h / 2) * qh
            by2 = y0 + (b.cy + b.h / 2) * qh
            if bx2 - bx1 < geo.min_size_px or by2 - by1 < geo.min_size_px:
                continue
            mapped = clip_box((bx1 + bx2) / 2 / width, (by1 + by2) / 2 / height,
                              (bx2 - bx1) / width, (by2 - by1) / height, b.class_id)
            if mapped is not None:
                boxes.append(mapped)
    sid = image_id if image_id is not None else tiles[0].image_id
    return Sample(sid, ImageBuffer(canvas, tiles[0].image.color_space), boxes,
                  _merge_sources(*(t.sources for t in tiles)))


# -- pipeline ----------------------------------------------------------------

def _partners(i: int, n: int, count: int, rng: np.random.Generator) -> List[int]:
    others = [j for j in range(n) if j != i] or [i]
    replace = len(others) < count
    return [others[j] for j in rng.choice(len(others), size=count, replace=replace)]


def augment_sample(samples: Sequence[Sample], index: int, config: AugmentConfig) -> Sample:
    """Augment one sample: mosaic, then mixup, then geometric, then
    photometric. Partners are drawn from ``samples`` in their original
    (unaugmented) form."""
    base = samples[index]
    rng = image_rng(config.seed, base.image_id)
    width, height = base.image.width, base.image.height
    current = base

    if rng.random() < config.p_mosaic:
        order = [index] + _partners(index, len(samples), 3, rng)
        order = [order[k] for k in rng.permutation(4)]
        current = mosaic([samples[k] for k in order], (width, height), config, rng, image_id=base.image_id)

    if rng.random() < config.p_mixup:
        other = samples[_partners(index, len(samples), 1, rng)[0]]
        if (other.image.width, other.image.height) != (width, height):
            other = Sample(other.image_id, resize(other.image, width, height), other.boxes, other.sources)
        if other.image.color_space == current.image.color_space:
            lam = rng.beta(config.mixup_lambda_alpha, config.mixup_lambda_alpha)
            current = mixup(current, other, lam)

    image, boxes = geometric_distort(current.image, current.boxes, config.geometric, rng)
    image = photometric_distort(image, config.photometric, rng)
    return Sample(base.image_id, image, boxes, current.sources)


def augment_pipeline(samples: Sequence[Sample], config: AugmentConfig, jobs: int = 1) -> List[Sample]:
    """Augment every sample; output order follows input order."""
    samples = list(samples)
    if jobs <= 1:
        return [augment_sample(samples, i, config) for i in range(len(samples))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda i: augment_sample(samples, i, config), range(len(samples))))
