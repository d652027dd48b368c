"""8-bit raster container plus PNG I/O and the bilinear sampler shared by
the pixel-level modules."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

GRAY = "gray"
RGB = "rgb"

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Dense H x W x C uint8 raster tagged with its color space.

    ``data`` is always three-dimensional, so a grayscale image has shape
    ``(H, W, 1)``.
    """

    data: np.ndarray
    color_space: str = RGB

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValueError(f"image data must be 2-D or 3-D, got shape {data.shape}")
        if data.dtype != np.uint8:
            raise ValueError(f"image data must be uint8, got {data.dtype}")
        h, w, c = data.shape
        if h < 1 or w < 1:
            raise ValueError("image must be at least 1x1")
        expected = {GRAY: 1, RGB: 3}.get(self.color_space)
        if expected is None:
            raise ValueError(f"unknown color space {self.color_space!r}")
        if c != expected:
            raise ValueError(f"{self.color_space} image needs {expected} channel(s), got {c}")
        object.__setattr__(self, "data", np.ascontiguousarray(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.data.copy(), self.color_space)

    def with_data(self, data) -> "ImageBuffer":
        """Same color space, new samples (rounded and clamped if float)."""
        return ImageBuffer(to_uint8(data), self.color_space)

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.color_space == other.color_space and np.array_equal(self.data, other.data)

    @classmethod
    def uniform(cls, width: int, height: int, value, color_space: str = RGB) -> "ImageBuffer":
        channels = 1 if color_space == GRAY else 3
        data = np.empty((height, width, channels), dtype=np.uint8)
        data[...] = value
        return cls(data, color_space)


def to_uint8(values) -> np.ndarray:
    """Round half-to-even and clamp into [0, 255]."""
    values = np.asarray(values)
    if values.dtype == np.uint8:
        return values
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def luma(image: ImageBuffer) -> np.ndarray:
    """Per-pixel luma as float64 H x W."""
    data = image.data.astype(np.float64)
    if image.channels == 1:
        return data[:, :, 0]
    return data @ LUMA_WEIGHTS


def read_png(path) -> ImageBuffer:
    with Image.open(path) as im:
        if im.format != "PNG":
            raise ValueError(f"{path}: not a PNG file")
        if im.mode in ("L", "1", "I;16", "I"):
            arr = np.asarray(im.convert("L"))
            return ImageBuffer(arr, GRAY)
        arr = np.asarray(im.convert("RGB"))
    return ImageBuffer(arr, RGB)


def write_png(image: ImageBuffer, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = image.data[:, :, 0] if image.channels == 1 else image.data
    mode = "L" if image.channels == 1 else "RGB"
    # no timestamp/text chunks, so identical pixels give identical bytes
    Image.fromarray(arr, mode=mode).save(path, format="PNG", optimize=False)


def sample_bilinear(data: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill: float) -> np.ndarray:
    """Bilinearly sample ``data`` (H x W x C) at continuous pixel-index
    coordinates; points outside the frame take ``fill``.

    Returns float64 samples with shape ``xs.shape + (C,)``.
    """
    h, w, c = data.shape
    src = data.astype(np.float64)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    def tap(yy, xx):
        inside = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        out = np.full(xx.shape + (c,), float(fill))
        out[inside] = src[yy[inside], xx[inside]]
        return out

    top = tap(y0, x0) * (1 - fx) + tap(y0, x0 + 1) * fx
    bottom = tap(y0 + 1, x0) * (1 - fx) + tap(y0 + 1, x0 + 1) * fx
    return top * (1 - fy) + bottom * fy


def warp_image(image: ImageBuffer, matrix: np.ndarray, out_size=None, fill: float = 114) -> ImageBuffer:
    """Apply a 3x3 homography given in continuous pixel coordinates
    (the frame spans [0, W] x [0, H]; pixel i has its center at i + 0.5)."""
    out_w, out_h = out_size if out_size is not None else (image.width, image.height)
    inv = np.linalg.inv(matrix)
    gx, gy = np.meshgrid(np.arange(out_w) + 0.5, np.arange(out_h) + 0.5)
    pts = np.stack([gx.ravel(), gy.ravel(), np.ones(gx.size)])
    src = inv @ pts
    sx = src[0] / src[2] - 0.5
    sy = src[1] / src[2] - 0.5
    # snap float noise so that grid-aligned warps (flips, quarter turns) stay exact
    sx = np.where(np.abs(sx - np.rint(sx)) < 1e-9, np.rint(sx), sx)
    sy = np.where(np.abs(sy - np.rint(sy)) < 1e-9, np.rint(sy), sy)
    values = sample_bilinear(image.data, sx.reshape(out_h, out_w), sy.reshape(out_h, out_w), fill)
    return ImageBuffer(to_uint8(values), image.color_space)


def resize(image: ImageBuffer, width: int, height: int) -> ImageBuffer:
    """Bilinear resize with edge clamping (no fill bleeds in)."""
    if (width, height) == (image.width, image.height):
        return image.copy()
    xs = (np.arange(width) + 0.5) * image.width / width - 0.5
    ys = (np.arange(height) + 0.5) * image.height / height - 0.5
    xs = np.clip(xs, 0, image.width - 1)
    ys = np.clip(ys, 0, image.height - 1)
    gx, gy = np.meshgrid(xs, ys)
    values = sample_bilinear(image.data, gx, gy, fill=0)
    return ImageBuffer(to_uint8(values), image.color_space)
