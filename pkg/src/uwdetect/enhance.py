"""Underwater preprocessing applied ahead of detection: global brightness
normalization by gamma correction, then 4-neighbour Laplacian sharpening."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image import ImageBuffer, luma, to_uint8

UNCHANGED = "unchanged"
CORRECTED = "corrected"
SATURATED = "saturated"

LAPLACE_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


@dataclass(frozen=True)
class EnhanceParams:
    target_luma: float = 128.0
    dark_threshold: float = 80.0
    bright_threshold: float = 180.0
    sharpen_strength: float = 0.5

    def __post_init__(self):
        if not 0 < self.dark_threshold < self.bright_threshold < 255:
            raise ValueError("need 0 < dark_threshold < bright_threshold < 255")
        if not 0 < self.target_luma < 255:
            raise ValueError("target_luma must lie strictly between 0 and 255")
        if self.sharpen_strength < 0:
            raise ValueError("sharpen_strength must be >= 0")


def mean_luma(image: ImageBuffer) -> float:
    return float(luma(image).mean())


def _gamma_lut(gamma: float) -> np.ndarray:
    levels = np.arange(256, dtype=np.float64) / 255.0
    return to_uint8(255.0 * levels ** gamma)


def _apply_lut(image: ImageBuffer, lut: np.ndarray) -> ImageBuffer:
    return ImageBuffer(lut[image.data], image.color_space)


def brightness_gamma(image: ImageBuffer, params: EnhanceParams = EnhanceParams()):
    """Choose the gamma that brings the image's mean luma to the target.

    Returns ``(gamma, status)``; gamma is None unless status is
    ``"corrected"``.

    The closed form ln(target/255) / ln(mean/255) is exact for uniform
    images. For textured images the mean of a power is not the power of the
    mean, so the closed form only seeds a bisection on gamma over the
    quantized lookup table.
    """
    m = mean_luma(image)
    if params.dark_threshold <= m <= params.bright_threshold:
        return None, UNCHANGED
    if m <= 0.0 or m >= 255.0:
        return None, SATURATED

    target = params.target_luma
    gamma0 = math.log(target / 255.0) / math.log(m / 255.0)

    def mean_after(g):
        return mean_luma(_apply_lut(image, _gamma_lut(g)))

    best_g, best_err = gamma0, abs(mean_after(gamma0) - target)
    if best_err <= 0.5:
        return best_g, CORRECTED
    # output mean is non-increasing in gamma
    lo, hi = gamma0, gamma0
    if mean_after(gamma0) > target:
        while mean_after(hi) > target and hi < 1e3:
            hi *= 2.0
    else:
        while mean_after(lo) < target and lo > 1e-4:
            lo /= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        val = mean_after(mid)
        err = abs(val - target)
        if err < best_err:
            best_g, best_err = mid, err
        if val > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9:
            break
    return best_g, CORRECTED


def auto_brightness(image: ImageBuffer, params: EnhanceParams = EnhanceParams(), return_status: bool = False):
    """Brighten dark images and darken bright ones with a single global
    gamma applied to every channel.

    Images whose mean luma already lies within the thresholds come back
    unchanged, as do fully black or fully white images (status
    ``"saturated"``, gamma is undefined there).
    """
    gamma, status = brightness_gamma(image, params)
    out = image.copy() if gamma is None else _apply_lut(image, _gamma_lut(gamma))
    if return_status:
        return out, status
    return out


def laplacian(data: np.ndarray) -> np.ndarray:
    """4-neighbour Laplacian per channel with replicated borders."""
    data = data.astype(np.float64)
    out = np.empty_like(data)
    for c in range(data.shape[2]):
        out[:, :, c] = ndimage.correlate(data[:, :, c], LAPLACE_KERNEL, mode="nearest")
    return out


def laplace_sharpen(image: ImageBuffer, strength: float = 0.5) -> ImageBuffer:
    """out = clamp(in - strength * L).

    A pixel darker than the mean of its four neighbours has L > 0 and is
    pushed darker; a brighter one is pushed brighter.
    """
    if strength < 0:
        raise ValueError("sharpen strength must be >= 0")
    if strength == 0:
        return image.copy()
    return image.with_data(image.data - strength * laplacian(image.data))


def enhance_pipeline(image: ImageBuffer, params: EnhanceParams = EnhanceParams()) -> ImageBuffer:
    return laplace_sharpen(auto_brightness(image, params), params.sharpen_strength)
