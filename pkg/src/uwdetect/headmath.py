"""Forward-pass numerics for the detection head and backbone additions:
feature-pyramid shape arithmetic, SPP, ECA channel gating, CBAM spatial
gating, their ECSAM composition, and single-head self-attention.

Tensors are plain float64 numpy arrays laid out C x H x W (or N x D for
token sequences). Weights are explicit arguments with uniform defaults;
nothing here is trained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from scipy import ndimage

DEFAULT_LEVELS = (("P2/4", 4), ("P3/8", 8), ("P4/16", 16), ("P5/32", 32))


def _check_map(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or min(x.shape) < 1:
        raise ValueError(f"expected a C x H x W feature map, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("feature map contains non-finite values")
    return x


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- pyramid shapes ------------------------------------------------------------

def pyramid_map_size(input_size: int, stride: int) -> Tuple[int, int]:
    if stride < 1 or input_size % stride:
        raise ValueError(f"stride {stride} does not divide input size {input_size}")
    side = input_size // stride
    return side, side


@dataclass(frozen=True)
class PyramidSpec:
    input_size: int = 640
    levels: Tuple[Tuple[str, int], ...] = field(default=DEFAULT_LEVELS)

    def __post_init__(self):
        for name, stride in self.levels:
            if stride < 1 or self.input_size % stride:
                raise ValueError(f"{name}: stride {stride} does not divide {self.input_size}")

    def map_sizes(self) -> dict:
        return {name: pyramid_map_size(self.input_size, stride) for name, stride in self.levels}


def upsample_concat_shape(deep: Tuple[int, int, int], skip: Tuple[int, int, int], factor: int = 2):
    """Shape after upsampling ``deep`` (C, H, W) by ``factor`` and
    concatenating it with ``skip`` along channels."""
    c1, h1, w1 = deep
    c2, h2, w2 = skip
    if (h1 * factor, w1 * factor) != (h2, w2):
        raise ValueError(f"upsampled {h1}x{w1} by {factor} does not match skip map {h2}x{w2}")
    return c1 + c2, h2, w2


# -- SPP -----------------------------------------------------------------------

def spp_forward(x, windows: Sequence[int] = (5, 9, 13)) -> np.ndarray:
    """Identity map concatenated with stride-1 max pools of each window
    size (edge-replicated borders), so spatial size is unchanged."""
    x = _check_map(x)
    for k in windows:
        if k < 1 or k % 2 == 0:
            raise ValueError(f"SPP windows must be odd positive ints, got {k}")
    pooled = [ndimage.maximum_filter(x, size=(1, k, k), mode="nearest") for k in windows]
    return np.concatenate([x] + pooled, axis=0)


# -- attention gates -------------------------------------------------------------

def eca_kernel_size(channels: int, gamma: float = 2.0, b: float = 1.0) -> int:
    """Adaptive ECA kernel size: |log2(C) / gamma + b / gamma| made odd."""
    t = int(abs(math.log2(channels) / gamma + b / gamma))
    return t if t % 2 else t + 1


def eca_gate(x, kernel="auto", weights=None) -> np.ndarray:
    """Per-channel gate in (0, 1): global average pool, 1-D conv across
    channels with edge-replicated padding, sigmoid."""
    x = _check_map(x)
    channels = x.shape[0]
    k = eca_kernel_size(channels) if kernel == "auto" else int(kernel)
    if k < 1 or k % 2 == 0:
        raise ValueError(f"ECA kernel must be odd, got {kernel}")
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (k,):
        raise ValueError(f"ECA weights must have length {k}, got shape {w.shape}")
    pooled = x.mean(axis=(1, 2))
    mixed = ndimage.correlate1d(pooled, w, mode="nearest")
    return sigmoid(mixed)


def eca_channel_attention(x, kernel="auto", weights=None) -> np.ndarray:
    x = _check_map(x)
    return x * eca_gate(x, kernel, weights)[:, None, None]


def cbam_spatial_gate(x, kernel: int = 7, weights=None) -> np.ndarray:
    """H x W gate in (0, 1) from a k x k conv over the channel-mean and
    channel-max maps."""
    x = _check_map(x)
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"spatial kernel must be odd, got {kernel}")
    w = np.full((2, kernel, kernel), 1.0 / (2 * kernel * kernel)) if weights is None \
        else np.asarray(weights, dtype=np.float64)
    if w.shape != (2, kernel, kernel):
        raise ValueError(f"spatial weights must have shape (2, {kernel}, {kernel}), got {w.shape}")
    stats = (x.mean(axis=0), x.max(axis=0))
    logits = sum(ndimage.correlate(s, w[i], mode="nearest") for i, s in enumerate(stats))
    return sigmoid(logits)


def cbam_spatial_attention(x, kernel: int = 7, weights=None) -> np.ndarray:
    x = _check_map(x)
    return x * cbam_spatial_gate(x, kernel, weights)[None, :, :]


def ecsam_forward(x, eca_kernel="auto", spatial_kernel: int = 7, eca_weights=None, spatial_weights=None):
    """ECA channel gating followed by CBAM spatial gating."""
    gated = eca_channel_attention(x, eca_kernel, eca_weights)
    return cbam_spatial_attention(gated, spatial_kernel, spatial_weights)


# -- self-attention ----------------------------------------------------------------

def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def self_attention_forward(tokens, wq, wk, wv, return_weights: bool = False):
    """Single-head scaled dot-product self-attention over N x D tokens."""
    x = np.asarray(tokens, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError(f"tokens must be N x D with D >= 1, got shape {x.shape}")
    d = x.shape[1]
    mats = [np.asarray(m, dtype=np.float64) for m in (wq, wk, wv)]
    for name, m in zip(("Wq", "Wk", "Wv"), mats):
        if m.shape != (d, d):
            raise ValueError(f"{name} must be {d} x {d}, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError(f"{name} contains non-finite values")
    q, k, v = (x @ m for m in mats)
    attn = softmax(q @ k.T / math.sqrt(d), axis=1)
    out = attn @ v
    if return_weights:
        return out, attn
    return out
