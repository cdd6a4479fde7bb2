"""Minimal deterministic NN kernel set on dense (height, width, channels) arrays.

Conventions used by every operation here and by all models built on top:

* A feature map is a rank-3 ``numpy`` array of shape ``(H, W, C)``.
  Production code uses float32 throughout; the kernels preserve the input
  dtype so float64 can be used for numerical verification.
* Convolutions use zero-filled "same" padding and produce spatial dims of
  exactly ``ceil(dim / stride)``.  Output position ``(i, j)`` reads the
  input window centered at ``(i * stride, j * stride)``.  Kernel sizes are
  odd, so the symmetric padding is well-defined.
* No operation applies an activation implicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidCropError, InvalidInputError, InvalidSpecError

__all__ = [
    "ConvParams",
    "FcParams",
    "CropRect",
    "conv2d",
    "separable_conv2d",
    "fully_connected",
    "activation",
    "crop",
    "depth_concat",
    "conv_out_dim",
]


def conv_out_dim(dim: int, stride: int) -> int:
    """Spatial output size of a same-padded convolution: ceil(dim/stride)."""
    return -(-dim // stride)


@dataclass(frozen=True)
class ConvParams:
    """Parameters of one convolutional layer.

    ``weights`` is a single ``(K, K, M, F)`` array for a standard layer, or a
    ``(depthwise, pointwise)`` pair with shapes ``(K, K, M)`` and ``(M, F)``
    for a separable layer.  ``bias`` always has one entry per output filter
    and, for separable layers, is added after the pointwise stage.
    """

    kernel_size: int
    stride: int
    filters: int
    separable: bool
    weights: object
    bias: np.ndarray


@dataclass(frozen=True)
class FcParams:
    """Fully-connected layer: ``weights`` is (N, H*W*C), ``bias`` is (N,)."""

    hidden_units: int
    weights: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class CropRect:
    """Inclusive rectangle in (row, col) feature or pixel coordinates."""

    row0: int
    col0: int
    row1: int
    col1: int

    def __post_init__(self):
        if min(self.row0, self.col0, self.row1, self.col1) < 0:
            raise InvalidCropError(f"crop corners must be non-negative: {self}")
        if self.row1 < self.row0 or self.col1 < self.col0:
            raise InvalidCropError(f"crop rectangle is empty: {self}")

    @property
    def height(self) -> int:
        return self.row1 - self.row0 + 1

    @property
    def width(self) -> int:
        return self.col1 - self.col0 + 1


def _require_map(x: np.ndarray, op: str) -> np.ndarray:
    if not isinstance(x, np.ndarray) or x.ndim != 3:
        raise InvalidInputError(f"{op}: expected a (H, W, C) array, got {getattr(x, 'shape', type(x))}")
    return x


def _check_conv(x: np.ndarray, p: ConvParams, op: str) -> None:
    k, s, f = p.kernel_size, p.stride, p.filters
    if k < 1 or k % 2 == 0:
        raise InvalidSpecError(f"{op}: kernel_size must be positive and odd, got {k}")
    if s < 1:
        raise InvalidSpecError(f"{op}: stride must be >= 1, got {s}")
    m = x.shape[2]
    if p.bias.shape != (f,):
        raise InvalidSpecError(f"{op}: bias must have shape ({f},), got {p.bias.shape}")
    if p.separable:
        dw, pw = p.weights
        if dw.shape != (k, k, m):
            raise InvalidSpecError(f"{op}: depthwise weights must be {(k, k, m)}, got {dw.shape}")
        if pw.shape != (m, f):
            raise InvalidSpecError(f"{op}: pointwise weights must be {(m, f)}, got {pw.shape}")
    else:
        w = p.weights
        if getattr(w, "shape", None) != (k, k, m, f):
            raise InvalidSpecError(f"{op}: weights must have shape {(k, k, m, f)}, got {getattr(w, 'shape', None)}")


def _pad_same(x: np.ndarray, k: int) -> np.ndarray:
    p = k // 2
    if p == 0:
        return x
    return np.pad(x, ((p, p), (p, p), (0, 0)))


def _window_view(padded: np.ndarray, out_h: int, out_w: int, k: int, stride: int) -> np.ndarray:
    """(out_h, out_w, K, K, C) view of K x K neighborhoods at the given stride."""
    sh, sw, sc = padded.strides
    shape = (out_h, out_w, k, k, padded.shape[2])
    strides = (sh * stride, sw * stride, sh, sw, sc)
    return np.lib.stride_tricks.as_strided(padded, shape=shape, strides=strides)


def conv2d(x: np.ndarray, params: ConvParams) -> np.ndarray:
    """Standard same-padded convolution with per-filter bias, no activation."""
    x = _require_map(x, "conv2d")
    if params.separable:
        raise InvalidSpecError("conv2d: params are marked separable; use separable_conv2d")
    _check_conv(x, params, "conv2d")
    k, s, f = params.kernel_size, params.stride, params.filters
    h, w, m = x.shape
    out_h, out_w = conv_out_dim(h, s), conv_out_dim(w, s)
    cols = _window_view(_pad_same(x, k), out_h, out_w, k, s).reshape(out_h, out_w, k * k * m)
    kernel = np.asarray(params.weights).reshape(k * k * m, f)
    return cols @ kernel + params.bias


def _depthwise(x: np.ndarray, dw: np.ndarray, stride: int) -> np.ndarray:
    k = dw.shape[0]
    h, w, _ = x.shape
    out_h, out_w = conv_out_dim(h, stride), conv_out_dim(w, stride)
    view = _window_view(_pad_same(x, k), out_h, out_w, k, stride)
    return np.einsum("ijklc,klc->ijc", view, dw)


def separable_conv2d(x: np.ndarray, params: ConvParams) -> np.ndarray:
    """Depthwise K x K convolution (stride, same padding) then 1x1 pointwise mix.

    Bias is added on the pointwise stage only; no activation between stages.
    """
    x = _require_map(x, "separable_conv2d")
    if not params.separable:
        raise InvalidSpecError("separable_conv2d: params are not marked separable")
    _check_conv(x, params, "separable_conv2d")
    dw, pw = params.weights
    return _depthwise(x, dw, params.stride) @ pw + params.bias


def fully_connected(x: np.ndarray, params: FcParams) -> np.ndarray:
    """out[n] = bias[n] + weights[n] . flatten(x), row-major (h, w, c) flatten."""
    x = _require_map(x, "fully_connected")
    n = params.hidden_units
    flat = x.reshape(-1)
    if params.weights.shape != (n, flat.size):
        raise InvalidSpecError(
            f"fully_connected: weights must have shape {(n, flat.size)}, got {params.weights.shape}"
        )
    if params.bias.shape != (n,):
        raise InvalidSpecError(f"fully_connected: bias must have shape ({n},), got {params.bias.shape}")
    return params.weights @ flat + params.bias


def activation(x, mode: str):
    """Elementwise relu/sigmoid, or scalar spatial_max over a 1-channel map.

    sigmoid clips its argument to +-88 before exponentiating (float32 exp
    range); values beyond that are fully saturated anyway.
    """
    if mode == "relu":
        x = np.asarray(x)
        return np.maximum(x, np.zeros((), dtype=x.dtype))
    if mode == "sigmoid":
        x = np.asarray(x)
        z = np.clip(x, -88.0, 88.0)
        return 1.0 / (1.0 + np.exp(-z))
    if mode == "spatial_max":
        x = _require_map(np.asarray(x), "activation(spatial_max)")
        if x.shape[2] != 1:
            raise InvalidSpecError(
                f"activation(spatial_max): requires a single channel, got {x.shape[2]}"
            )
        return float(x.max())
    raise InvalidSpecError(f"activation: unknown mode {mode!r}")


def crop(x: np.ndarray, rect: CropRect) -> np.ndarray:
    """Copy of the inclusive rectangle; channels untouched."""
    x = _require_map(x, "crop")
    h, w, _ = x.shape
    if rect.row1 >= h or rect.col1 >= w:
        raise InvalidCropError(f"crop: rect {rect} exceeds map dims {h}x{w}")
    return x[rect.row0 : rect.row1 + 1, rect.col0 : rect.col1 + 1, :].copy()


def depth_concat(inputs: Sequence[np.ndarray]) -> np.ndarray:
    """Channel-wise concatenation of same-extent maps, in input order."""
    if not inputs:
        raise InvalidSpecError("depth_concat: need at least one input")
    maps = [_require_map(m, "depth_concat") for m in inputs]
    extent = maps[0].shape[:2]
    for m in maps[1:]:
        if m.shape[:2] != extent:
            raise InvalidSpecError(
                f"depth_concat: spatial dims differ: {extent} vs {m.shape[:2]}"
            )
    if len(maps) == 1:
        return maps[0].copy()
    return np.concatenate(maps, axis=2)
