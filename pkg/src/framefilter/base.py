"""The shared base network: one fixed convolutional feature extractor per stream.

The network is evaluated once per frame and exposes every layer's post-relu
activation as a named tap ("conv1" .. "convL").  All downstream classifiers
read from these taps, so the per-frame pixel processing cost is paid once no
matter how many classifiers are attached.

Weights are a pure function of a 64-bit seed: layer 1 is a standard 3x3
convolution over RGB, the remaining layers are 3x3 separable convolutions,
all with stride 2 (so tap k has spatial dims ceil(dim / 2^k)).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .errors import InvalidInputError, InvalidSpecError, ValidationError
from .rng import WeightStream
from .tensor import ConvParams, CropRect, activation, conv2d, conv_out_dim, separable_conv2d

__all__ = [
    "BaseNetwork",
    "FeatureMapSet",
    "build_base",
    "extract",
    "rescale_crop",
    "suggest_tap",
    "tap_dims",
    "save_feature_cache",
    "load_feature_cache",
]

DEFAULT_WIDTHS = (8, 16, 32, 64)
KERNEL = 3
STRIDE = 2
INPUT_CHANNELS = 3


@dataclass(frozen=True)
class BaseNetwork:
    seed: int
    input_height: int
    input_width: int
    layers: tuple[ConvParams, ...]
    tap_names: tuple[str, ...]

    @property
    def depth(self) -> int:
        return len(self.layers)

    def cost_layers(self, input_dims: tuple[int, int]):
        """Per-layer cost descriptions for the given frame dims (channels=3)."""
        from .metrics import CostParams

        h, w = input_dims
        m = INPUT_CHANNELS
        out = []
        for layer in self.layers:
            kind = "separable" if layer.separable else "conv"
            out.append(
                CostParams(
                    kind=kind,
                    height=h,
                    width=w,
                    channels=m,
                    kernel_size=layer.kernel_size,
                    stride=layer.stride,
                    filters=layer.filters,
                )
            )
            h, w = conv_out_dim(h, layer.stride), conv_out_dim(w, layer.stride)
            m = layer.filters
        return out


@dataclass(frozen=True)
class FeatureMapSet:
    """All tap activations produced by one base-network evaluation of a frame."""

    frame_index: int
    maps: dict[str, np.ndarray]


def build_base(
    seed: int,
    input_dims: tuple[int, int],
    depth: int = 4,
    widths: Sequence[int] = DEFAULT_WIDTHS,
) -> BaseNetwork:
    """Construct the seeded base network for frames of the given (H, W).

    Weights come from a splitmix64 stream scaled by 1/sqrt(fan-in); biases
    are zero.  Two calls with equal arguments return identical networks.
    """
    widths = tuple(int(f) for f in widths)
    if depth != len(widths):
        raise InvalidSpecError(f"build_base: depth {depth} != len(widths) {len(widths)}")
    if depth < 1:
        raise InvalidSpecError("build_base: depth must be >= 1")
    h, w = input_dims
    if h < 2**depth or w < 2**depth:
        raise InvalidSpecError(
            f"build_base: input dims {h}x{w} too small for depth {depth} (need >= {2**depth})"
        )
    ws = WeightStream(seed)
    layers = []
    m = INPUT_CHANNELS
    for i, f in enumerate(widths):
        bias = np.zeros(f, dtype=np.float32)
        if i == 0:
            weights = ws.block((KERNEL, KERNEL, m, f), fan_in=KERNEL * KERNEL * m)
            layers.append(ConvParams(KERNEL, STRIDE, f, False, weights, bias))
        else:
            dw = ws.block((KERNEL, KERNEL, m), fan_in=KERNEL * KERNEL)
            pw = ws.block((m, f), fan_in=m)
            layers.append(ConvParams(KERNEL, STRIDE, f, True, (dw, pw), bias))
        m = f
    names = tuple(f"conv{i + 1}" for i in range(depth))
    return BaseNetwork(seed, h, w, tuple(layers), names)


def tap_dims(net: BaseNetwork, tap: str) -> tuple[int, int, int]:
    """(height, width, channels) of the named tap's activation."""
    if tap not in net.tap_names:
        raise InvalidSpecError(f"unknown tap {tap!r}; network taps: {list(net.tap_names)}")
    k = net.tap_names.index(tap) + 1
    h, w = net.input_height, net.input_width
    for _ in range(k):
        h, w = conv_out_dim(h, STRIDE), conv_out_dim(w, STRIDE)
    return h, w, net.layers[k - 1].filters


def _forward_taps(net: BaseNetwork, frame: np.ndarray) -> dict[str, np.ndarray]:
    x = frame
    maps = {}
    for name, layer in zip(net.tap_names, net.layers):
        x = separable_conv2d(x, layer) if layer.separable else conv2d(x, layer)
        x = activation(x, "relu")
        maps[name] = x
    return maps


def extract(
    net: BaseNetwork, frames: Sequence[np.ndarray], start_index: int = 0
) -> list[FeatureMapSet]:
    """Evaluate the base network once per frame of a batch.

    Frames must be (H, W, 3) float arrays pre-scaled to [0, 1] and matching
    the network's build dims.  Results are independent of how the stream is
    batched.
    """
    out = []
    for i, frame in enumerate(frames):
        frame = np.asarray(frame)
        if frame.ndim != 3 or frame.shape != (net.input_height, net.input_width, INPUT_CHANNELS):
            raise InvalidInputError(
                f"extract: frame {start_index + i} has shape {frame.shape}, network expects "
                f"({net.input_height}, {net.input_width}, {INPUT_CHANNELS})"
            )
        out.append(FeatureMapSet(start_index + i, _forward_taps(net, frame)))
    return out


def rescale_crop(
    pixel_rect: CropRect, frame_dims: tuple[int, int], feat_dims: tuple[int, int]
) -> CropRect:
    """Map a pixel-space rectangle onto feature-map coordinates.

    Each corner coordinate is divided by the per-axis scale
    (frame_dim / feat_dim) and floored; the result is clamped to the feature
    bounds and is never empty.
    """
    frame_h, frame_w = frame_dims
    feat_h, feat_w = feat_dims
    if pixel_rect.row1 >= frame_h or pixel_rect.col1 >= frame_w:
        raise InvalidInputError(
            f"rescale_crop: pixel rect {pixel_rect} exceeds frame dims {frame_h}x{frame_w}"
        )
    row_scale = frame_h / feat_h
    col_scale = frame_w / feat_w
    return CropRect(
        row0=min(int(pixel_rect.row0 // row_scale), feat_h - 1),
        col0=min(int(pixel_rect.col0 // col_scale), feat_w - 1),
        row1=min(int(pixel_rect.row1 // row_scale), feat_h - 1),
        col1=min(int(pixel_rect.col1 // col_scale), feat_w - 1),
    )


def suggest_tap(object_height_px: float, frame_height_px: float, net: BaseNetwork) -> str:
    """Pick the earliest tap whose spatial reduction suits an object size.

    The target reduction is 20:1 for a 40 px reference object, scaled
    linearly with the object's height.  Returns the first tap whose
    frame-to-tap height ratio reaches the target, or the deepest tap when
    none does.
    """
    if object_height_px > frame_height_px:
        raise InvalidInputError("suggest_tap: object taller than the frame")
    target = 20.0 * (object_height_px / 40.0)
    for name in net.tap_names:
        th, _, _ = tap_dims(net, name)
        if frame_height_px / th >= target:
            return name
    return net.tap_names[-1]


# ---------------------------------------------------------------------------
# Feature-map cache file: little-endian, bit-exact round trip.
#
#   magic "FFFM" | version u32 | frame_count u32 | tap_count u32
#   per tap:  name_len u32 | name utf-8 | h u32 | w u32 | c u32
#   per frame: frame_index u32 | per tap: h*w*c float32
# ---------------------------------------------------------------------------

_CACHE_MAGIC = b"FFFM"
_CACHE_VERSION = 1


def save_feature_cache(path, featsets: Sequence[FeatureMapSet]) -> None:
    if not featsets:
        raise ValidationError("save_feature_cache: nothing to write")
    tap_order = list(featsets[0].maps.keys())
    shapes = {name: featsets[0].maps[name].shape for name in tap_order}
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<III", _CACHE_VERSION, len(featsets), len(tap_order)))
        for name in tap_order:
            raw = name.encode("utf-8")
            h, w, c = shapes[name]
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<III", h, w, c))
        for fs in featsets:
            if list(fs.maps.keys()) != tap_order:
                raise ValidationError("save_feature_cache: inconsistent tap names across frames")
            fh.write(struct.pack("<I", fs.frame_index))
            for name in tap_order:
                arr = fs.maps[name]
                if arr.shape != shapes[name]:
                    raise ValidationError("save_feature_cache: inconsistent tap shapes across frames")
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh: BinaryIO, n: int, path) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValidationError(f"{path}: truncated feature cache")
    return data


def load_feature_cache(path) -> list[FeatureMapSet]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, path) != _CACHE_MAGIC:
            raise ValidationError(f"{path}: not a feature cache file")
        version, frame_count, tap_count = struct.unpack("<III", _read_exact(fh, 12, path))
        if version != _CACHE_VERSION:
            raise ValidationError(f"{path}: unsupported cache version {version}")
        taps = []
        for _ in range(tap_count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, path))
            name = _read_exact(fh, name_len, path).decode("utf-8")
            h, w, c = struct.unpack("<III", _read_exact(fh, 12, path))
            taps.append((name, (h, w, c)))
        out = []
        for _ in range(frame_count):
            (frame_index,) = struct.unpack("<I", _read_exact(fh, 4, path))
            maps = {}
            for name, (h, w, c) in taps:
                raw = _read_exact(fh, 4 * h * w * c, path)
                maps[name] = np.frombuffer(raw, dtype="<f4").reshape(h, w, c).copy()
            out.append(FeatureMapSet(frame_index, maps))
        if fh.read(1):
            raise ValidationError(f"{path}: trailing bytes after declared frames")
    return out
