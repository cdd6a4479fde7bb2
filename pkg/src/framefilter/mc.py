"""Per-task microclassifiers: small binary networks fed from base-network taps.

Three architectures are provided, each consuming a (optionally cropped) tap
activation and emitting the probability that the frame is relevant:

* ``ffod`` -- a stack of 1x1 convolutions applied at every grid location,
  followed by a spatial max over the logit grid and a sigmoid.  The same
  per-location template runs everywhere, so detections are translation
  invariant.
* ``lbc`` -- two stride-2 separable convolutions and a 1-unit
  fully-connected head; suited to cropped, localized regions.
* ``wlbc`` -- the lbc extended over a temporal window: a per-frame 1x1
  reduction (computed once per frame and buffered) is depth-concatenated
  across the window before the convolutional trunk scores the center frame.
"""

from __future__ import annotations

import math
import struct
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .base import BaseNetwork, FeatureMapSet, tap_dims
from .errors import (
    InvalidInputError,
    InvalidSpecError,
    SequencingError,
    ValidationError,
)
from .rng import WeightStream
from .tensor import (
    ConvParams,
    CropRect,
    FcParams,
    activation,
    conv2d,
    conv_out_dim,
    crop,
    depth_concat,
    fully_connected,
    separable_conv2d,
)

__all__ = [
    "ARCHS",
    "MicroclassifierSpec",
    "FrameVerdict",
    "WlbcState",
    "make_spec",
    "make_spec_for_shape",
    "default_tap",
    "validate_spec",
    "forward_ffod",
    "forward_lbc",
    "wlbc_push",
    "wlbc_flush",
    "evaluate_all",
    "save_spec",
    "load_spec",
    "clone_spec",
]

ARCHS = ("ffod", "lbc", "wlbc")

FFOD_HIDDEN = (32,)
TRUNK_FILTERS = 32
WLBC_REDUCED = 8
KERNEL = 3
TRUNK_STRIDE = 2


@dataclass
class MicroclassifierSpec:
    """Deployable description of one microclassifier.

    ``weights`` maps block names to float32 arrays; the block set and shapes
    are fixed by ``arch`` and the (cropped) tap dimensions.  ``crop`` is in
    feature coordinates of the tap.  ``window`` is only meaningful for
    ``wlbc``.
    """

    name: str
    arch: str
    tap: str
    weights: dict[str, np.ndarray]
    crop: Optional[CropRect] = None
    threshold: float = 0.5
    window: int = 5

    def cost_layers(self, tap_shape: tuple[int, int, int]):
        return cost_layers(self, tap_shape)


@dataclass(frozen=True)
class FrameVerdict:
    frame_index: int
    mc_name: str
    probability: float
    positive: bool


def _sigmoid_scalar(z: float) -> float:
    z = min(max(float(z), -88.0), 88.0)
    return 1.0 / (1.0 + math.exp(-z))


def _verdict(spec: MicroclassifierSpec, frame_index: int, logit: float) -> FrameVerdict:
    p = _sigmoid_scalar(logit)
    return FrameVerdict(frame_index, spec.name, p, p >= spec.threshold)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def default_tap(arch: str, net: BaseNetwork) -> str:
    """Declared default input tap per architecture.

    ffod scans the whole frame and works best on deep, semantically rich
    activations; lbc reads an earlier tap with more spatial detail; wlbc sits
    one layer deeper to keep its windowed trunk affordable.  These defaults
    keep every architecture's marginal cost an order of magnitude below the
    pixel-input reference classifier (see the cost model tests).
    """
    if arch == "ffod":
        return net.tap_names[-1]
    if arch == "lbc":
        return net.tap_names[min(1, net.depth - 1)]
    if arch == "wlbc":
        return net.tap_names[min(2, net.depth - 1)]
    raise InvalidSpecError(f"unknown architecture {arch!r}")


def _input_dims(net: BaseNetwork, tap: str, rect: Optional[CropRect]) -> tuple[int, int, int]:
    h, w, m = tap_dims(net, tap)
    if rect is not None:
        if rect.row1 >= h or rect.col1 >= w:
            raise InvalidSpecError(f"crop: rect {rect} exceeds tap {tap!r} dims {h}x{w}")
        h, w = rect.height, rect.width
    return h, w, m


def make_spec(
    name: str,
    arch: str,
    net: BaseNetwork,
    seed: int,
    tap: Optional[str] = None,
    crop_rect: Optional[CropRect] = None,
    threshold: float = 0.5,
    window: int = 5,
    hidden: Sequence[int] = FFOD_HIDDEN,
    filters: int = TRUNK_FILTERS,
    reduced: int = WLBC_REDUCED,
) -> MicroclassifierSpec:
    """Build a spec with seeded initial weights sized for the chosen tap."""
    if tap is None:
        tap = default_tap(arch, net)
    shape = _input_dims(net, tap, crop_rect)
    return make_spec_for_shape(
        name, arch, tap, shape, seed, crop_rect, threshold, window, hidden, filters, reduced
    )


def make_spec_for_shape(
    name: str,
    arch: str,
    tap: str,
    input_shape: tuple[int, int, int],
    seed: int,
    crop_rect: Optional[CropRect] = None,
    threshold: float = 0.5,
    window: int = 5,
    hidden: Sequence[int] = FFOD_HIDDEN,
    filters: int = TRUNK_FILTERS,
    reduced: int = WLBC_REDUCED,
) -> MicroclassifierSpec:
    """Build a spec from the (already cropped) feature shape it will consume."""
    if arch not in ARCHS:
        raise InvalidSpecError(f"arch: unknown architecture {arch!r}")
    h, w, m = input_shape
    ws = WeightStream(seed)
    weights: dict[str, np.ndarray] = {}
    if arch == "ffod":
        chain = list(hidden) + [1]
        cin = m
        for i, cout in enumerate(chain):
            weights[f"conv{i}.weight"] = ws.block((1, 1, cin, cout), fan_in=cin)
            weights[f"conv{i}.bias"] = np.zeros(cout, dtype=np.float32)
            cin = cout
    elif arch == "lbc":
        cin = m
        for i in range(2):
            weights[f"sep{i}.depthwise"] = ws.block((KERNEL, KERNEL, cin), fan_in=KERNEL * KERNEL)
            weights[f"sep{i}.pointwise"] = ws.block((cin, filters), fan_in=cin)
            weights[f"sep{i}.bias"] = np.zeros(filters, dtype=np.float32)
            cin = filters
            h, w = conv_out_dim(h, TRUNK_STRIDE), conv_out_dim(w, TRUNK_STRIDE)
        flat = h * w * filters
        weights["fc.weight"] = ws.block((1, flat), fan_in=flat)
        weights["fc.bias"] = np.zeros(1, dtype=np.float32)
    else:  # wlbc
        if window < 3 or window % 2 == 0:
            raise InvalidSpecError(f"window: must be odd and >= 3, got {window}")
        weights["reduce.weight"] = ws.block((1, 1, m, reduced), fan_in=m)
        weights["reduce.bias"] = np.zeros(reduced, dtype=np.float32)
        cat = reduced * window
        weights["sep.depthwise"] = ws.block((KERNEL, KERNEL, cat), fan_in=KERNEL * KERNEL)
        weights["sep.pointwise"] = ws.block((cat, filters), fan_in=cat)
        weights["sep.bias"] = np.zeros(filters, dtype=np.float32)
        flat = conv_out_dim(h, TRUNK_STRIDE) * conv_out_dim(w, TRUNK_STRIDE) * filters
        weights["fc.weight"] = ws.block((1, flat), fan_in=flat)
        weights["fc.bias"] = np.zeros(1, dtype=np.float32)
    spec = MicroclassifierSpec(name, arch, tap, weights, crop_rect, threshold, window)
    return spec


def clone_spec(spec: MicroclassifierSpec, name: str) -> MicroclassifierSpec:
    """Same weights under a new name (weights shared, not copied)."""
    return replace(spec, name=name)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _ffod_chain(spec: MicroclassifierSpec) -> list[int]:
    """Number of 1x1 conv layers, from the weight block names."""
    idx = []
    for key in spec.weights:
        if key.startswith("conv") and key.endswith(".weight"):
            idx.append(int(key[4 : -len(".weight")]))
    if not idx or sorted(idx) != list(range(len(idx))):
        raise InvalidSpecError("weights: ffod blocks must be conv0..convN-1 weight/bias pairs")
    return sorted(idx)


def validate_spec(spec: MicroclassifierSpec, net: BaseNetwork) -> MicroclassifierSpec:
    """Check a spec against the network that will feed it; returns it unchanged.

    Raises InvalidSpecError with a field-level message on the first problem.
    """
    if spec.arch not in ARCHS:
        raise InvalidSpecError(f"arch: unknown architecture {spec.arch!r}")
    if spec.tap not in net.tap_names:
        raise InvalidSpecError(f"tap: unknown tap {spec.tap!r}; network taps: {list(net.tap_names)}")
    if not (0.0 < spec.threshold < 1.0):
        raise InvalidSpecError(f"threshold: must lie in (0, 1), got {spec.threshold}")
    h, w, m = _input_dims(net, spec.tap, spec.crop)

    expected: dict[str, tuple[int, ...]] = {}
    if spec.arch == "ffod":
        cin = m
        for i in _ffod_chain(spec):
            wkey = f"conv{i}.weight"
            shape = spec.weights[wkey].shape
            if len(shape) != 4 or shape[0] != 1 or shape[1] != 1 or shape[2] != cin:
                raise InvalidSpecError(
                    f"weights[{wkey}]: expected 1x1 conv with {cin} input channels, got {shape}"
                )
            expected[wkey] = shape
            expected[f"conv{i}.bias"] = (shape[3],)
            cin = shape[3]
        if cin != 1:
            raise InvalidSpecError(f"weights: final ffod conv must emit 1 channel, got {cin}")
    elif spec.arch == "lbc":
        cin = m
        hh, ww = h, w
        for i in range(2):
            pw = spec.weights.get(f"sep{i}.pointwise")
            if pw is None or pw.ndim != 2 or pw.shape[0] != cin:
                raise InvalidSpecError(
                    f"weights[sep{i}.pointwise]: expected ({cin}, F), got "
                    f"{None if pw is None else pw.shape}"
                )
            f = pw.shape[1]
            expected[f"sep{i}.depthwise"] = (KERNEL, KERNEL, cin)
            expected[f"sep{i}.pointwise"] = (cin, f)
            expected[f"sep{i}.bias"] = (f,)
            cin = f
            hh, ww = conv_out_dim(hh, TRUNK_STRIDE), conv_out_dim(ww, TRUNK_STRIDE)
        expected["fc.weight"] = (1, hh * ww * cin)
        expected["fc.bias"] = (1,)
    else:  # wlbc
        if spec.window < 3 or spec.window % 2 == 0:
            raise InvalidSpecError(f"window: must be odd and >= 3, got {spec.window}")
        rw = spec.weights.get("reduce.weight")
        if rw is None or rw.ndim != 4 or rw.shape[:3] != (1, 1, m):
            raise InvalidSpecError(
                f"weights[reduce.weight]: expected (1, 1, {m}, R), got "
                f"{None if rw is None else rw.shape}"
            )
        r = rw.shape[3]
        cat = r * spec.window
        pw = spec.weights.get("sep.pointwise")
        if pw is None or pw.ndim != 2 or pw.shape[0] != cat:
            raise InvalidSpecError(
                f"weights[sep.pointwise]: expected ({cat}, F), got "
                f"{None if pw is None else pw.shape}"
            )
        f = pw.shape[1]
        expected["reduce.weight"] = (1, 1, m, r)
        expected["reduce.bias"] = (r,)
        expected["sep.depthwise"] = (KERNEL, KERNEL, cat)
        expected["sep.pointwise"] = (cat, f)
        expected["sep.bias"] = (f,)
        expected["fc.weight"] = (1, conv_out_dim(h, TRUNK_STRIDE) * conv_out_dim(w, TRUNK_STRIDE) * f)
        expected["fc.bias"] = (1,)

    for key, shape in expected.items():
        got = spec.weights.get(key)
        if got is None:
            raise InvalidSpecError(f"weights[{key}]: missing block")
        if got.shape != shape:
            raise InvalidSpecError(f"weights[{key}]: expected shape {shape}, got {got.shape}")
    extra = set(spec.weights) - set(expected)
    if extra:
        raise InvalidSpecError(f"weights: unexpected blocks {sorted(extra)}")
    return spec


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def _conv1x1(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return conv2d(x, ConvParams(1, 1, w.shape[3], False, w, b))


def _sep(x: np.ndarray, dw: np.ndarray, pw: np.ndarray, b: np.ndarray) -> np.ndarray:
    return separable_conv2d(x, ConvParams(KERNEL, TRUNK_STRIDE, pw.shape[1], True, (dw, pw), b))


def ffod_logits(spec: MicroclassifierSpec, feat: np.ndarray) -> np.ndarray:
    """The 1-channel logit grid before the spatial max."""
    x = feat
    chain = _ffod_chain(spec)
    for i in chain:
        x = _conv1x1(x, spec.weights[f"conv{i}.weight"], spec.weights[f"conv{i}.bias"])
        if i != chain[-1]:
            x = activation(x, "relu")
    return x


def forward_ffod(spec: MicroclassifierSpec, feat: np.ndarray, frame_index: int = 0) -> FrameVerdict:
    if spec.arch != "ffod":
        raise InvalidSpecError(f"forward_ffod: spec {spec.name!r} has arch {spec.arch!r}")
    logit = activation(ffod_logits(spec, feat), "spatial_max")
    return _verdict(spec, frame_index, logit)


def lbc_logit(spec: MicroclassifierSpec, feat: np.ndarray) -> float:
    x = feat
    for i in range(2):
        x = _sep(x, spec.weights[f"sep{i}.depthwise"], spec.weights[f"sep{i}.pointwise"],
                 spec.weights[f"sep{i}.bias"])
        x = activation(x, "relu")
    out = fully_connected(x, FcParams(1, spec.weights["fc.weight"], spec.weights["fc.bias"]))
    return float(out[0])


def forward_lbc(spec: MicroclassifierSpec, feat: np.ndarray, frame_index: int = 0) -> FrameVerdict:
    if spec.arch != "lbc":
        raise InvalidSpecError(f"forward_lbc: spec {spec.name!r} has arch {spec.arch!r}")
    return _verdict(spec, frame_index, lbc_logit(spec, feat))


@dataclass
class WlbcState:
    """Single-stream buffer of per-frame reduced maps for one wlbc spec.

    ``reduced_evaluations`` counts 1x1 reduction passes; it equals the number
    of frames pushed because each frame's reduction is computed exactly once
    and reused by every window containing it.
    """

    window: int
    buffer: deque = field(default_factory=deque)
    indices: deque = field(default_factory=deque)
    last_index: int = -1
    frames_pushed: int = 0
    reduced_evaluations: int = 0
    flushed: bool = False

    def _append(self, idx: int, reduced: np.ndarray) -> None:
        self.buffer.append(reduced)
        self.indices.append(idx)
        if len(self.buffer) > self.window:
            self.buffer.popleft()
            self.indices.popleft()


def reduced_map(spec: MicroclassifierSpec, feat: np.ndarray) -> np.ndarray:
    """Per-frame 1x1 reduction (with relu) that the wlbc buffers."""
    return activation(_conv1x1(feat, spec.weights["reduce.weight"], spec.weights["reduce.bias"]), "relu")


def wlbc_window_logit(spec: MicroclassifierSpec, reduced_maps: Sequence[np.ndarray]) -> float:
    x = depth_concat(list(reduced_maps))
    x = _sep(x, spec.weights["sep.depthwise"], spec.weights["sep.pointwise"], spec.weights["sep.bias"])
    x = activation(x, "relu")
    out = fully_connected(x, FcParams(1, spec.weights["fc.weight"], spec.weights["fc.bias"]))
    return float(out[0])


def _center_verdict(spec: MicroclassifierSpec, state: WlbcState) -> tuple[int, FrameVerdict]:
    mid = state.window // 2
    center_index = state.indices[mid]
    logit = wlbc_window_logit(spec, state.buffer)
    return center_index, _verdict(spec, center_index, logit)


def wlbc_push(
    spec: MicroclassifierSpec, state: WlbcState, feat: np.ndarray, frame_index: int
) -> Optional[FrameVerdict]:
    """Feed one frame's (cropped) tap; returns the center verdict once warm.

    The first verdict covers frame ``window // 2`` and is emitted when frame
    ``window - 1`` arrives.  Frames must be pushed in strictly increasing
    index order.
    """
    if spec.arch != "wlbc":
        raise InvalidSpecError(f"wlbc_push: spec {spec.name!r} has arch {spec.arch!r}")
    if state.flushed:
        raise SequencingError(f"{spec.name}: push after end-of-stream flush")
    if frame_index <= state.last_index:
        raise SequencingError(
            f"{spec.name}: frame {frame_index} pushed after frame {state.last_index}"
        )
    state._append(frame_index, reduced_map(spec, feat))
    state.reduced_evaluations += 1
    state.frames_pushed += 1
    state.last_index = frame_index
    if len(state.buffer) < state.window:
        return None
    return _center_verdict(spec, state)[1]


def wlbc_flush(spec: MicroclassifierSpec, state: WlbcState) -> list[FrameVerdict]:
    """Resolve the stream tail by replicating the last reduced map.

    Emits the verdicts for trailing frames whose symmetric windows extend
    past the end of the stream.  Frames earlier than ``window // 2`` never
    receive a verdict (there is nothing to replicate at the head).
    """
    state.flushed = True
    out: list[FrameVerdict] = []
    if state.frames_pushed == 0:
        return out
    last_real = state.last_index
    virtual = last_real
    while True:
        if len(state.buffer) == state.window and state.indices[state.window // 2] >= last_real:
            break
        virtual += 1
        state._append(virtual, state.buffer[-1].copy())
        if len(state.buffer) == state.window:
            center_index, verdict = _center_verdict(spec, state)
            if center_index > last_real:
                break  # stream shorter than half a window: no real center left
            out.append(verdict)
            if center_index == last_real:
                break
    return out


def evaluate_all(
    specs: Sequence[MicroclassifierSpec],
    featset: FeatureMapSet,
    states: Optional[dict[str, WlbcState]] = None,
) -> list[FrameVerdict]:
    """Run every spec against one frame's feature maps, in declaration order.

    Windowed specs may withhold their verdict while their buffer warms up;
    everything else contributes exactly one verdict.
    """
    verdicts = []
    for spec in specs:
        feat = featset.maps.get(spec.tap)
        if feat is None:
            raise InvalidInputError(f"{spec.name}: feature set has no tap {spec.tap!r}")
        if spec.crop is not None:
            feat = crop(feat, spec.crop)
        if spec.arch == "ffod":
            verdicts.append(forward_ffod(spec, feat, featset.frame_index))
        elif spec.arch == "lbc":
            verdicts.append(forward_lbc(spec, feat, featset.frame_index))
        elif spec.arch == "wlbc":
            if states is None or spec.name not in states:
                raise InvalidInputError(f"{spec.name}: wlbc requires a WlbcState")
            v = wlbc_push(spec, states[spec.name], feat, featset.frame_index)
            if v is not None:
                verdicts.append(v)
        else:
            raise InvalidSpecError(f"arch: unknown architecture {spec.arch!r}")
    return verdicts


# ---------------------------------------------------------------------------
# Cost description
# ---------------------------------------------------------------------------

def cost_layers(spec: MicroclassifierSpec, tap_shape: tuple[int, int, int]):
    """Per-frame steady-state cost layers given the (uncropped) tap shape."""
    from .metrics import CostParams

    h, w, m = tap_shape
    if spec.crop is not None:
        h, w = spec.crop.height, spec.crop.width
    out = []
    if spec.arch == "ffod":
        cin = m
        for i in _ffod_chain(spec):
            cout = spec.weights[f"conv{i}.weight"].shape[3]
            out.append(CostParams("conv", h, w, cin, kernel_size=1, stride=1, filters=cout))
            cin = cout
    elif spec.arch == "lbc":
        cin = m
        for i in range(2):
            f = spec.weights[f"sep{i}.pointwise"].shape[1]
            out.append(CostParams("separable", h, w, cin, kernel_size=KERNEL, stride=TRUNK_STRIDE, filters=f))
            cin = f
            h, w = conv_out_dim(h, TRUNK_STRIDE), conv_out_dim(w, TRUNK_STRIDE)
        out.append(CostParams("fc", h, w, cin, hidden_units=1))
    else:  # wlbc: reduction once per frame, trunk once per verdict (also per frame)
        r = spec.weights["reduce.weight"].shape[3]
        out.append(CostParams("conv", h, w, m, kernel_size=1, stride=1, filters=r))
        cat = r * spec.window
        f = spec.weights["sep.pointwise"].shape[1]
        out.append(CostParams("separable", h, w, cat, kernel_size=KERNEL, stride=TRUNK_STRIDE, filters=f))
        h, w = conv_out_dim(h, TRUNK_STRIDE), conv_out_dim(w, TRUNK_STRIDE)
        out.append(CostParams("fc", h, w, f, hidden_units=1))
    return out


# ---------------------------------------------------------------------------
# Weight file: little-endian, bit-exact round trip.
#
#   magic "FFMC" | version u32 | arch u8 | name | tap | threshold f64
#   | window u32 | has_crop u8 [| row0 col0 row1 col1 u32]
#   | block_count u32 | per block: name | ndim u32 | dims u32* | float32 data
#
# Strings are u32 length + utf-8 bytes.
# ---------------------------------------------------------------------------

_MC_MAGIC = b"FFMC"
_MC_VERSION = 1
_ARCH_TAGS = {"ffod": 0, "lbc": 1, "wlbc": 2}
_TAG_ARCHS = {v: k for k, v in _ARCH_TAGS.items()}


def _write_str(fh, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_exact(fh, n: int, path) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValidationError(f"{path}: truncated weight file")
    return data


def _read_str(fh, path) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4, path))
    return _read_exact(fh, n, path).decode("utf-8")


def save_spec(path, spec: MicroclassifierSpec) -> None:
    with open(path, "wb") as fh:
        fh.write(_MC_MAGIC)
        fh.write(struct.pack("<IB", _MC_VERSION, _ARCH_TAGS[spec.arch]))
        _write_str(fh, spec.name)
        _write_str(fh, spec.tap)
        fh.write(struct.pack("<dI", spec.threshold, spec.window))
        if spec.crop is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<BIIII", 1, spec.crop.row0, spec.crop.col0,
                                 spec.crop.row1, spec.crop.col1))
        fh.write(struct.pack("<I", len(spec.weights)))
        for key, arr in spec.weights.items():
            _write_str(fh, key)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_spec(path) -> MicroclassifierSpec:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, path) != _MC_MAGIC:
            raise ValidationError(f"{path}: not a microclassifier weight file")
        version, tag = struct.unpack("<IB", _read_exact(fh, 5, path))
        if version != _MC_VERSION:
            raise ValidationError(f"{path}: unsupported weight file version {version}")
        if tag not in _TAG_ARCHS:
            raise ValidationError(f"{path}: unknown architecture tag {tag}")
        name = _read_str(fh, path)
        tap = _read_str(fh, path)
        threshold, window = struct.unpack("<dI", _read_exact(fh, 12, path))
        (has_crop,) = struct.unpack("<B", _read_exact(fh, 1, path))
        rect = None
        if has_crop:
            rect = CropRect(*struct.unpack("<IIII", _read_exact(fh, 16, path)))
        (block_count,) = struct.unpack("<I", _read_exact(fh, 4, path))
        weights = {}
        for _ in range(block_count):
            key = _read_str(fh, path)
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, path))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, path))
            count = 1
            for d in shape:
                count *= d
            raw = _read_exact(fh, 4 * count, path)
            weights[key] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        if fh.read(1):
            raise ValidationError(f"{path}: trailing bytes after weight blocks")
    return MicroclassifierSpec(name, _TAG_ARCHS[tag], tap, weights, rect, threshold, window)
