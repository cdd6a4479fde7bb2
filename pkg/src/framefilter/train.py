"""Offline training of microclassifier weights on labeled feature maps.

Binary cross-entropy on the per-frame probability, minimized with
SGD-plus-momentum.  Gradients are hand-written reverse-mode passes through
the exact forward kernels, so a finite-difference check against the loss is
meaningful.  The windowed architecture is trained on precomposed
``window``-frame stacks labeled by their center frame.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .base import load_feature_cache
from .errors import DegenerateDataError, InvalidInputError, ValidationError
from .mc import MicroclassifierSpec, _conv1x1, _ffod_chain, _sigmoid_scalar
from .tensor import CropRect, _depthwise, _pad_same, _window_view, conv_out_dim, crop

__all__ = [
    "TrainConfig",
    "LabeledFeatureSet",
    "TrainResult",
    "loss_and_gradients",
    "sgd_update",
    "train",
    "load_labels_csv",
    "build_feature_dataset",
    "dataset_from_cache",
]

PROB_CLAMP = 1e-7
TRUNK_STRIDE = 2


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs: float = 1.0  # fractional epochs allowed
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be positive: {self.learning_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise ValidationError(f"momentum must lie in [0, 1): {self.momentum}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be non-negative: {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1: {self.batch_size}")


@dataclass
class LabeledFeatureSet:
    """(feature, label) pairs sharing one tap/crop.  For the windowed
    architecture each feature is a (window, h, w, c) stack."""

    examples: list
    tap: str
    crop: Optional[CropRect] = None


@dataclass
class TrainResult:
    spec: MicroclassifierSpec
    epoch_mean_losses: list[float] = field(default_factory=list)
    batch_losses: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def _bce(p: float, y: int) -> float:
    pc = min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)
    return -(y * math.log(pc) + (1 - y) * math.log(1.0 - pc))


def _dloss_dlogit(p: float, y: int) -> float:
    # Zero where the probability clamp is active: the clamped loss is flat there.
    if p <= PROB_CLAMP or p >= 1.0 - PROB_CLAMP:
        return 0.0
    return p - y


# ---------------------------------------------------------------------------
# Backward kernels (mirrors of the forward ops in tensor.py)
# ---------------------------------------------------------------------------

def _scatter_windows(gcols: np.ndarray, x_shape, k: int, stride: int) -> np.ndarray:
    """Adjoint of the KxK window gather: accumulate window grads back onto the
    padded input, then strip the padding."""
    h, w, m = x_shape
    p = k // 2
    oh, ow = gcols.shape[:2]
    gpad = np.zeros((h + 2 * p, w + 2 * p, m), dtype=gcols.dtype)
    for dy in range(k):
        for dx in range(k):
            gpad[dy : dy + (oh - 1) * stride + 1 : stride,
                 dx : dx + (ow - 1) * stride + 1 : stride, :] += gcols[:, :, dy, dx, :]
    return gpad[p : p + h, p : p + w, :]


def _conv2d_backward(x: np.ndarray, w: np.ndarray, stride: int, g: np.ndarray):
    k, _, m, f = w.shape
    oh, ow = g.shape[:2]
    cols = _window_view(_pad_same(x, k), oh, ow, k, stride).reshape(oh * ow, k * k * m)
    gmat = g.reshape(oh * ow, f)
    gw = (cols.T @ gmat).reshape(k, k, m, f)
    gb = gmat.sum(axis=0)
    gcols = (gmat @ w.reshape(k * k * m, f).T).reshape(oh, ow, k, k, m)
    gx = _scatter_windows(gcols, x.shape, k, stride)
    return gx, gw, gb


def _depthwise_backward(x: np.ndarray, dw: np.ndarray, stride: int, g: np.ndarray):
    k = dw.shape[0]
    oh, ow = g.shape[:2]
    view = _window_view(_pad_same(x, k), oh, ow, k, stride)
    gdw = np.einsum("ijklc,ijc->klc", view, g)
    h, w, m = x.shape
    p = k // 2
    gpad = np.zeros((h + 2 * p, w + 2 * p, m), dtype=g.dtype)
    for dy in range(k):
        for dx in range(k):
            gpad[dy : dy + (oh - 1) * stride + 1 : stride,
                 dx : dx + (ow - 1) * stride + 1 : stride, :] += g * dw[dy, dx]
    return gpad[p : p + h, p : p + w, :], gdw


def _pointwise_backward(d: np.ndarray, pw: np.ndarray, g: np.ndarray):
    f = pw.shape[1]
    m = d.shape[2]
    gmat = g.reshape(-1, f)
    dmat = d.reshape(-1, m)
    gpw = dmat.T @ gmat
    gb = gmat.sum(axis=0)
    gd = (gmat @ pw.T).reshape(d.shape)
    return gd, gpw, gb


# ---------------------------------------------------------------------------
# Per-architecture forward + reverse passes
# ---------------------------------------------------------------------------

def _ffod_loss_grads(spec: MicroclassifierSpec, feat: np.ndarray, y: int):
    chain = _ffod_chain(spec)
    acts = [feat]
    x = feat
    for pos, i in enumerate(chain):
        x = _conv1x1(x, spec.weights[f"conv{i}.weight"], spec.weights[f"conv{i}.bias"])
        if pos != len(chain) - 1:
            x = np.maximum(x, np.zeros((), dtype=x.dtype))
        acts.append(x)
    logits = acts[-1]
    # subgradient of the spatial max: route to the first argmax (row-major)
    flat_idx = int(np.argmax(logits))
    logit = float(logits.flat[flat_idx])
    p = _sigmoid_scalar(logit)
    loss = _bce(p, y)
    g = np.zeros_like(logits)
    g.flat[flat_idx] = _dloss_dlogit(p, y)
    grads = {}
    for pos in reversed(range(len(chain))):
        i = chain[pos]
        gx, gw, gb = _conv2d_backward(acts[pos], spec.weights[f"conv{i}.weight"], 1, g)
        grads[f"conv{i}.weight"] = gw
        grads[f"conv{i}.bias"] = gb
        if pos > 0:
            gx = gx * (acts[pos] > 0)
        g = gx
    return loss, grads


def _trunk_forward(weights: dict, prefix: str, x: np.ndarray):
    """Separable conv caches: (depthwise out, pre-activation, post-relu)."""
    d = _depthwise(x, weights[f"{prefix}.depthwise"], TRUNK_STRIDE)
    z = d @ weights[f"{prefix}.pointwise"] + weights[f"{prefix}.bias"]
    return d, z, np.maximum(z, np.zeros((), dtype=z.dtype))


def _fc_forward(weights: dict, a: np.ndarray) -> float:
    return float(weights["fc.weight"] @ a.reshape(-1) + weights["fc.bias"])


def _fc_backward(weights: dict, a: np.ndarray, glogit: float, grads: dict) -> np.ndarray:
    flat = a.reshape(-1)
    grads["fc.weight"] = (glogit * flat)[np.newaxis, :]
    grads["fc.bias"] = np.full(1, glogit, dtype=a.dtype)
    return (glogit * weights["fc.weight"][0]).reshape(a.shape)


def _lbc_loss_grads(spec: MicroclassifierSpec, feat: np.ndarray, y: int):
    w = spec.weights
    d0, z0, a0 = _trunk_forward(w, "sep0", feat)
    d1, z1, a1 = _trunk_forward(w, "sep1", a0)
    logit = _fc_forward(w, a1)
    p = _sigmoid_scalar(logit)
    loss = _bce(p, y)
    grads: dict[str, np.ndarray] = {}
    ga1 = _fc_backward(w, a1, _dloss_dlogit(p, y), grads)
    gz1 = ga1 * (z1 > 0)
    gd1, grads["sep1.pointwise"], grads["sep1.bias"] = _pointwise_backward(d1, w["sep1.pointwise"], gz1)
    ga0, grads["sep1.depthwise"] = _depthwise_backward(a0, w["sep1.depthwise"], TRUNK_STRIDE, gd1)
    gz0 = ga0 * (z0 > 0)
    gd0, grads["sep0.pointwise"], grads["sep0.bias"] = _pointwise_backward(d0, w["sep0.pointwise"], gz0)
    _, grads["sep0.depthwise"] = _depthwise_backward(feat, w["sep0.depthwise"], TRUNK_STRIDE, gd0)
    return loss, grads


def _wlbc_loss_grads(spec: MicroclassifierSpec, window_feats, y: int):
    w = spec.weights
    feats = [np.asarray(f) for f in window_feats]
    if len(feats) != spec.window:
        raise InvalidInputError(
            f"{spec.name}: wlbc example must hold {spec.window} frames, got {len(feats)}"
        )
    pre = [_conv1x1(f, w["reduce.weight"], w["reduce.bias"]) for f in feats]
    red = [np.maximum(z, np.zeros((), dtype=z.dtype)) for z in pre]
    cat = np.concatenate(red, axis=2)
    d, z, a = _trunk_forward(w, "sep", cat)
    logit = _fc_forward(w, a)
    p = _sigmoid_scalar(logit)
    loss = _bce(p, y)
    grads: dict[str, np.ndarray] = {}
    ga = _fc_backward(w, a, _dloss_dlogit(p, y), grads)
    gz = ga * (z > 0)
    gd, grads["sep.pointwise"], grads["sep.bias"] = _pointwise_backward(d, w["sep.pointwise"], gz)
    gcat, grads["sep.depthwise"] = _depthwise_backward(cat, w["sep.depthwise"], TRUNK_STRIDE, gd)
    r = w["reduce.weight"].shape[3]
    grads["reduce.weight"] = np.zeros_like(w["reduce.weight"])
    grads["reduce.bias"] = np.zeros_like(w["reduce.bias"])
    for i, f in enumerate(feats):
        gslice = gcat[:, :, i * r : (i + 1) * r] * (pre[i] > 0)
        _, gw, gb = _conv2d_backward(f, w["reduce.weight"], 1, gslice)
        grads["reduce.weight"] += gw
        grads["reduce.bias"] += gb
    return loss, grads


def loss_and_gradients(spec: MicroclassifierSpec, example) -> tuple[float, dict[str, np.ndarray]]:
    """BCE loss and gradients for one (feature, label) pair.

    The probability is clamped to [1e-7, 1 - 1e-7] inside the loss, so the
    loss is bounded by -ln(1e-7) and the gradient is zero wherever the clamp
    is active.
    """
    feat, label = example
    y = int(label)
    if y not in (0, 1):
        raise ValidationError(f"labels must be 0 or 1, got {label!r}")
    if spec.arch == "ffod":
        return _ffod_loss_grads(spec, np.asarray(feat), y)
    if spec.arch == "lbc":
        return _lbc_loss_grads(spec, np.asarray(feat), y)
    if spec.arch == "wlbc":
        return _wlbc_loss_grads(spec, feat, y)
    raise ValidationError(f"unknown architecture {spec.arch!r}")


def sgd_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    velocity: dict[str, np.ndarray],
    config: TrainConfig,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """v <- momentum * v - lr * g;  w <- w + v.  Returns (params, velocity)."""
    new_params, new_velocity = {}, {}
    for key, w in params.items():
        if grads[key].shape != w.shape:
            raise ValidationError(f"gradient shape mismatch for {key}")
        v = config.momentum * velocity[key] - config.learning_rate * grads[key]
        new_velocity[key] = v
        new_params[key] = w + v
    return new_params, new_velocity


def train(spec: MicroclassifierSpec, data: LabeledFeatureSet, config: TrainConfig) -> TrainResult:
    """Seeded mini-batch SGD over the labeled set.

    Batches never span an epoch boundary; each epoch reshuffles with the
    config seed's stream, so the whole run is a pure function of
    (spec, data, config).  ``epochs`` may be fractional; 0 returns the spec
    untouched.
    """
    examples = data.examples
    if not examples:
        raise DegenerateDataError("train: empty dataset")
    classes = {int(label) for _, label in examples}
    if not classes <= {0, 1}:
        raise ValidationError(f"train: labels must be binary, got {sorted(classes)}")
    if len(classes) < 2:
        raise DegenerateDataError(f"train: single-class data (all labels {classes.pop()})")

    params = {k: v.copy() for k, v in spec.weights.items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    working = replace(spec, weights=params)
    rng = np.random.default_rng(config.seed)

    n = len(examples)
    total = int(round(config.epochs * n))
    consumed = 0
    perm = None
    pos = n
    batch_losses: list[float] = []
    epoch_loss_sums: dict[int, float] = {}
    epoch_counts: dict[int, int] = {}

    while consumed < total:
        if pos >= n:
            perm = rng.permutation(n)
            pos = 0
        take = min(config.batch_size, n - pos, total - consumed)
        epoch = consumed // n
        batch = perm[pos : pos + take]
        pos += take
        consumed += take

        loss_sum = 0.0
        grad_sum: Optional[dict[str, np.ndarray]] = None
        for j in batch:
            loss, grads = loss_and_gradients(working, examples[j])
            loss_sum += loss
            if grad_sum is None:
                grad_sum = grads
            else:
                for key in grad_sum:
                    grad_sum[key] = grad_sum[key] + grads[key]
        grad_mean = {k: v / take for k, v in grad_sum.items()}
        params, velocity = sgd_update(params, grad_mean, velocity, config)
        working = replace(working, weights=params)
        batch_losses.append(loss_sum / take)
        epoch_loss_sums[epoch] = epoch_loss_sums.get(epoch, 0.0) + loss_sum
        epoch_counts[epoch] = epoch_counts.get(epoch, 0) + take

    epoch_means = [epoch_loss_sums[e] / epoch_counts[e] for e in sorted(epoch_counts)]
    return TrainResult(working, epoch_means, batch_losses)


# ---------------------------------------------------------------------------
# Dataset construction
# ---------------------------------------------------------------------------

def load_labels_csv(path) -> dict[int, int]:
    """frame_index -> 0/1 from a 'frame_index,label' CSV (header required)."""
    labels = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "frame_index" not in reader.fieldnames:
            raise ValidationError(f"{path}: expected header 'frame_index,label'")
        for row in reader:
            labels[int(row["frame_index"])] = int(row["label"])
    return labels


def build_feature_dataset(
    featsets: Sequence,
    labels: dict[int, int],
    tap: str,
    crop_rect: Optional[CropRect] = None,
    arch: str = "lbc",
    window: int = 5,
) -> LabeledFeatureSet:
    """Pair tap activations with labels; windows are precomposed for wlbc.

    Frames without a label row are skipped (for wlbc the whole window must
    be labeled and contiguous).
    """
    def tap_of(fs):
        feat = fs.maps.get(tap)
        if feat is None:
            raise InvalidInputError(f"feature set for frame {fs.frame_index} lacks tap {tap!r}")
        return crop(feat, crop_rect) if crop_rect is not None else feat

    examples = []
    if arch == "wlbc":
        half = window // 2
        ordered = sorted(featsets, key=lambda fs: fs.frame_index)
        for mid in range(half, len(ordered) - half):
            group = ordered[mid - half : mid + half + 1]
            indices = [fs.frame_index for fs in group]
            if indices != list(range(indices[0], indices[0] + window)):
                continue
            center = ordered[mid].frame_index
            if center not in labels:
                continue
            examples.append((np.stack([tap_of(fs) for fs in group]), labels[center]))
    else:
        for fs in featsets:
            if fs.frame_index in labels:
                examples.append((tap_of(fs), labels[fs.frame_index]))
    return LabeledFeatureSet(examples, tap, crop_rect)


def dataset_from_cache(
    cache_path,
    labels_path,
    tap: str,
    crop_rect: Optional[CropRect] = None,
    arch: str = "lbc",
    window: int = 5,
) -> LabeledFeatureSet:
    """Read a feature cache file plus its label CSV into a training set."""
    featsets = load_feature_cache(cache_path)
    labels = load_labels_csv(labels_path)
    return build_feature_dataset(featsets, labels, tap, crop_rect, arch, window)
