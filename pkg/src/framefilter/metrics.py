"""Evaluation math: event-level recall/precision/F1, the multiply-add cost
model, the shared-vs-discrete break-even point, and uplink bandwidth
accounting.

Event recall blends two signals for each ground-truth event: *existence*
(was any frame of the event detected) and *overlap* (what fraction of the
event's frames were detected), weighted alpha/beta.  Precision stays the
plain per-frame definition because it measures how much uplink bandwidth
was spent on useful frames.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import InvariantViolationError, UndefinedMetricError, ValidationError
from .events import EventSegment

__all__ = [
    "RecallWeights",
    "CostParams",
    "BitrateModel",
    "BandwidthReport",
    "event_recall",
    "frame_precision",
    "event_f1",
    "multiply_adds",
    "model_cost",
    "layer_cost_table",
    "break_even",
    "bandwidth_report",
    "render_report",
]


@dataclass(frozen=True)
class RecallWeights:
    """Existence/overlap blend; defaults weight finding the event at all
    far above covering every frame of it."""

    alpha: float = 0.9
    beta: float = 0.1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValidationError(f"recall weights must be non-negative: {self}")
        if abs(self.alpha + self.beta - 1.0) > 1e-12:
            raise ValidationError(f"recall weights must sum to 1: {self}")


def _check_disjoint(segments: Sequence[EventSegment]) -> None:
    spans = sorted((s.start_frame, s.end_frame) for s in segments)
    for (s0, e0), (s1, _) in zip(spans, spans[1:]):
        if s1 <= e0:
            raise InvariantViolationError(
                f"predicted segments overlap: [{s0}, {e0}] and starting at {s1}"
            )


def _intersect_len(a: EventSegment, b: EventSegment) -> int:
    lo = max(a.start_frame, b.start_frame)
    hi = min(a.end_frame, b.end_frame)
    return max(0, hi - lo + 1)


def event_recall(
    truth: EventSegment, predicted: Sequence[EventSegment], weights: RecallWeights = RecallWeights()
) -> float:
    """alpha * existence + beta * overlap for one ground-truth event.

    Overlap sums the intersection with every predicted segment and divides
    by the truth length once; predictions must be pairwise disjoint, which
    bounds overlap at 1.
    """
    _check_disjoint(predicted)
    intersect = sum(_intersect_len(truth, p) for p in predicted)
    existence = 1.0 if intersect > 0 else 0.0
    overlap = intersect / truth.length
    return weights.alpha * existence + weights.beta * overlap


def frame_precision(predicted_frames: Iterable[int], truth_frames: Iterable[int]) -> float:
    """Fraction of predicted frames that are true positives; 1.0 when nothing
    was predicted (no bandwidth spent, none wasted)."""
    pred = set(predicted_frames)
    if not pred:
        return 1.0
    truth = set(truth_frames)
    return len(pred & truth) / len(pred)


def _segment_frames(segments: Iterable[EventSegment]) -> set[int]:
    frames: set[int] = set()
    for s in segments:
        frames.update(range(s.start_frame, s.end_frame + 1))
    return frames


def event_f1(
    truth_events: Sequence[EventSegment],
    predicted_events: Sequence[EventSegment],
    weights: RecallWeights = RecallWeights(),
) -> float:
    """Harmonic mean of frame precision and mean per-event recall."""
    if not truth_events:
        raise UndefinedMetricError("event_f1: no ground-truth events")
    _check_disjoint(predicted_events)
    recall = sum(event_recall(t, predicted_events, weights) for t in truth_events) / len(truth_events)
    precision = frame_precision(_segment_frames(predicted_events), _segment_frames(truth_events))
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Multiply-add cost model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostParams:
    """One layer's cost inputs.  ``height``/``width``/``channels`` describe the
    layer's input map; convolutional kinds also need kernel/stride/filters,
    the fc kind needs hidden_units."""

    kind: str  # "fc" | "conv" | "separable"
    height: int
    width: int
    channels: int
    kernel_size: int = 0
    stride: int = 1
    filters: int = 0
    hidden_units: int = 0


def multiply_adds(params: CostParams) -> int:
    """Multiply-add count of a single layer.

    fc:        N * H * W * M
    conv:      ceil(H/S) * ceil(W/S) * M * K^2 * F
    separable: ceil(H/S) * ceil(W/S) * M * (K^2 + F)

    The ceil matches the implemented "same"-padded output shapes.
    """
    h, w, m = params.height, params.width, params.channels
    if min(h, w, m) < 1:
        raise ValidationError(f"cost params must be positive: {params}")
    if params.kind == "fc":
        if params.hidden_units < 1:
            raise ValidationError("fc cost needs hidden_units >= 1")
        return params.hidden_units * h * w * m
    if params.kind in ("conv", "separable"):
        k, s, f = params.kernel_size, params.stride, params.filters
        if k < 1 or k % 2 == 0 or s < 1 or f < 1:
            raise ValidationError(f"conv cost needs odd K, S >= 1, F >= 1: {params}")
        oh = -(-h // s)
        ow = -(-w // s)
        per_loc = m * (k * k + f) if params.kind == "separable" else m * k * k * f
        return oh * ow * per_loc
    raise ValidationError(f"unknown layer kind {params.kind!r}")


def layer_cost_table(model, input_dims) -> list[tuple[str, CostParams, int]]:
    """(label, params, multiply_adds) per layer, shapes propagated by the model."""
    layers = model.cost_layers(input_dims)
    return [(f"layer{i}:{p.kind}", p, multiply_adds(p)) for i, p in enumerate(layers)]


def model_cost(model, input_dims) -> int:
    """Total multiply-adds of a model at the given input dims.

    The model supplies its own per-layer breakdown via ``cost_layers``;
    crops shrink every downstream layer's dims.
    """
    return sum(macs for _, _, macs in layer_cost_table(model, input_dims))


def break_even(base_cost: float, mc_marginal_cost: float, dc_cost: float) -> Optional[int]:
    """Smallest classifier count where sharing wins strictly.

    Returns the least n with base + n * mc < n * dc, or None when the
    discrete classifier is never beaten (dc <= mc).  Ties favor the
    discrete baseline.
    """
    if min(base_cost, mc_marginal_cost, dc_cost) < 0:
        raise ValidationError("break_even: costs must be non-negative")
    if dc_cost <= mc_marginal_cost:
        return None
    return int(base_cost // (dc_cost - mc_marginal_cost)) + 1


# ---------------------------------------------------------------------------
# Bandwidth accounting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BitrateModel:
    """Analytic uplink model: frames are worth bitrate/frame_rate bits.

    ``full_stream_bps`` is what uploading everything would cost;
    ``event_bps`` is the re-encode rate applied to matched frames.  The
    model reports the target-bitrate upper bound (real uploads are bursty
    and average below target).
    """

    frame_rate: float = 15.0
    full_stream_bps: float = 2e6
    event_bps: float = 5e5

    def __post_init__(self):
        if min(self.frame_rate, self.full_stream_bps, self.event_bps) <= 0:
            raise ValidationError(f"bitrate model fields must be positive: {self}")


@dataclass(frozen=True)
class BandwidthReport:
    uploaded_bits: float
    full_bits: float
    savings_factor: float  # math.inf when nothing was uploaded


def bandwidth_report(matched_frames: int, total_frames: int, model: BitrateModel) -> BandwidthReport:
    if matched_frames > total_frames:
        raise ValidationError(
            f"matched frames {matched_frames} exceed total frames {total_frames}"
        )
    full_bits = total_frames / model.frame_rate * model.full_stream_bps
    uploaded_bits = matched_frames / model.frame_rate * model.event_bps
    savings = math.inf if uploaded_bits == 0 else full_bits / uploaded_bits
    return BandwidthReport(uploaded_bits, full_bits, savings)


# ---------------------------------------------------------------------------
# Report file
# ---------------------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def render_report(metrics: Optional[dict], bandwidth: BandwidthReport, cost: dict, run: dict) -> str:
    """Deterministic JSON text for the run report (sorted keys, 'inf' marker)."""
    doc = {
        "metrics": _jsonable(metrics),
        "bandwidth": {
            "uploaded_bits": _jsonable(bandwidth.uploaded_bits),
            "full_bits": _jsonable(bandwidth.full_bits),
            "savings_factor": _jsonable(bandwidth.savings_factor),
        },
        "cost": _jsonable(cost),
        "run": _jsonable(run),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
