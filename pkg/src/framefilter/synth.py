"""Synthetic labeled streams: noisy background plus a planted bright blob
during labeled events.

The construction keeps the task cleanly separable: background pixels stay
below ``background_level`` while every event frame carries a disk of pixels
lifted well above it, at a position and intensity fixed per event.  Labels
are exact by construction, so the generator doubles as ground truth for the
end-to-end metrics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import GenerationError, ValidationError
from .stream import FrameStreamWriter

__all__ = ["BlobTask", "generate_synthetic"]


@dataclass(frozen=True)
class BlobTask:
    prevalence: float = 0.1
    min_event_len: int = 10
    max_event_len: int = 30
    background_level: int = 80  # exclusive upper bound on background pixels
    blob_min_intensity: int = 130
    blob_max_intensity: int = 200
    blob_radius_frac: float = 0.18  # of the shorter frame side

    def __post_init__(self):
        if not (0.0 < self.prevalence < 1.0):
            raise ValidationError(f"prevalence must lie in (0, 1): {self.prevalence}")
        if not (1 <= self.min_event_len <= self.max_event_len):
            raise ValidationError(
                f"event lengths must satisfy 1 <= min <= max: "
                f"{self.min_event_len}..{self.max_event_len}"
            )


def _plan_events(rng: np.random.Generator, frame_count: int, task: BlobTask) -> list[tuple[int, int]]:
    """Event (start, length) list hitting the target prevalence within 10%."""
    target = int(round(task.prevalence * frame_count))
    if target < task.min_event_len:
        raise GenerationError(
            f"cannot place any event: target positive frames {target} < "
            f"min event length {task.min_event_len}"
        )
    lengths = []
    total = 0
    while total < target:
        length = int(rng.integers(task.min_event_len, task.max_event_len + 1))
        if total + length > target:
            length = max(task.min_event_len, target - total)
        lengths.append(length)
        total += length
    k = len(lengths)
    free = frame_count - total - (k - 1)  # interior gaps need >= 1 frame
    if free < 0:
        raise GenerationError(
            f"cannot pack {k} events totalling {total} frames into {frame_count}"
        )
    if abs(total - task.prevalence * frame_count) > 0.1 * task.prevalence * frame_count:
        raise GenerationError(
            f"planned positive frames {total} miss prevalence {task.prevalence} by > 10%"
        )
    extra = rng.multinomial(free, np.full(k + 1, 1.0 / (k + 1)))
    events = []
    cursor = 0
    for i, length in enumerate(lengths):
        cursor += int(extra[i]) + (1 if i > 0 else 0)
        events.append((cursor, length))
        cursor += length
    return events


def _disk_mask(h: int, w: int, cy: int, cx: int, radius: int) -> np.ndarray:
    ys = np.arange(h)[:, None] - cy
    xs = np.arange(w)[None, :] - cx
    return (ys * ys + xs * xs) <= radius * radius


def generate_synthetic(
    seed: int,
    frame_count: int,
    dims: tuple[int, int],
    task: BlobTask,
    stream_path,
    labels_path,
) -> dict:
    """Write a deterministic labeled stream; returns placement summary.

    The realized positive-frame fraction is guaranteed within 10% of the
    requested prevalence or generation fails.
    """
    if frame_count < 1:
        raise ValidationError(f"frame_count must be >= 1: {frame_count}")
    h, w = dims
    rng = np.random.default_rng(seed)
    events = _plan_events(rng, frame_count, task)

    radius = max(2, int(task.blob_radius_frac * min(h, w)))
    labels = np.zeros(frame_count, dtype=np.uint8)
    blobs = []  # per event: (start, end, mask, intensity)
    for start, length in events:
        cy = int(rng.integers(radius, h - radius))
        cx = int(rng.integers(radius, w - radius))
        intensity = int(rng.integers(task.blob_min_intensity, task.blob_max_intensity + 1))
        labels[start : start + length] = 1
        blobs.append((start, start + length - 1, _disk_mask(h, w, cy, cx, radius), intensity))

    with FrameStreamWriter(stream_path, w, h) as out:
        active = 0
        for i in range(frame_count):
            frame = rng.integers(0, task.background_level, size=(h, w, 3)).astype(np.int16)
            if labels[i]:
                while blobs[active][1] < i:
                    active += 1
                _, _, mask, intensity = blobs[active]
                frame[mask] += intensity
            out.append(np.clip(frame, 0, 255).astype(np.uint8))

    with open(labels_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "label"])
        for i, label in enumerate(labels):
            writer.writerow([i, int(label)])

    positives = int(labels.sum())
    return {
        "frame_count": frame_count,
        "positive_frames": positives,
        "realized_prevalence": positives / frame_count,
        "events": [(s, s + n - 1) for s, n in events],
    }
