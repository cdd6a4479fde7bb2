"""From per-frame verdicts to events: vote smoothing, segmentation, per-frame
membership metadata, and the archive lookup behind demand fetching.

Smoothing windows at the stream edges are clipped to the sequence (no
padding) with the vote threshold unchanged, so isolated positives near the
edges are slightly likelier to survive than interior ones.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvariantViolationError, NotFoundError, ValidationError

__all__ = [
    "VotingPolicy",
    "EventSegment",
    "FrameMetadata",
    "k_vote_smooth",
    "segment_events",
    "annotate",
    "Archive",
    "demand_fetch",
    "write_events_csv",
    "read_events_csv",
    "write_metadata_csv",
]


@dataclass(frozen=True)
class VotingPolicy:
    """Mark a frame positive iff >= votes_required of the window_size frames
    centered on it are positive."""

    window_size: int = 5
    votes_required: int = 2

    def __post_init__(self):
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValidationError(f"voting window must be odd and positive: {self.window_size}")
        if not (1 <= self.votes_required <= self.window_size):
            raise ValidationError(
                f"votes_required must lie in [1, window]: {self.votes_required} vs {self.window_size}"
            )


@dataclass(frozen=True)
class EventSegment:
    """One classifier's contiguous run of positive frames, inclusive."""

    mc_name: str
    event_id: int
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if self.start_frame < 0 or self.end_frame < self.start_frame:
            raise ValidationError(f"bad segment range: {self}")

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass
class FrameMetadata:
    """Which event (if any) each classifier assigned this frame to."""

    frame_index: int
    memberships: dict[str, int] = field(default_factory=dict)


def k_vote_smooth(labels: Sequence[int], policy: VotingPolicy = VotingPolicy()) -> np.ndarray:
    """Centered K-of-N vote over a binary sequence; output length == input."""
    arr = np.asarray(labels, dtype=np.int64)
    if arr.size == 0:
        return np.zeros(0, dtype=np.uint8)
    counts = np.convolve(arr, np.ones(policy.window_size, dtype=np.int64), mode="same")
    return (counts >= policy.votes_required).astype(np.uint8)


def segment_events(smoothed: Sequence[int], mc_name: str) -> list[EventSegment]:
    """Maximal runs of 1s become events with ids 0, 1, 2, ... in stream order."""
    segments = []
    start = None
    for i, v in enumerate(smoothed):
        if v and start is None:
            start = i
        elif not v and start is not None:
            segments.append(EventSegment(mc_name, len(segments), start, i - 1))
            start = None
    if start is not None:
        segments.append(EventSegment(mc_name, len(segments), start, len(smoothed) - 1))
    return segments


def _check_segments(segments: Sequence[EventSegment]) -> None:
    by_mc: dict[str, list[EventSegment]] = {}
    for s in segments:
        by_mc.setdefault(s.mc_name, []).append(s)
    for mc, segs in by_mc.items():
        segs = sorted(segs, key=lambda s: s.start_frame)
        for a, b in zip(segs, segs[1:]):
            if b.start_frame <= a.end_frame:
                raise InvariantViolationError(
                    f"{mc}: segments {a.event_id} and {b.event_id} overlap"
                )


def annotate(segments: Sequence[EventSegment], frame_count: int) -> list[FrameMetadata]:
    """Per-frame membership maps across all classifiers.

    Frames inside no segment get an empty map.  A frame covered by several
    classifiers' events carries one entry per classifier.
    """
    _check_segments(segments)
    meta = [FrameMetadata(i) for i in range(frame_count)]
    for seg in segments:
        if seg.end_frame >= frame_count:
            raise InvariantViolationError(
                f"{seg.mc_name}: segment {seg.event_id} ends past frame {frame_count - 1}"
            )
        for f in range(seg.start_frame, seg.end_frame + 1):
            meta[f].memberships[seg.mc_name] = seg.event_id
    return meta


# ---------------------------------------------------------------------------
# Archive: the original stream stays on disk; events index into it by frame.
# ---------------------------------------------------------------------------

INDEX_FILE = "index.json"
EVENTS_FILE = "events.csv"
STREAM_FILE = "stream.ffvs"


@dataclass
class Archive:
    """Frame-index store over the archived stream (no re-encoding)."""

    stream_path: Path
    frame_count: int
    events: dict[tuple[str, int], tuple[int, int]]

    @classmethod
    def load(cls, directory) -> "Archive":
        directory = Path(directory)
        index_path = directory / INDEX_FILE
        if not index_path.exists():
            raise NotFoundError(f"{directory}: no archive index")
        index = json.loads(index_path.read_text())
        events = {}
        for seg in read_events_csv(directory / EVENTS_FILE):
            events[(seg.mc_name, seg.event_id)] = (seg.start_frame, seg.end_frame)
        return cls(directory / STREAM_FILE, int(index["frame_count"]), events)

    def save_index(self, directory, width: int, height: int) -> None:
        doc = {"frame_count": self.frame_count, "width": width, "height": height}
        (Path(directory) / INDEX_FILE).write_text(json.dumps(doc, sort_keys=True) + "\n")


def demand_fetch(
    archive: Archive, mc_name: str, event_id: int, context_frames: int = 0
) -> tuple[int, int]:
    """Inclusive frame range of an event plus surrounding context, clamped to
    the archived stream."""
    if context_frames < 0:
        raise ValidationError(f"context_frames must be non-negative: {context_frames}")
    key = (mc_name, event_id)
    if key not in archive.events:
        raise NotFoundError(f"no archived event {event_id} for classifier {mc_name!r}")
    start, end = archive.events[key]
    return max(0, start - context_frames), min(archive.frame_count - 1, end + context_frames)


# ---------------------------------------------------------------------------
# CSV outputs
# ---------------------------------------------------------------------------

def write_events_csv(path, segments: Iterable[EventSegment]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mc_name", "event_id", "start_frame", "end_frame"])
        for s in segments:
            writer.writerow([s.mc_name, s.event_id, s.start_frame, s.end_frame])


def read_events_csv(path) -> list[EventSegment]:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"{path}: no events file")
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                EventSegment(
                    row["mc_name"], int(row["event_id"]),
                    int(row["start_frame"]), int(row["end_frame"]),
                )
            )
    return out


def write_metadata_csv(path, metadata: Iterable[FrameMetadata]) -> None:
    """One row per (frame, classifier) membership; frames with empty maps
    contribute no rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "mc_name", "event_id"])
        for m in metadata:
            for mc_name in m.memberships:
                writer.writerow([m.frame_index, mc_name, m.memberships[mc_name]])
