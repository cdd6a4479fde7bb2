"""Raw frame-stream container: codec-free 8-bit RGB frames behind a tiny header.

Layout (little-endian):

    magic "FFVS" | version u32 | width u32 | height u32 | frame_count u32
    then frame_count frames of height*width*3 bytes, row-major RGB.

Fixed-size frames make the offsets table implicit: frame i starts at
``header_size + i * frame_bytes``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

__all__ = ["StreamHeader", "FrameStreamReader", "FrameStreamWriter", "write_stream"]

MAGIC = b"FFVS"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
HEADER_SIZE = _HEADER.size


@dataclass(frozen=True)
class StreamHeader:
    width: int
    height: int
    frame_count: int

    @property
    def frame_bytes(self) -> int:
        return self.height * self.width * 3


def read_header(path) -> StreamHeader:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    if len(raw) != HEADER_SIZE:
        raise ValidationError(f"{path}: too short for a frame stream header")
    magic, version, width, height, count = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValidationError(f"{path}: not a frame stream (bad magic)")
    if version != VERSION:
        raise ValidationError(f"{path}: unsupported stream version {version}")
    header = StreamHeader(width, height, count)
    actual = Path(path).stat().st_size
    expected = HEADER_SIZE + header.frame_bytes * count
    if actual != expected:
        raise ValidationError(
            f"{path}: file size {actual} does not match header arithmetic {expected}"
        )
    return header


class FrameStreamReader:
    """Random access over the frames of one stream file."""

    def __init__(self, path):
        self.path = Path(path)
        self.header = read_header(path)
        self._fh = open(path, "rb")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def read_frame(self, index: int) -> np.ndarray:
        h = self.header
        if not (0 <= index < h.frame_count):
            raise ValidationError(f"frame {index} out of range [0, {h.frame_count})")
        self._fh.seek(HEADER_SIZE + index * h.frame_bytes)
        raw = self._fh.read(h.frame_bytes)
        return np.frombuffer(raw, dtype=np.uint8).reshape(h.height, h.width, 3)

    def read_range(self, start: int, end: int) -> list[np.ndarray]:
        """Frames start..end inclusive."""
        return [self.read_frame(i) for i in range(start, end + 1)]

    def iter_batches(self, batch_size: int):
        """Yield (start_index, [frames]) covering the stream in order."""
        for start in range(0, self.header.frame_count, batch_size):
            stop = min(start + batch_size, self.header.frame_count)
            yield start, [self.read_frame(i) for i in range(start, stop)]


class FrameStreamWriter:
    """Sequential writer; the frame count is patched into the header on close."""

    def __init__(self, path, width: int, height: int):
        self.path = Path(path)
        self.width = width
        self.height = height
        self.count = 0
        self._fh = open(path, "wb")
        self._fh.write(_HEADER.pack(MAGIC, VERSION, width, height, 0))

    def append(self, frame: np.ndarray) -> None:
        frame = np.asarray(frame)
        if frame.shape != (self.height, self.width, 3) or frame.dtype != np.uint8:
            raise ValidationError(
                f"frame must be uint8 ({self.height}, {self.width}, 3), got "
                f"{frame.dtype} {frame.shape}"
            )
        self._fh.write(np.ascontiguousarray(frame).tobytes())
        self.count += 1

    def close(self) -> None:
        self._fh.seek(0)
        self._fh.write(_HEADER.pack(MAGIC, VERSION, self.width, self.height, self.count))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_stream(path, frames) -> None:
    frames = list(frames)
    if not frames:
        raise ValidationError("write_stream: need at least one frame")
    h, w, _ = np.asarray(frames[0]).shape
    with FrameStreamWriter(path, w, h) as out:
        for frame in frames:
            out.append(frame)
