"""Deterministic weight streams.

Every random weight in the package is drawn from a splitmix64 stream, so a
64-bit seed fully determines a model independent of numpy's global RNG
state, platform, or draw batching.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(state: np.ndarray) -> np.ndarray:
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class WeightStream:
    """splitmix64-backed stream of uniform [-0.5, 0.5) weights."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return int(_mix(np.uint64(self._state)))

    def uniform(self, count: int) -> np.ndarray:
        """Next `count` doubles in [-0.5, 0.5), one per underlying u64."""
        if count == 0:
            return np.empty(0, dtype=np.float64)
        steps = np.arange(1, count + 1, dtype=np.uint64)
        # uint64 arithmetic wraps mod 2^64, matching the scalar recurrence
        states = np.uint64(self._state) + steps * np.uint64(_GAMMA)
        self._state = int(states[-1])
        bits = _mix(states)
        return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53 - 0.5

    def block(self, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        """float32 weight block scaled by 1/sqrt(fan_in)."""
        n = 1
        for d in shape:
            n *= d
        w = self.uniform(n) / np.sqrt(float(fan_in))
        return w.astype(np.float32).reshape(shape)
