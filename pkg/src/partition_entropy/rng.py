"""Reproducible random streams keyed by ``(seed, stream_id)``."""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class RandomStream:
    """A seeded source of uniforms and normals.

    Two streams with the same ``(seed, stream_id)`` produce identical
    sequences bit for bit; distinct pairs are independent (the pair feeds a
    numpy ``SeedSequence`` as entropy plus spawn key).  A stream is stateful
    and must not be shared across threads; use :meth:`derive` to hand each
    worker its own.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(self.seed & _MASK64, spawn_key=(self.stream_id & _MASK64,))
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"

    def derive(self, offset: int) -> "RandomStream":
        """Fresh stream with ``stream_id + offset``; the parent is not advanced."""
        return RandomStream(self.seed, self.stream_id + offset)

    def random(self, size=None):
        """Uniforms on [0, 1)."""
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)
