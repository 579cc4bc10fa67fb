"""Deterministic random-number streams.

Every stochastic routine in this package draws from an :class:`RngStream`
rather than from global state. A stream is addressed by ``(seed, stream_id)``:
the same address always reproduces the same sample sequence, and distinct
stream ids give statistically independent sequences. This is what makes
replicated trials reproducible regardless of execution order or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """Address of a deterministic, splittable random stream.

    Parameters
    ----------
    seed : int
        Base seed shared by an entire experiment (64-bit unsigned).
    stream_id : int or tuple of int
        Path of this stream below the base seed. Plain integers address
        top-level streams (one per trial); child streams extend the path.
    """

    seed: int
    stream_id: int | tuple[int, ...] = 0

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def _path(self) -> tuple[int, ...]:
        sid = self.stream_id
        return sid if isinstance(sid, tuple) else (sid,)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=self._path))

    def child(self, index: int) -> RngStream:
        """Derived stream, independent of this one and of other children.

        Children are addressed by extending the stream path, so a fixed
        assignment of indices to roles (one per sampler, per chain, per
        trial) pins down every draw in the pipeline.
        """
        return RngStream(self.seed, self._path + (index,))
