"""Deterministic, splittable RNG streams.

A stream is identified by (seed, label, index). The triple is hashed with
blake2b into a 128-bit Philox key, so distinct labels give statistically
independent streams and draw j of a stream is a pure function of (key, j).
Batch consumers pregenerate one uniform block per batch and slice it by
trajectory, which makes every result independent of worker count, chunking,
and evaluation order.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngSpec:
    """Name of one deterministic uniform stream."""

    seed: int
    label: str = "main"
    index: int = 0

    def __post_init__(self):
        if not isinstance(self.seed, int):
            raise TypeError("seed must be an integer")

    @property
    def stream(self) -> tuple[str, int]:
        return (self.label, self.index)

    def derived(self, label: str, index: int = 0) -> "RngSpec":
        """Child stream: composes labels so derivations never collide."""
        return RngSpec(self.seed, f"{self.label}/{label}", index)

    def with_index(self, index: int) -> "RngSpec":
        return RngSpec(self.seed, self.label, index)


def philox_key(spec: RngSpec) -> np.ndarray:
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<q", spec.seed))
    h.update(spec.label.encode("utf-8"))
    h.update(struct.pack("<q", spec.index))
    return np.frombuffer(h.digest(), dtype=np.uint64).copy()


def generator(spec: RngSpec) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=philox_key(spec)))


def uniform_block(spec: RngSpec, shape) -> np.ndarray:
    """The first prod(shape) uniforms of the stream, in C order."""
    return generator(spec).random(shape)
