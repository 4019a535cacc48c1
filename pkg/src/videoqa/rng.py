"""Seeded random streams, one per source of randomness.

A run owns a single master seed; every consumer (init, shuffle, mlm, ...)
draws from its own named PCG64 stream so toggling one source does not shift
the others. Stream states serialize to JSON for checkpointing.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _stream_seed(master_seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_stream(master_seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(_stream_seed(master_seed, name)))


class RngHub:
    """Lazily-created named substreams of one master seed."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = make_stream(self.master_seed, name)
        return self._streams[name]

    def state(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "streams": {name: gen.bit_generator.state for name, gen in self._streams.items()},
        }

    def set_state(self, state: dict) -> None:
        self.master_seed = int(state["master_seed"])
        self._streams = {}
        for name, st in state["streams"].items():
            gen = make_stream(self.master_seed, name)
            gen.bit_generator.state = st
            self._streams[name] = gen
