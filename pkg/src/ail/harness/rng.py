"""Named, counter-based random substreams.

Each substream is a Philox generator keyed by the master seed and a CRC of
the stream name, so draws on one stream never depend on how much another
stream has been consumed.
"""

from __future__ import annotations

import zlib

import numpy as np

LABELS = "labels"
DYNAMICS = "dynamics"
EXPLORATION = "exploration"
AGGREGATION = "aggregation"
CONTEXTS = "contexts"
INSTANCE = "instance"


class RngStream:
    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be nonnegative")
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def key(self, name: str) -> np.ndarray:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(zlib.crc32(name.encode()),))
        return ss.generate_state(2, dtype=np.uint64)

    def get(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = np.random.Generator(np.random.Philox(key=self.key(name)))
        return self._streams[name]

    def __getitem__(self, name: str) -> np.random.Generator:
        return self.get(name)


def as_stream(seed_or_stream) -> RngStream:
    if isinstance(seed_or_stream, RngStream):
        return seed_or_stream
    return RngStream(int(seed_or_stream))


def draw_label(probs, u: float) -> int:
    """Inverse-CDF draw of an action from ``probs`` using uniform ``u``."""
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    cdf = np.cumsum(p / p.sum())
    return int(min(np.searchsorted(cdf, u, side="right"), len(p) - 1))
