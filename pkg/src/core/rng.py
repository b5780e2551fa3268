from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream addressed by a root seed and a stream path.

    Streams are derived hierarchically (root -> experiment -> (n, c) -> replica)
    so that identical paths replay identical draws regardless of the order or
    thread on which they are consumed.
    """

    seed: int
    stream: Tuple[int, ...] = ()

    def derive(self, *keys: int) -> "RngStream":
        return RngStream(seed=self.seed, stream=self.stream + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(seq))

    def spawn(self, count: int) -> list["RngStream"]:
        return [self.derive(i) for i in range(count)]

    @property
    def stream_id(self) -> str:
        return "/".join(str(k) for k in self.stream) or "root"


def as_generator(rng: RngStream | np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


__all__ = ["RngStream", "as_generator"]
