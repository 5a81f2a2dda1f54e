"""Counter-based Brownian increments.

Component ``j`` of the path with seed ``s`` is drawn from a Philox stream keyed
by ``(s, j)``, so components are addressable independently: truncation level
``J`` can be raised without changing the first components, and any prefix of
steps is reproduced exactly by a longer path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BrownianPath:
    increments: np.ndarray  # (steps, J)
    dt: float
    seed: int

    @property
    def steps(self) -> int:
        return self.increments.shape[0]

    @property
    def J(self) -> int:
        return self.increments.shape[1]


def component_stream(seed: int, j: int) -> np.random.Generator:
    key = np.array([seed, j], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def generate_path(J: int, dt: float, steps: int, seed: int) -> BrownianPath:
    if J < 1 or steps < 1:
        raise ValueError("need J >= 1 and steps >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    sd = np.sqrt(dt)
    cols = [component_stream(seed, j).standard_normal(steps) * sd for j in range(J)]
    return BrownianPath(np.stack(cols, axis=1), float(dt), int(seed))


def coarsen(path: BrownianPath, factor: int) -> BrownianPath:
    """Sum ``factor`` consecutive increments: the same Brownian motion seen at a coarser step."""
    if factor < 1 or path.steps % factor:
        raise ValueError(f"cannot coarsen {path.steps} steps by {factor}")
    inc = path.increments.reshape(path.steps // factor, factor, path.J).sum(axis=1)
    return BrownianPath(inc, path.dt * factor, path.seed)


def stack_increments(paths: list[BrownianPath]) -> np.ndarray:
    """(P, steps, J) array from a list of equally shaped paths."""
    return np.stack([p.increments for p in paths])
