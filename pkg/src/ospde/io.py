"""Trajectory dumps: a long-format CSV and a small self-describing binary format.

Binary layout (little endian): magic ``OSPD``, then header
``<I version, I dim, I n, I rows, I J, q seed, d dt, d h>`` followed by three
float64 blocks ``u`` (rows+1, N), ``S`` (rows+1, N) and ``dnu`` (rows, N),
where ``N = n**dim`` and ``rows`` is the number of time steps.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"OSPD"
VERSION = 1
_HEADER = struct.Struct("<IIIIIqdd")


class FormatError(ValueError):
    pass


@dataclass
class Trajectory:
    u: np.ndarray
    S: np.ndarray
    dnu: np.ndarray
    dim: int
    n: int
    J: int
    seed: int
    dt: float
    h: float

    @property
    def steps(self) -> int:
        return self.dnu.shape[0]


def trajectory_from_solution(sol, i: int = 0) -> Trajectory:
    d = sol.problem.domain
    return Trajectory(np.ascontiguousarray(sol.u[:, i]), np.ascontiguousarray(sol.S),
                      np.ascontiguousarray(sol.nu[:, i]), d.dim, d.n, sol.config.J, int(sol.seeds[i]),
                      sol.config.dt, float(d.h[0]))


def write_binary(tr: Trajectory, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(VERSION, tr.dim, tr.n, tr.steps, tr.J, tr.seed, tr.dt, tr.h))
        for block in (tr.u, tr.S, tr.dnu):
            fh.write(np.asarray(block, "<f8").tobytes())


def read_binary(path) -> Trajectory:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise FormatError("not an ospde trajectory (bad magic)")
    version, dim, n, rows, J, seed, dt, h = _HEADER.unpack_from(raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    N = n**dim
    off = 4 + _HEADER.size
    sizes = ((rows + 1) * N, (rows + 1) * N, rows * N)
    if len(raw) != off + 8 * sum(sizes):
        raise FormatError("truncated or oversized trajectory file")
    blocks = []
    for s in sizes:
        blocks.append(np.frombuffer(raw, "<f8", s, off).astype(float))
        off += 8 * s
    return Trajectory(blocks[0].reshape(rows + 1, N), blocks[1].reshape(rows + 1, N),
                      blocks[2].reshape(rows, N), dim, n, J, seed, dt, h)


def write_csv(tr: Trajectory, path) -> None:
    """Rows ``step, node, u, S, dnu``; ``dnu`` of the last step row is the increment into it."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "node", "u", "S", "dnu"])
        N = tr.u.shape[1]
        for k in range(tr.steps + 1):
            dnu = tr.dnu[k - 1] if k > 0 else np.zeros(N)
            for j in range(N):
                w.writerow([k, j, repr(float(tr.u[k, j])), repr(float(tr.S[k, j])), repr(float(dnu[j]))])
