"""Brownian path ensembles on uniform grids with counter-based seeding.

Each path owns a fixed block of ``W`` raw 64-bit words of a Philox stream
keyed on the seed (``W`` is ``N*d`` rounded up to a multiple of 4, the
Philox block size).  Word ``k*d + j`` of block ``m`` drives coordinate ``j``
of increment ``k`` on path ``m``.  Any path can therefore be rebuilt on its
own, and the ensemble does not depend on how paths are split across workers.
"""

from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "TimeGrid",
    "PathEnsemble",
    "ResourceBudgetError",
    "memory_budget",
    "simulate",
    "single_path",
    "antithetic",
    "with_antithetic",
    "dump",
    "load",
]

MAGIC = b"QBSDEPTH"
VERSION = 1
_HEADER = struct.Struct("<8sIIQQQdQ")  # magic, version, flags, seed, M, N, T, d
DEFAULT_BUDGET = 10 ** 8
BUDGET_ENV = "DIAGBSDE_MEMORY_BUDGET"


class ResourceBudgetError(MemoryError):
    pass


def memory_budget() -> int:
    """Largest allowed ``M*N*d``; override with ``DIAGBSDE_MEMORY_BUDGET``."""
    raw = os.environ.get(BUDGET_ENV)
    if raw is None:
        return DEFAULT_BUDGET
    try:
        return int(float(raw))
    except ValueError:
        raise ValueError(f"{BUDGET_ENV} must be a number, got {raw!r}") from None


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.N + 1) * (self.T / self.N)
        t[-1] = self.T
        return t

    def index_of(self, t: float) -> int:
        """Index of the grid node equal to ``t`` (to 1e-9 grid units)."""
        k = t / self.dt
        r = round(k)
        if abs(k - r) > 1e-9:
            raise ValueError(f"time {t} is not a grid node")
        return int(r)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """``values[m, k]`` is ``B`` at node ``k`` on path ``m``; shape ``(M, N+1, d)``."""

    grid: TimeGrid
    values: np.ndarray
    seed: int
    mirrored: bool = False

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def d(self) -> int:
        return self.values.shape[2]

    @property
    def T(self) -> float:
        return self.grid.T

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=1)

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1, :]

    def __eq__(self, other):
        if not isinstance(other, PathEnsemble):
            return NotImplemented
        return (self.grid == other.grid and self.seed == other.seed
                and self.values.shape == other.values.shape
                and bool(np.array_equal(self.values, other.values)))

    __hash__ = None


def _block(N: int, d: int) -> int:
    return -(-N * d // 4) * 4


def _normals(seed: int, first: int, count: int, N: int, d: int) -> np.ndarray:
    W = _block(N, d)
    gen = np.random.Philox(key=seed)
    if first:
        gen.advance(first * W // 4)
    raw = gen.random_raw(count * W).reshape(count, W)[:, : N * d]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u).reshape(count, N, d)


def _assemble(normals: np.ndarray, dt: float) -> np.ndarray:
    M, N, d = normals.shape
    out = np.zeros((M, N + 1, d))
    np.cumsum(normals * math.sqrt(dt), axis=1, out=out[:, 1:, :])
    return out


def single_path(seed: int, m: int, N: int, T: float, d: int) -> np.ndarray:
    """Rebuild path ``m`` alone; equals ``simulate(seed, M, N, T, d).values[m]`` for any ``M > m``."""
    return _assemble(_normals(seed, m, 1, N, d), T / N)[0]


def simulate(seed: int, M: int, N: int, T: float, d: int = 1, threads: int = 1,
             antithetic: bool = False) -> PathEnsemble:
    """Simulate ``M`` Brownian paths.

    Parameters
    ----------
    seed : int
        Key of the counter-based stream (64-bit).
    M, N, T, d
        Path count, step count, horizon and Brownian dimension.
    threads : int
        Worker cap; the output does not depend on it.
    antithetic : bool
        If set, ``M`` must be even: paths ``M/2..M-1`` are the negatives of
        paths ``0..M/2-1``.
    """
    if M < 1 or N < 1 or d < 1:
        raise ValueError("M, N and d must be >= 1")
    if not T > 0:
        raise ValueError("T must be positive")
    if M * N * d > memory_budget():
        raise ResourceBudgetError(
            f"M*N*d = {M * N * d} exceeds the memory budget {memory_budget()} "
            f"(set {BUDGET_ENV} to raise it)")
    seed = int(seed) & (2 ** 64 - 1)
    grid = TimeGrid(float(T), int(N))
    base = M
    if antithetic:
        if M % 2:
            raise ValueError("antithetic ensembles need an even M")
        base = M // 2
    chunk = max(1, -(-base // max(1, threads)))
    starts = list(range(0, base, chunk))

    def work(start):
        return _assemble(_normals(seed, start, min(chunk, base - start), N, d), grid.dt)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    values = np.concatenate(parts, axis=0)
    if antithetic:
        values = np.concatenate([values, -values], axis=0)
    values.setflags(write=False)
    return PathEnsemble(grid, values, seed)


def antithetic(ensemble: PathEnsemble) -> PathEnsemble:
    """The mirrored ensemble ``-B``; applying it twice gives back the input."""
    values = -ensemble.values
    values.setflags(write=False)
    return PathEnsemble(ensemble.grid, values, ensemble.seed, not ensemble.mirrored)


def with_antithetic(ensemble: PathEnsemble) -> PathEnsemble:
    """Union of an ensemble and its mirror (``2M`` paths)."""
    values = np.concatenate([ensemble.values, -ensemble.values], axis=0)
    values.setflags(write=False)
    return PathEnsemble(ensemble.grid, values, ensemble.seed, ensemble.mirrored)


def dump(ensemble: PathEnsemble, path) -> None:
    """Write header plus row-major little-endian float64 payload."""
    header = _HEADER.pack(MAGIC, VERSION, int(ensemble.mirrored), ensemble.seed,
                          ensemble.M, ensemble.N, ensemble.T, ensemble.d)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(ensemble.values, dtype="<f8").tobytes())


def load(path) -> PathEnsemble:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError("truncated ensemble header")
        magic, version, flags, seed, M, N, T, d = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError("not a path ensemble file")
        if version != VERSION:
            raise ValueError(f"unsupported ensemble version {version}")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != M * (N + 1) * d:
        raise ValueError("payload size does not match header")
    values = payload.reshape(M, N + 1, d).astype(np.float64)
    values.setflags(write=False)
    return PathEnsemble(TimeGrid(T, N), values, seed, bool(flags & 1))
