"""Counter-based Gaussian increment generation.

Every particle owns a Philox stream keyed by (seed, particle index), so the
increments assigned to particle k are a fixed function of (seed, k, step):
they do not depend on how many particles are in the bundle, on the order in
which anything is evaluated, or on worker thread counts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .grids import TimeGrid

_MASK63 = (1 << 63) - 1


def derive_seed(root: int, *branch) -> int:
    """Stable 63-bit child seed for a labelled branch of a root seed.

    Branch components may be ints or short strings; the mapping is a pure
    function of the arguments (no process state), so derived experiments are
    reproducible across runs and platforms.
    """
    h = hashlib.blake2b(repr((int(root),) + branch).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little") & _MASK63


@dataclass(frozen=True)
class BrownianBundle:
    """Increments dW for n particles on a uniform grid, shape (n, M, dim).

    increments[k, j] is Normal(0, dt I) and belongs to step t_j -> t_{j+1}.
    """

    seed: int
    grid: TimeGrid
    n: int
    dim: int
    increments: np.ndarray

    def partial_sums(self) -> np.ndarray:
        """Brownian path values W_{t_j} at the grid nodes, shape (n, M+1, dim)."""
        w = np.zeros((self.n, self.grid.n_steps + 1, self.dim))
        np.cumsum(self.increments, axis=1, out=w[:, 1:])
        return w

    def averaged(self) -> np.ndarray:
        """Increments of the normalized average n^{-1/2} sum_k W^k, shape (M, dim)."""
        return self.increments.sum(axis=0) / np.sqrt(self.n)


def _particle_stream(seed: int, k: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64(k)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_brownian(seed: int, n: int, grid: TimeGrid, dim: int = 1) -> BrownianBundle:
    """Draw a BrownianBundle; same (seed, n, M, dim, dt) gives identical bits."""
    if n < 1:
        raise ValueError(f"need at least one particle, got {n}")
    if dim < 1:
        raise ValueError(f"need dim >= 1, got {dim}")
    if not 0 <= seed <= np.iinfo(np.uint64).max:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    M = grid.n_steps
    out = np.empty((n, M, dim))
    for k in range(n):
        out[k] = _particle_stream(seed, k).standard_normal((M, dim))
    out *= np.sqrt(grid.dt)
    return BrownianBundle(seed=seed, grid=grid, n=n, dim=dim, increments=out)


def initial_cloud(seed: int, n: int, sampler) -> np.ndarray:
    """Draw n initial states from a sampler(generator, n) using a dedicated stream."""
    return sampler(_particle_stream(seed, _MASK63), n)
