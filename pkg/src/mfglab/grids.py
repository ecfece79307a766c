"""Uniform time, space, and action lattices shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_M = horizon."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if self.n_steps < 1:
            raise ValueError(f"need at least one step, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        # M+1 nodes including both endpoints
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_steps * factor)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform box lattice, at least 3 nodes per axis so one-sided differences exist.

    lo, hi are length-d arrays of per-coordinate bounds, n_nodes the per-axis
    node count (shared across axes).
    """

    lo: np.ndarray
    hi: np.ndarray
    n_nodes: int

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        if not np.all(hi > lo):
            raise ValueError("need hi > lo on every axis")
        if self.n_nodes < 3:
            raise ValueError(f"need at least 3 nodes per axis, got {self.n_nodes}")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (self.n_nodes - 1)

    @property
    def axes(self) -> list:
        return [np.linspace(self.lo[i], self.hi[i], self.n_nodes) for i in range(self.dim)]

    @property
    def shape(self) -> tuple:
        return (self.n_nodes,) * self.dim

    def nodes(self) -> np.ndarray:
        """All lattice nodes as an (n_nodes**d, d) array in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def nearest_index(self, x: np.ndarray) -> tuple:
        """Round points (..., d) to the nearest node, clipping to the box.

        Returns a tuple of d integer index arrays suitable for fancy indexing.
        """
        x = np.asarray(x, dtype=float)
        idx = np.rint((x - self.lo) / self.spacing).astype(np.intp)
        np.clip(idx, 0, self.n_nodes - 1, out=idx)
        return tuple(idx[..., i] for i in range(self.dim))

    def refine(self, factor: int) -> "SpatialGrid":
        return SpatialGrid(self.lo, self.hi, (self.n_nodes - 1) * factor + 1)


@dataclass(frozen=True)
class ActionGrid:
    """Finite lattice inside the action box, always containing the corners.

    atoms has shape (n_atoms, action_dim); lattice order is C order over the
    per-axis linspaces, so atom 0 is the lowest corner.
    """

    lo: np.ndarray
    hi: np.ndarray
    n_per_axis: int
    atoms: np.ndarray = field(init=False)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        if not np.all(hi >= lo):
            raise ValueError("need hi >= lo on every axis")
        if self.n_per_axis < 1:
            raise ValueError("need at least one atom per axis")
        if self.n_per_axis == 1:
            # degenerate axis: a single atom sits at the midpoint; corners
            # coincide with it only when the box is a point, which is the
            # intended use (uncontrolled games)
            axes = [np.array([0.5 * (lo[i] + hi[i])]) for i in range(lo.shape[0])]
        else:
            axes = [np.linspace(lo[i], hi[i], self.n_per_axis) for i in range(lo.shape[0])]
        mesh = np.meshgrid(*axes, indexing="ij")
        atoms = np.stack([m.ravel() for m in mesh], axis=-1)
        object.__setattr__(self, "atoms", atoms)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]
