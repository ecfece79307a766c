"""Markovian projection: binned conditional drift and the mimicking diffusion.

Given paths X and their realized per-step drifts, the projected drift at
(t_j, bin) is the average drift over particles sitting in that bin at t_j,
the histogram estimate of E[drift | X_t = x]. Integrating the projected
drift with fresh noise gives a Markov process whose time marginals track
those of X; joint laws are not preserved, which the path autocovariance gap
makes visible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import EmpiricalFlow, wasserstein1_1d
from .rng import BrownianBundle
from .sim import ParticleEnsemble, integrate_paths


@dataclass
class DriftTable:
    """Piecewise-constant drift estimate on (time step) x (state bin)."""

    grid: object               # TimeGrid
    edges: np.ndarray          # (n_bins + 1,)
    values: np.ndarray         # (M, n_bins, d)
    counts: np.ndarray         # (M, n_bins)
    fallback: np.ndarray       # (M, n_bins) True where the slice mean was used
    slice_means: np.ndarray    # (M, d)
    source_flow: EmpiricalFlow

    @property
    def n_bins(self) -> int:
        return self.edges.size - 1

    def bin_of(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.edges, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.n_bins - 1)

    def drift_at(self, j: int, x: np.ndarray) -> np.ndarray:
        """Projected drift for states x (n, d) at step j."""
        return self.values[j, self.bin_of(x[:, 0]), :]


def project_drift(ensemble: ParticleEnsemble, bins=40, *, min_count: int = 30, drifts: np.ndarray | None = None) -> DriftTable:
    """Bin-average realized drifts into a Markovian drift table.

    bins is an integer count (equal-width over the pooled state range) or an
    explicit edge array. Bins holding fewer than min_count particles fall
    back to the time-slice mean drift and are flagged; that keeps the table
    bounded by the data and conserves the slice totals wherever no fallback
    fires.
    """
    if drifts is None:
        drifts = ensemble.drifts
    if drifts is None:
        raise ValueError("ensemble carries no drift samples; pass drifts explicitly")
    if ensemble.dim != 1:
        raise ValueError("drift projection is implemented for one-dimensional states")
    n, M = ensemble.n, ensemble.grid.n_steps
    if drifts.shape != (n, M, 1):
        raise ValueError(f"drift samples must be ({n}, {M}, 1), got {drifts.shape}")

    x = ensemble.states[:, :M, 0]  # states at step starts
    if np.isscalar(bins):
        lo, hi = float(x.min()), float(x.max())
        if hi <= lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing with at least two entries")
        if edges[0] > x.min() or edges[-1] < x.max():
            raise ValueError(
                f"bin edges [{edges[0]}, {edges[-1]}] do not cover the state range "
                f"[{x.min():.6g}, {x.max():.6g}]"
            )
    n_bins = edges.size - 1

    values = np.zeros((M, n_bins, 1))
    counts = np.zeros((M, n_bins), dtype=np.intp)
    fallback = np.zeros((M, n_bins), dtype=bool)
    slice_means = drifts.mean(axis=0)  # (M, 1)

    for j in range(M):
        idx = np.clip(np.searchsorted(edges, x[:, j], side="right") - 1, 0, n_bins - 1)
        cnt = np.bincount(idx, minlength=n_bins)
        tot = np.bincount(idx, weights=drifts[:, j, 0], minlength=n_bins)
        counts[j] = cnt
        sparse = cnt < min_count
        fallback[j] = sparse
        with np.errstate(invalid="ignore"):
            avg = np.where(cnt > 0, tot / np.maximum(cnt, 1), 0.0)
        values[j, :, 0] = np.where(sparse, slice_means[j, 0], avg)

    return DriftTable(
        grid=ensemble.grid, edges=edges, values=values, counts=counts,
        fallback=fallback, slice_means=slice_means,
        source_flow=EmpiricalFlow.from_ensemble(ensemble),
    )


def mimic_and_compare(table: DriftTable, init: np.ndarray, bundle: BrownianBundle) -> np.ndarray:
    """Integrate the mimicking diffusion and compare marginals per grid time.

    Returns the (M+1,) array of exact 1-d Wasserstein distances between the
    mimic cloud and the source cloud at each grid node.
    """
    ens = integrate_paths(lambda j, y: table.drift_at(j, y), bundle, init)
    M = table.grid.n_steps
    out = np.empty(M + 1)
    for j in range(M + 1):
        out[j] = wasserstein1_1d(ens.states[:, j, 0], table.source_flow.cloud(j)[:, 0])
    return out


def path_autocovariance(states: np.ndarray, j1: int, j2: int) -> float:
    """Empirical Cov(X_{t_j1}, X_{t_j2}) across particles for 1-d paths."""
    a = states[:, j1, 0]
    b = states[:, j2, 0]
    return float(np.mean((a - a.mean()) * (b - b.mean())))
