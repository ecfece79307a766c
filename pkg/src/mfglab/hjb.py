"""Backward dynamic programming for the frozen-flow control problem.

The value function solves, backwards from V(T, x) = g(x, m_T),

    V_j = V_{j+1} + dt * ( 0.5 * lap V_{j+1} + max_a [ b . grad V_{j+1} + f ] )

on a uniform box lattice with Neumann (copied-edge) boundaries. The gradient
is upwinded against the drift sign, which makes the explicit scheme monotone
provided the step satisfies dt <= h^2 / (d + h * sup|b|). Coefficients are
evaluated at the step-start time and measure, matching the simulators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controls import ControlField
from .games import GameSpec
from .grids import ActionGrid, SpatialGrid, TimeGrid
from .rng import BrownianBundle
from .sim import path_payoffs, simulate_frozen_flow


class CFLError(RuntimeError):
    """Raised before any time stepping when the explicit scheme would be unstable."""


def cfl_limit(sgrid: SpatialGrid, drift_bound: float) -> float:
    """Largest stable dt for the explicit upwind scheme on this grid."""
    h = float(sgrid.spacing.min())
    return h * h / (sgrid.dim + h * drift_bound)


def check_cfl(tgrid: TimeGrid, sgrid: SpatialGrid, drift_bound: float) -> None:
    limit = cfl_limit(sgrid, drift_bound)
    if tgrid.dt > limit * (1 + 1e-12):
        raise CFLError(
            f"explicit scheme unstable: dt={tgrid.dt:.6g} exceeds the stability limit "
            f"{limit:.6g} for spacing {float(sgrid.spacing.min()):.6g} and drift bound "
            f"{drift_bound:.6g}; need dt <= {limit:.6g}"
        )


def stable_spatial_grid(game: GameSpec, tgrid: TimeGrid, max_nodes: int = 2001) -> SpatialGrid:
    """Finest shared-count box lattice that keeps the explicit scheme stable.

    The box is the game's declared state box, which already covers the
    initial support plus worst-case drift plus six standard deviations.
    """
    dt, d, b = tgrid.dt, game.dim, game.drift_bound
    # smallest stable spacing: positive root of h^2 - dt*b*h - dt*d = 0
    h_min = 0.5 * (dt * b + np.sqrt((dt * b) ** 2 + 4.0 * dt * d))
    span = float((game.state_hi - game.state_lo).min())
    n_nodes = int(np.floor(span / h_min)) + 1
    n_nodes = max(3, min(n_nodes, max_nodes))
    if n_nodes % 2 == 0:
        # state boxes are centered on the initial support, so an odd count
        # keeps the center (the natural evaluation point) on the lattice
        n_nodes -= 1
    grid = SpatialGrid(game.state_lo, game.state_hi, n_nodes)
    check_cfl(tgrid, grid, b)
    return grid


def default_action_grid(game: GameSpec, n_per_axis: int = 5) -> ActionGrid:
    if np.allclose(game.action_lo, game.action_hi):
        return ActionGrid(game.action_lo, game.action_hi, 1)
    return ActionGrid(game.action_lo, game.action_hi, n_per_axis)


@dataclass
class ValueField:
    tgrid: TimeGrid
    sgrid: SpatialGrid
    values: np.ndarray  # (M+1, *space_shape)

    def at(self, j: int, x: np.ndarray) -> np.ndarray:
        idx = self.sgrid.nearest_index(np.asarray(x, dtype=float))
        return self.values[(j,) + idx]


@dataclass
class HJBSolution:
    value: ValueField
    control: ControlField


def _shifted(V: np.ndarray, axis: int, step: int) -> np.ndarray:
    """V shifted along an axis with the edge value replicated (Neumann ghost)."""
    lead = [slice(None)] * V.ndim
    if step == +1:
        lead[axis] = slice(1, None)
        body = V[tuple(lead)]
        lead[axis] = slice(-1, None)
        return np.concatenate([body, V[tuple(lead)]], axis=axis)
    lead[axis] = slice(None, -1)
    body = V[tuple(lead)]
    lead[axis] = slice(None, 1)
    return np.concatenate([V[tuple(lead)], body], axis=axis)


def solve_hjb(
    game: GameSpec,
    flow,
    sgrid: SpatialGrid,
    agrid: ActionGrid,
    *,
    tie_tol: float = 0.0,
    tie_break: str = "lowest",
) -> HJBSolution:
    """Dynamic programming against a frozen flow.

    The per-node maximization scans the ActionGrid atoms; exact ties go to
    the lowest lattice index. With tie_break="mean_drift", atoms whose
    Hamiltonian is within tie_tol of the maximum count as tied and the
    representative is the tied atom whose drift is closest to the tied set's
    average drift (then largest running reward, then lowest index). That
    keeps statistically indistinguishable actions from collapsing onto an
    arbitrary extreme.
    """
    if tie_break not in ("lowest", "mean_drift"):
        raise ValueError(f"unknown tie_break {tie_break!r}")
    if sgrid.dim != game.dim:
        raise ValueError("spatial grid dimension must match the game")
    tgrid = flow.grid
    check_cfl(tgrid, sgrid, game.drift_bound)

    M = tgrid.n_steps
    dt = tgrid.dt
    times = tgrid.times
    stats_path = flow.stats_path()
    nodes = sgrid.nodes()  # (P, d)
    space = sgrid.shape
    spacing = sgrid.spacing
    atoms = agrid.atoms
    nA = atoms.shape[0]

    stats_T = stats_path[M]
    V = np.asarray(game.terminal(nodes, stats_T), dtype=float).reshape(space)
    if not np.isfinite(V).all():
        raise FloatingPointError("terminal reward evaluated to a non-finite value on the grid")

    values = np.empty((M + 1,) + space)
    values[M] = V
    control_values = np.empty((M,) + space + (atoms.shape[1],))

    for j in range(M - 1, -1, -1):
        t = times[j]
        stats = stats_path[j]

        # action-independent diffusion part: centered Laplacian, copied edges
        lap = np.zeros(space)
        for ax in range(sgrid.dim):
            h2 = spacing[ax] ** 2
            lap += (_shifted(V, ax, +1) - 2.0 * V + _shifted(V, ax, -1)) / h2

        dplus = [(_shifted(V, ax, +1) - V) / spacing[ax] for ax in range(sgrid.dim)]
        dminus = [(V - _shifted(V, ax, -1)) / spacing[ax] for ax in range(sgrid.dim)]

        H = np.empty((nA,) + space)
        B = np.empty((nA,) + space + (sgrid.dim,))
        F = np.empty((nA,) + space)
        for i in range(nA):
            a = np.broadcast_to(atoms[i], nodes.shape[:-1] + (atoms.shape[1],))
            b = np.asarray(game.drift(t, nodes, stats, a), dtype=float).reshape(space + (sgrid.dim,))
            f = np.asarray(game.running(t, nodes, stats, a), dtype=float).reshape(space)
            conv = np.zeros(space)
            for ax in range(sgrid.dim):
                bax = b[..., ax]
                conv += np.maximum(bax, 0.0) * dplus[ax] - np.maximum(-bax, 0.0) * dminus[ax]
            H[i] = conv + f
            B[i] = b
            F[i] = f

        if not np.isfinite(H).all():
            raise FloatingPointError(f"coefficients produced a non-finite Hamiltonian at t={t:.6g}")

        Hmax = H.max(axis=0)
        if tie_break == "lowest" or tie_tol == 0.0:
            # within-tolerance ties still resolve to the first maximizer,
            # which is the lowest lattice index by atom ordering
            if tie_tol > 0.0:
                sel = np.argmax(H >= Hmax - tie_tol, axis=0)
            else:
                sel = H.argmax(axis=0)
        else:
            tied = H >= Hmax - tie_tol
            weights = tied / tied.sum(axis=0)
            target = np.einsum("i...,i...k->...k", weights, B)
            mismatch = np.abs(B - target).max(axis=-1)
            mismatch = np.where(tied, mismatch, np.inf)
            best = mismatch.min(axis=0)
            candidate = tied & (mismatch <= best + 1e-12)
            sel = np.where(candidate, F, -np.inf).argmax(axis=0)

        control_values[j] = atoms[sel]
        V = V + dt * (0.5 * lap + Hmax)
        if not np.isfinite(V).all():
            raise FloatingPointError(f"value update produced a non-finite value at t={t:.6g}")
        values[j] = V

    field = ValueField(tgrid=tgrid, sgrid=sgrid, values=values)
    control = ControlField.pure(tgrid, sgrid, control_values, name=f"dp[{game.name}]")
    return HJBSolution(value=field, control=control)


def evaluate_payoff(game: GameSpec, flow, control: ControlField, bundle: BrownianBundle, init: np.ndarray):
    """Monte Carlo payoff of a control against a frozen flow.

    Returns (estimate, standard error). Relaxed controls are integrated by
    averaging drift and running reward over their atom probabilities.
    """
    ens = simulate_frozen_flow(game, control, flow, bundle, init)
    payoffs = path_payoffs(game, ens, control, stats_path=flow.stats_path())
    n = payoffs.shape[0]
    se = float(payoffs.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return float(payoffs.mean()), se
