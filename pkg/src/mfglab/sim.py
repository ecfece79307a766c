"""Euler integration of the coupled n-player system and of frozen-flow copies.

Conventions shared by every simulator here:
  * uniform grid, unit diffusion, increments supplied by a BrownianBundle;
  * coefficients are evaluated with the measure statistics at the step start;
  * realized per-step drifts are recorded so change-of-measure weights and
    drift projections can be formed after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controls import ControlField
from .games import GameSpec, MeasureStats
from .grids import TimeGrid
from .rng import BrownianBundle


@dataclass
class ParticleEnsemble:
    """Simulated paths: states (n, M+1, d) on a shared TimeGrid."""

    grid: TimeGrid
    states: np.ndarray
    bundle: BrownianBundle | None = None
    drifts: np.ndarray | None = None  # (n, M, d) realized drift per step
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def cloud(self, j: int) -> np.ndarray:
        return self.states[:, j, :]


def _check_finite(values: np.ndarray, what: str, t: float, x: np.ndarray) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        k = int(np.argwhere(bad.reshape(values.shape[0], -1).any(axis=1))[0, 0])
        raise FloatingPointError(
            f"{what} evaluated to a non-finite value at t={t:.6g}, particle {k}, state {x[k].tolist()}"
        )


def control_drift(game: GameSpec, control: ControlField, j: int, t: float, x: np.ndarray, stats: MeasureStats) -> np.ndarray:
    """Realized drift (n, d) of one control at one step.

    Relaxed controls contribute the probability-weighted average of the drift
    over their action atoms.
    """
    if control.is_relaxed:
        probs = control.probabilities(j, x)
        atoms = control.agrid.atoms
        out = np.zeros_like(x)
        for i in range(atoms.shape[0]):
            a = np.broadcast_to(atoms[i], x.shape[:-1] + (atoms.shape[1],))
            out += probs[..., i : i + 1] * game.drift(t, x, stats, a)
        return out
    a = control.actions(j, t, x, stats)
    return game.drift(t, x, stats, a)


def control_running(game: GameSpec, control: ControlField, j: int, t: float, x: np.ndarray, stats: MeasureStats) -> np.ndarray:
    """Realized running reward (n,) of one control at one step."""
    if control.is_relaxed:
        probs = control.probabilities(j, x)
        atoms = control.agrid.atoms
        out = np.zeros(x.shape[:-1])
        for i in range(atoms.shape[0]):
            a = np.broadcast_to(atoms[i], x.shape[:-1] + (atoms.shape[1],))
            out += probs[..., i] * game.running(t, x, stats, a)
        return out
    a = control.actions(j, t, x, stats)
    return game.running(t, x, stats, a)


def _feedback_groups(feedbacks, n: int):
    """Normalize a shared field or a length-n family into (field, indices) groups."""
    if isinstance(feedbacks, ControlField):
        return [(feedbacks, slice(None))]
    fields = list(feedbacks)
    if len(fields) != n:
        raise ValueError(f"need one feedback per player: got {len(fields)} for n={n}")
    groups = []
    seen: dict = {}
    for k, f in enumerate(fields):
        seen.setdefault(id(f), (f, []))[1].append(k)
    for f, idx in seen.values():
        groups.append((f, np.asarray(idx, dtype=np.intp)))
    return groups


def _prep_init(init: np.ndarray, n: int, dim: int) -> np.ndarray:
    init = np.asarray(init, dtype=float)
    if init.ndim == 1:
        init = init[:, None]
    if init.shape != (n, dim):
        raise ValueError(f"initial cloud must be ({n}, {dim}), got {init.shape}")
    return init


def simulate_nplayer(game: GameSpec, feedbacks, bundle: BrownianBundle, init: np.ndarray) -> ParticleEnsemble:
    """Integrate the coupled system: every player feeds back on its own state
    and on the statistics of the current empirical measure.

    feedbacks is a single ControlField shared by all players or a length-n
    family (one entry per player, duplicates allowed and grouped).
    """
    n, M, d = bundle.n, bundle.grid.n_steps, bundle.dim
    if d != game.dim:
        raise ValueError(f"bundle dimension {d} does not match game dimension {game.dim}")
    init = _prep_init(init, n, d)
    groups = _feedback_groups(feedbacks, n)
    dt = bundle.grid.dt
    times = bundle.grid.times

    states = np.empty((n, M + 1, d))
    drifts = np.empty((n, M, d))
    states[:, 0] = init
    x = init
    for j in range(M):
        stats = MeasureStats.from_cloud(x)
        for field, idx in groups:
            drifts[idx, j] = control_drift(game, field, j, times[j], x[idx], stats)
        _check_finite(drifts[:, j], "drift", times[j], x)
        x = x + drifts[:, j] * dt + bundle.increments[:, j]
        states[:, j + 1] = x
    return ParticleEnsemble(grid=bundle.grid, states=states, bundle=bundle, drifts=drifts, seed=bundle.seed)


def simulate_frozen_flow(game: GameSpec, control: ControlField, flow, bundle: BrownianBundle, init: np.ndarray) -> ParticleEnsemble:
    """Integrate i.i.d. copies against a frozen measure flow.

    flow only needs a stats_path() method; particles never see each other, so
    the cloud is a plain Monte Carlo sample of the controlled one-player law.
    """
    n, M, d = bundle.n, bundle.grid.n_steps, bundle.dim
    if d != game.dim:
        raise ValueError(f"bundle dimension {d} does not match game dimension {game.dim}")
    init = _prep_init(init, n, d)
    stats_path = flow.stats_path()
    if len(stats_path) != M + 1:
        raise ValueError("flow and bundle must share the time grid")
    dt = bundle.grid.dt
    times = bundle.grid.times

    states = np.empty((n, M + 1, d))
    drifts = np.empty((n, M, d))
    states[:, 0] = init
    x = init
    for j in range(M):
        drifts[:, j] = control_drift(game, control, j, times[j], x, stats_path[j])
        _check_finite(drifts[:, j], "drift", times[j], x)
        x = x + drifts[:, j] * dt + bundle.increments[:, j]
        states[:, j + 1] = x
    return ParticleEnsemble(grid=bundle.grid, states=states, bundle=bundle, drifts=drifts, seed=bundle.seed)


def integrate_paths(drift, bundle: BrownianBundle, init: np.ndarray) -> ParticleEnsemble:
    """Integrate exogenous drifts: an (n, M, d) array or a callable (j, x) -> (n, d).

    Used for processes whose drift is not a feedback, such as a random drift
    attached to each particle.
    """
    n, M, d = bundle.n, bundle.grid.n_steps, bundle.dim
    init = _prep_init(init, n, d)
    dt = bundle.grid.dt
    as_array = not callable(drift)
    if as_array:
        drift = np.asarray(drift, dtype=float)
        if drift.shape != (n, M, d):
            raise ValueError(f"drift array must be ({n}, {M}, {d}), got {drift.shape}")

    states = np.empty((n, M + 1, d))
    drifts = np.empty((n, M, d))
    states[:, 0] = init
    x = init
    for j in range(M):
        drifts[:, j] = drift[:, j] if as_array else drift(j, x)
        _check_finite(drifts[:, j], "drift", bundle.grid.times[j], x)
        x = x + drifts[:, j] * dt + bundle.increments[:, j]
        states[:, j + 1] = x
    return ParticleEnsemble(grid=bundle.grid, states=states, bundle=bundle, drifts=drifts, seed=bundle.seed)


def path_payoffs(game: GameSpec, ensemble: ParticleEnsemble, feedbacks, stats_path=None) -> np.ndarray:
    """Per-particle payoff sum_j f(t_j, X_j, m_j, a_j) dt + g(X_T, m_T).

    stats_path is the per-time list of MeasureStats the coefficients should
    see; by default it is recomputed from the ensemble's own clouds (the
    coupled-game convention). Pass a frozen flow's stats for one-player runs.
    """
    n, M = ensemble.n, ensemble.grid.n_steps
    groups = _feedback_groups(feedbacks, n)
    dt = ensemble.grid.dt
    times = ensemble.grid.times
    own_stats = stats_path is None
    total = np.zeros(n)
    for j in range(M):
        x = ensemble.states[:, j, :]
        stats = MeasureStats.from_cloud(x) if own_stats else stats_path[j]
        for field, idx in groups:
            total[idx] += control_running(game, field, j, times[j], x[idx], stats) * dt
    x_T = ensemble.states[:, M, :]
    stats_T = MeasureStats.from_cloud(x_T) if own_stats else stats_path[M]
    g = np.asarray(game.terminal(x_T, stats_T), dtype=float)
    _check_finite(g[:, None], "terminal reward", times[M], x_T)
    return total + g
