"""Game catalog: state dynamics, rewards, and initial laws.

A game couples n particles only through summary statistics of the empirical
measure (mean, variance), so coefficient callables receive a MeasureStats
value rather than a raw particle cloud. All catalog coefficients are bounded
on the declared state box, keeping explicit schemes and Girsanov exponents
well behaved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class MeasureStats:
    """Summary statistics of a probability measure on R^d."""

    mean: np.ndarray  # (d,)
    var: np.ndarray   # (d,) per-coordinate variance

    @classmethod
    def from_cloud(cls, cloud: np.ndarray) -> "MeasureStats":
        cloud = np.asarray(cloud, dtype=float)
        if cloud.ndim != 2:
            raise ValueError(f"cloud must be (n, d), got shape {cloud.shape}")
        return cls(mean=cloud.mean(axis=0), var=cloud.var(axis=0))

    @classmethod
    def point(cls, x) -> "MeasureStats":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(mean=x, var=np.zeros_like(x))


@dataclass(frozen=True)
class InitialLaw:
    """Initial state distribution: point mass, Gaussian, or uniform box."""

    kind: str
    loc: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "loc", np.atleast_1d(np.asarray(self.loc, dtype=float)))
        object.__setattr__(self, "scale", np.atleast_1d(np.asarray(self.scale, dtype=float)))
        if self.kind not in ("point", "gaussian", "uniform"):
            raise ValueError(f"unknown initial law kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.loc.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.loc.copy()

    def support_radius(self) -> np.ndarray:
        # effective per-coordinate half-width used for box sizing; Gaussian
        # tails are cut at four standard deviations
        if self.kind == "point":
            return np.zeros(self.dim)
        if self.kind == "gaussian":
            return 4.0 * self.scale
        return self.scale.copy()

    def sampler(self) -> Callable:
        loc, scale, d = self.loc, self.scale, self.dim
        if self.kind == "point":
            return lambda gen, n: np.tile(loc, (n, 1))
        if self.kind == "gaussian":
            return lambda gen, n: loc + scale * gen.standard_normal((n, d))
        return lambda gen, n: gen.uniform(loc - scale, loc + scale, size=(n, d))


@dataclass(frozen=True)
class GameSpec:
    """One symmetric drift-control game with unit diffusion.

    drift(t, x, m, a) -> (..., dim), running(t, x, m, a) -> (...), and
    terminal(x, m) -> (...) must broadcast over leading axes of x (..., dim)
    and a (..., action_dim); m is a MeasureStats. Bounds are sups over the
    declared state box, the action box, and measures supported there.
    """

    name: str
    dim: int
    action_dim: int
    action_lo: np.ndarray
    action_hi: np.ndarray
    horizon: float
    initial: InitialLaw
    drift: Callable
    running: Callable
    terminal: Callable
    drift_bound: float
    running_bound: float
    terminal_bound: float
    state_lo: np.ndarray
    state_hi: np.ndarray
    measure_stats: tuple = ("mean",)
    drift_affine_in_action: bool = False
    # (f1(t, x, m), f2(t, x, a)) when the running reward separates into a
    # measure part and an action part; required by the monotonicity checker
    running_split: tuple | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("action_lo", "action_hi", "state_lo", "state_hi"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if self.action_lo.shape != (self.action_dim,) or self.action_hi.shape != (self.action_dim,):
            raise ValueError("action bounds must have shape (action_dim,)")
        if self.state_lo.shape != (self.dim,) or self.state_hi.shape != (self.dim,):
            raise ValueError("state bounds must have shape (dim,)")
        if self.initial.dim != self.dim:
            raise ValueError("initial law dimension does not match state dimension")

    @property
    def payoff_scale(self) -> float:
        """Crude bound on attainable payoffs: sup|f| * T + sup|g|."""
        return self.running_bound * self.horizon + self.terminal_bound


def _zero_running(t, x, m, a):
    return np.zeros(np.broadcast_shapes(x.shape[:-1], a.shape[:-1]))


def _zero_terminal(x, m):
    return np.zeros(x.shape[:-1])


def _default_state_box(initial: InitialLaw, drift_bound: float, horizon: float):
    # wide enough that simulated paths essentially never leave the box:
    # initial support plus worst-case drift plus six standard deviations
    pad = drift_bound * horizon + 6.0 * np.sqrt(horizon)
    lo = initial.loc - initial.support_radius() - pad
    hi = initial.loc + initial.support_radius() + pad
    return lo, hi


def sign_drift(horizon: float = 1.0) -> GameSpec:
    """Fully controlled drift, terminal reward x times the population mean.

    The terminal coupling rewards moving with the crowd, so the population
    can coordinate on drifting up, drifting down, or not at all.
    """
    initial = InitialLaw("point", [0.0], [0.0])
    lo, hi = _default_state_box(initial, 1.0, horizon)
    mean_bound = float(np.max(np.abs([lo, hi])))
    return GameSpec(
        name="sign_drift",
        dim=1,
        action_dim=1,
        action_lo=[-1.0],
        action_hi=[1.0],
        horizon=horizon,
        initial=initial,
        drift=lambda t, x, m, a: a,
        running=_zero_running,
        terminal=lambda x, m: x[..., 0] * m.mean[0],
        drift_bound=1.0,
        running_bound=0.0,
        terminal_bound=mean_bound * (1.0 + horizon),
        state_lo=lo,
        state_hi=hi,
        drift_affine_in_action=True,
        running_split=(lambda t, x, m: np.zeros(x.shape[:-1]), lambda t, x, a: np.zeros(np.broadcast_shapes(x.shape[:-1], a.shape[:-1]))),
        params={"horizon": horizon},
    )


def monotone_lq(horizon: float = 1.0, action_cost: float = 0.5) -> GameSpec:
    """Quadratic action cost and a crowd-averse terminal reward -x * mean.

    The terminal coupling penalizes moving with the crowd, which makes the
    standard monotonicity inequality hold with a strict sign and pins down a
    single equilibrium: nobody moves.
    """
    initial = InitialLaw("point", [0.0], [0.0])
    lo, hi = _default_state_box(initial, 1.0, horizon)
    mean_bound = float(np.max(np.abs([lo, hi])))

    def running(t, x, m, a):
        shape = np.broadcast_shapes(x.shape[:-1], a.shape[:-1])
        return np.broadcast_to(-action_cost * a[..., 0] ** 2, shape).copy()

    return GameSpec(
        name="monotone_lq",
        dim=1,
        action_dim=1,
        action_lo=[-1.0],
        action_hi=[1.0],
        horizon=horizon,
        initial=initial,
        drift=lambda t, x, m, a: a,
        running=running,
        terminal=lambda x, m: -x[..., 0] * m.mean[0],
        drift_bound=1.0,
        running_bound=action_cost,
        terminal_bound=mean_bound * (1.0 + horizon),
        state_lo=lo,
        state_hi=hi,
        drift_affine_in_action=True,
        running_split=(
            lambda t, x, m: np.zeros(x.shape[:-1]),
            lambda t, x, a: np.broadcast_to(-action_cost * a[..., 0] ** 2, np.broadcast_shapes(x.shape[:-1], a.shape[:-1])).copy(),
        ),
        params={"horizon": horizon, "action_cost": action_cost},
    )


_MEAN_DRIFT_PROFILES = {
    # bounded interaction drifts B(mean); "linear" is clipped far outside the
    # region any mean path can reach, so it is Lipschitz and bounded at once
    "linear": (lambda m, s: -np.clip(m, -8.0, 8.0) * s, 8.0),
    "sign": (lambda m, s: np.sign(m) * s, 1.0),
    "sqrt": (lambda m, s: np.sign(m) * np.sqrt(np.abs(np.clip(m, -8.0, 8.0))) * s, np.sqrt(8.0)),
    "zero": (lambda m, s: np.zeros_like(m), 0.0),
}


def mean_drift(profile: str = "linear", scale: float = 1.0, x0: float = 1.0, horizon: float = 1.0) -> GameSpec:
    """Uncontrolled dynamics: every particle drifts with B(population mean).

    The action box is a single point so the control machinery degenerates;
    all the structure is in how the mean path follows the ODE driven by B.
    """
    if profile not in _MEAN_DRIFT_PROFILES:
        raise ValueError(f"unknown mean_drift profile {profile!r}; choose from {sorted(_MEAN_DRIFT_PROFILES)}")
    B, unit_bound = _MEAN_DRIFT_PROFILES[profile]
    bound = abs(scale) * unit_bound if profile != "zero" else 0.0
    initial = InitialLaw("point", [x0], [0.0])
    lo, hi = _default_state_box(initial, max(bound, 1.0), horizon)

    def drift(t, x, m, a):
        shape = np.broadcast_shapes(x.shape[:-1], a.shape[:-1]) + (1,)
        return np.broadcast_to(B(m.mean[0], scale), shape).copy()

    return GameSpec(
        name="mean_drift",
        dim=1,
        action_dim=1,
        action_lo=[0.0],
        action_hi=[0.0],
        horizon=horizon,
        initial=initial,
        drift=drift,
        running=_zero_running,
        terminal=_zero_terminal,
        drift_bound=max(bound, 1e-12),
        running_bound=0.0,
        terminal_bound=0.0,
        state_lo=lo,
        state_hi=hi,
        params={"profile": profile, "scale": scale, "x0": x0, "horizon": horizon},
    )


def mean_drift_ode_rhs(game: GameSpec):
    """The B driving a mean_drift game, as a scalar function of the mean."""
    if game.name != "mean_drift":
        raise ValueError("only mean_drift games carry an interaction ODE")
    B, _ = _MEAN_DRIFT_PROFILES[game.params["profile"]]
    scale = game.params["scale"]
    return lambda m: float(B(np.asarray(m, dtype=float), scale))


def driftless(horizon: float = 1.0, x0: float = 0.0) -> GameSpec:
    """No drift, no rewards: pure Brownian motion, used for baselines."""
    initial = InitialLaw("point", [x0], [0.0])
    lo, hi = _default_state_box(initial, 0.0, horizon)
    return GameSpec(
        name="driftless",
        dim=1,
        action_dim=1,
        action_lo=[0.0],
        action_hi=[0.0],
        horizon=horizon,
        initial=initial,
        drift=lambda t, x, m, a: np.zeros_like(x),
        running=_zero_running,
        terminal=_zero_terminal,
        drift_bound=1e-12,
        running_bound=0.0,
        terminal_bound=0.0,
        state_lo=lo,
        state_hi=hi,
        params={"horizon": horizon, "x0": x0},
    )


def tracking_lq(horizon: float = 1.0, target: float = 1.0, action_cost: float = 0.0) -> GameSpec:
    """Steer toward a fixed target: g = -(x - target)^2, optional -c*a^2 cost.

    No measure coupling at all, so the frozen-flow problem is a plain control
    problem with a known qualitative solution (drive at full speed toward
    the target until the cost of overshooting bites).
    """
    initial = InitialLaw("point", [0.0], [0.0])
    lo, hi = _default_state_box(initial, 1.0, horizon)
    span = float(np.max(np.abs([lo - target, hi - target])))

    def running(t, x, m, a):
        shape = np.broadcast_shapes(x.shape[:-1], a.shape[:-1])
        return np.broadcast_to(-action_cost * a[..., 0] ** 2, shape).copy()

    return GameSpec(
        name="tracking_lq",
        dim=1,
        action_dim=1,
        action_lo=[-1.0],
        action_hi=[1.0],
        horizon=horizon,
        initial=initial,
        drift=lambda t, x, m, a: a,
        running=running,
        terminal=lambda x, m: -((x[..., 0] - target) ** 2),
        drift_bound=1.0,
        running_bound=action_cost,
        terminal_bound=span**2,
        state_lo=lo,
        state_hi=hi,
        drift_affine_in_action=True,
        params={"horizon": horizon, "target": target, "action_cost": action_cost},
    )


def action_square(horizon: float = 1.0, reward_sign: float = 1.0) -> GameSpec:
    """Running reward +-a^2 with drift a; the + sign rewards extreme actions.

    With reward_sign=+1 the running reward is convex in the action, which
    breaks the convexity assumption behind drift-matching selection and is
    used as its counterexample.
    """
    initial = InitialLaw("point", [0.0], [0.0])
    lo, hi = _default_state_box(initial, 1.0, horizon)

    def running(t, x, m, a):
        shape = np.broadcast_shapes(x.shape[:-1], a.shape[:-1])
        return np.broadcast_to(reward_sign * a[..., 0] ** 2, shape).copy()

    return GameSpec(
        name="action_square",
        dim=1,
        action_dim=1,
        action_lo=[-1.0],
        action_hi=[1.0],
        horizon=horizon,
        initial=initial,
        drift=lambda t, x, m, a: a,
        running=running,
        terminal=_zero_terminal,
        drift_bound=1.0,
        running_bound=1.0,
        terminal_bound=0.0,
        state_lo=lo,
        state_hi=hi,
        drift_affine_in_action=True,
        params={"horizon": horizon, "reward_sign": reward_sign},
    )


GAME_CATALOG: dict = {
    "sign_drift": sign_drift,
    "monotone_lq": monotone_lq,
    "mean_drift": mean_drift,
    "driftless": driftless,
    "tracking_lq": tracking_lq,
    "action_square": action_square,
}


def register_game(name: str, factory: Callable) -> None:
    """Add a custom GameSpec factory to the catalog."""
    if name in GAME_CATALOG:
        raise ValueError(f"game {name!r} already registered")
    GAME_CATALOG[name] = factory


def make_game(name: str, **params) -> GameSpec:
    if name not in GAME_CATALOG:
        raise KeyError(f"unknown game {name!r}; catalog has {sorted(GAME_CATALOG)}")
    return GAME_CATALOG[name](**params)
