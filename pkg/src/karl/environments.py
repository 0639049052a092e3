"""The four benchmark controlled systems, their quadratic cost and episode mechanics.

States and actions are float64 arrays. Most functions accept either a single
point (1-D) or a batch (2-D, one row per sample) and return the same rank.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import DimensionMismatch, NonFiniteState

LINEAR_SYSTEM = "LinearSystem"
FLUID_FLOW = "FluidFlow"
LORENZ = "Lorenz63"
DOUBLE_WELL = "DoubleWell"
KINDS = (LINEAR_SYSTEM, FLUID_FLOW, LORENZ, DOUBLE_WELL)

_KERNEL_CODE = {FLUID_FLOW: kernels.FLUID_FLOW, LORENZ: kernels.LORENZ,
                DOUBLE_WELL: kernels.DOUBLE_WELL}

LORENZ_SIGMA, LORENZ_RHO, LORENZ_BETA = 10.0, 28.0, 8.0 / 3.0
FLUID_MU, FLUID_OMEGA, FLUID_A, FLUID_LAMBDA = 0.1, 1.0, -0.1, 1.0


def _arr(x, dtype=float):
    a = np.array(x, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    kind: str
    state_dim: int
    action_dim: int
    dt: float
    integrator: str  # "DiscreteMap" | "RK4" | "EulerMaruyama"
    action_low: np.ndarray
    action_high: np.ndarray
    x_e: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    episode_len: int
    init_low: np.ndarray
    init_high: np.ndarray
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    params: np.ndarray = field(default_factory=lambda: _arr([]))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.episode_len < 1:
            raise ValueError("episode_len must be >= 1")
        if np.any(np.asarray(self.action_low) > np.asarray(self.action_high)):
            raise ValueError("action_low must not exceed action_high")
        for name in ("Q", "R"):
            M = np.asarray(getattr(self, name))
            if not np.allclose(M, M.T):
                raise ValueError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(M)) < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")

    @property
    def deterministic(self) -> bool:
        return self.integrator != "EulerMaruyama"

    def replace(self, **changes) -> "EnvironmentSpec":
        conv = {k: (_arr(v) if isinstance(v, (list, tuple, np.ndarray)) else v)
                for k, v in changes.items()}
        return dataclasses.replace(self, **conv)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentSpec":
        kw = {}
        for f in dataclasses.fields(cls):
            v = d.get(f.name)
            if f.name not in d:
                continue
            kw[f.name] = _arr(v) if isinstance(v, list) else v
        return cls(**kw)


# Action bounds are symmetric: +/- the largest |action| of the unclipped LQR
# policy over 10 evaluation episodes (seed 0), rounded outward to 2 decimals;
# see lqr.lqr_action_range.
DEFAULT_ACTION_BOUNDS = {
    LINEAR_SYSTEM: (-2.57, 2.57),
    FLUID_FLOW: (-1.88, 1.88),
    LORENZ: (-1354.19, 1354.19),
    DOUBLE_WELL: (-15.33, 15.33),
}


def lorenz_reference() -> np.ndarray:
    c = np.sqrt(LORENZ_BETA * (LORENZ_RHO - 1.0))
    return np.array([c, c, LORENZ_RHO - 1.0])


def make_env(kind: str, *, dt: float | None = None, episode_len: int = 300,
             action_low=None, action_high=None, Q_scale: float = 1.0,
             R_scale: float = 1.0, A=None, B=None) -> EnvironmentSpec:
    """Build one of the benchmark environments with its default settings."""
    if kind == LINEAR_SYSTEM:
        A = np.array([[1.0, 0.02], [0.0, 1.0]]) if A is None else np.asarray(A, float)
        B = np.array([[0.0], [0.02]]) if B is None else np.asarray(B, float)
        n, m = A.shape[0], B.shape[1]
        base = dict(dt=0.02 if dt is None else dt, integrator="DiscreteMap",
                    x_e=np.zeros(n), R=np.eye(m), init=([-1.0] * n, [1.0] * n), A=A, B=B,
                    params=[])
    elif kind == FLUID_FLOW:
        n, m = 3, 1
        base = dict(dt=0.01 if dt is None else dt, integrator="RK4", x_e=np.zeros(3),
                    R=np.eye(1), init=([-1.0, -1.0, 0.0], [1.0, 1.0, 1.0]),
                    params=[FLUID_MU, FLUID_OMEGA, FLUID_A, FLUID_LAMBDA])
    elif kind == LORENZ:
        n, m = 3, 1
        base = dict(dt=0.01 if dt is None else dt, integrator="RK4", x_e=lorenz_reference(),
                    R=0.001 * np.eye(1), init=([-20.0, -20.0, 0.0], [20.0, 20.0, 50.0]),
                    params=[LORENZ_SIGMA, LORENZ_RHO, LORENZ_BETA])
    elif kind == DOUBLE_WELL:
        n, m = 2, 1
        base = dict(dt=0.01 if dt is None else dt, integrator="EulerMaruyama",
                    x_e=np.zeros(2), R=np.eye(1), init=([-2.0, -2.0], [2.0, 2.0]),
                    params=[])
    else:
        raise ValueError(f"unknown environment kind {kind!r}")

    lo, hi = DEFAULT_ACTION_BOUNDS[kind]
    low = np.full(m, lo) if action_low is None else np.broadcast_to(np.asarray(action_low, float), (m,))
    high = np.full(m, hi) if action_high is None else np.broadcast_to(np.asarray(action_high, float), (m,))
    init_low, init_high = base.pop("init")
    return EnvironmentSpec(
        kind=kind, state_dim=n, action_dim=m, dt=float(base["dt"]),
        integrator=base["integrator"], action_low=_arr(low), action_high=_arr(high),
        x_e=_arr(base["x_e"]), Q=_arr(Q_scale * np.eye(n)), R=_arr(R_scale * base["R"]),
        episode_len=int(episode_len), init_low=_arr(init_low), init_high=_arr(init_high),
        A=None if base.get("A") is None else _arr(base["A"]),
        B=None if base.get("B") is None else _arr(base["B"]),
        params=_arr(base["params"]),
    )


def _as_batch(v, dim, what):
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    V = v[None, :] if single else v
    if V.ndim != 2 or V.shape[1] != dim:
        raise DimensionMismatch(f"{what}: expected dimension {dim}, got shape {v.shape}")
    return V, single


def drift(spec: EnvironmentSpec, x, u) -> np.ndarray:
    """Right-hand side f(x, u) for continuous systems, or F(x, u) = Ax + Bu for the linear map."""
    X, single = _as_batch(x, spec.state_dim, "state")
    U, _ = _as_batch(u, spec.action_dim, "action")
    if spec.kind == LINEAR_SYSTEM:
        out = X @ spec.A.T + U @ spec.B.T
    else:
        out = kernels.drift(_KERNEL_CODE[spec.kind], spec.params, X, U)
    return out[0] if single else out


def diffusion(spec: EnvironmentSpec, x) -> np.ndarray:
    """State-dependent diffusion matrix (zero for deterministic systems)."""
    x = np.asarray(x, dtype=float)
    n = spec.state_dim
    if spec.kind != DOUBLE_WELL:
        return np.zeros(x.shape[:-1] + (n, n))
    out = np.zeros(x.shape[:-1] + (2, 2))
    out[..., 0, 0] = 0.7
    out[..., 0, 1] = x[..., 0]
    out[..., 1, 1] = 0.5
    return out


def clip_action(spec: EnvironmentSpec, u) -> np.ndarray:
    return np.clip(np.asarray(u, dtype=float), spec.action_low, spec.action_high)


def step_unchecked(spec: EnvironmentSpec, X, U, rng=None, noise=None) -> np.ndarray:
    """Batched step without the finiteness check. ``X`` (N, n), ``U`` (N, m)."""
    U = clip_action(spec, U)
    if spec.kind == LINEAR_SYSTEM:
        return X @ spec.A.T + U @ spec.B.T
    code = _KERNEL_CODE[spec.kind]
    if spec.integrator == "RK4":
        return kernels.rk4(code, spec.params, X, U, spec.dt)
    if noise is None:
        noise = rng.standard_normal((X.shape[0], 2))
    return kernels.euler_maruyama(code, spec.params, X, U, spec.dt, noise)


def step(spec: EnvironmentSpec, x, u, rng=None, noise=None) -> np.ndarray:
    """Advance one time step. The action is clipped to the bounds first.

    ``noise`` (standard normal, shape (N, 2) or (2,)) overrides the draws from
    ``rng`` for the stochastic system.
    """
    X, single = _as_batch(x, spec.state_dim, "state")
    U, _ = _as_batch(u, spec.action_dim, "action")
    if noise is not None:
        noise = np.atleast_2d(np.asarray(noise, dtype=float))
    out = step_unchecked(spec, X, U, rng, noise)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"{spec.kind}: non-finite state after step")
    return out[0] if single else out


def cost(spec: EnvironmentSpec, x, u):
    """Quadratic cost (x - x_e)^T Q (x - x_e) + u^T R u."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    d = x - spec.x_e
    return (np.einsum("...i,ij,...j->...", d, spec.Q, d)
            + np.einsum("...i,ij,...j->...", u, spec.R, u))


def state_cost(spec: EnvironmentSpec, x):
    """The (x - x_e)^T Q (x - x_e) part of the cost."""
    d = np.asarray(x, dtype=float) - spec.x_e
    return np.einsum("...i,ij,...j->...", d, spec.Q, d)


def action_cost(spec: EnvironmentSpec, u):
    """The u^T R u part of the cost."""
    u = np.asarray(u, dtype=float)
    return np.einsum("...i,ij,...j->...", u, spec.R, u)


def reward(spec: EnvironmentSpec, x, u):
    return -cost(spec, x, u)


def reset(spec: EnvironmentSpec, rng, n: int | None = None) -> np.ndarray:
    """Uniform initial state(s) from the init box; ``n`` gives a batch."""
    size = (spec.state_dim,) if n is None else (n, spec.state_dim)
    return rng.uniform(spec.init_low, spec.init_high, size=size)


@dataclass
class Transition:
    x: np.ndarray
    u: np.ndarray
    reward: float
    x_next: np.ndarray
    done: bool


Policy = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def rollout(spec: EnvironmentSpec, policy: Policy, rng, episodes: int,
            record: bool = True) -> list[tuple[float, list[Transition]]]:
    """Run ``episodes`` full episodes one after another.

    ``policy(x, rng)`` maps a single state to an action. A blow-up ends the
    episode early; the remaining steps are charged the largest single-step
    cost seen in that episode.
    """
    results = []
    for _ in range(episodes):
        x = reset(spec, rng)
        total = 0.0
        worst = 0.0
        transitions: list[Transition] = []
        for t in range(1, spec.episode_len + 1):
            u = clip_action(spec, np.atleast_1d(policy(x, rng)))
            c = float(cost(spec, x, u))
            if not np.isfinite(c):
                total -= worst * (spec.episode_len - t + 1)
                break
            worst = max(worst, c)
            total -= c
            try:
                x_next = step(spec, x, u, rng)
            except NonFiniteState:
                total -= worst * (spec.episode_len - t)
                break
            if record:
                transitions.append(Transition(x, u, -c, x_next, t == spec.episode_len))
            x = x_next
        results.append((total, transitions))
    return results


def episode_returns(spec: EnvironmentSpec, policy: Callable, rng, episodes: int) -> np.ndarray:
    """Run ``episodes`` episodes in lockstep with a batched policy ``policy(X, rng) -> U``.

    Same return accounting as :func:`rollout` (including blow-up handling)
    but vectorized over episodes; random draws are consumed in a different
    order, so the two do not give identical numbers for one seed.
    """
    X = reset(spec, rng, episodes)
    totals = np.zeros(episodes)
    worst = np.zeros(episodes)
    alive = np.ones(episodes, dtype=bool)
    L = spec.episode_len
    for t in range(1, L + 1):
        U = clip_action(spec, policy(X, rng))
        if spec.integrator == "EulerMaruyama":
            noise = rng.standard_normal((episodes, 2))
        else:
            noise = None
        c = cost(spec, X, U)
        bad_cost = alive & ~np.isfinite(c)
        if bad_cost.any():
            totals[bad_cost] -= worst[bad_cost] * (L - t + 1)
            alive &= ~bad_cost
        worst = np.where(alive, np.maximum(worst, np.where(alive, c, 0.0)), worst)
        totals[alive] -= c[alive]
        with np.errstate(all="ignore"):
            X_next = step_unchecked(spec, X, U, rng, noise)
        blown = alive & ~np.all(np.isfinite(X_next), axis=1)
        if blown.any():
            totals[blown] -= worst[blown] * (L - t)
            alive &= ~blown
        X = np.where(alive[:, None], X_next, 0.0)
        if not alive.any():
            break
    return totals
