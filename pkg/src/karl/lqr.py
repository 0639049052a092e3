"""LQR baseline: analytic linearizations and Riccati solvers."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import environments as envs
from . import kernels
from .errors import ModelFormat, NoConvergence, NotEquilibrium


@dataclass
class LqrSolution:
    P: np.ndarray
    K: np.ndarray
    mode: str  # "discrete" | "continuous"
    iterations: int = 0


def linearize(env: envs.EnvironmentSpec, x_e=None, u_e=None):
    """Jacobians (A, B) of the dynamics at the reference point.

    For the linear system these are its own matrices; for the continuous
    systems they are the closed-form Jacobians of the drift.
    """
    x_e = np.asarray(env.x_e if x_e is None else x_e, dtype=float)
    u_e = np.zeros(env.action_dim) if u_e is None else np.asarray(u_e, dtype=float)
    if env.kind == envs.LINEAR_SYSTEM:
        return np.array(env.A), np.array(env.B)

    f0 = envs.drift(env, x_e, u_e)
    if np.linalg.norm(f0) >= 1e-8:
        raise NotEquilibrium(f"|f(x_e, u_e)| = {np.linalg.norm(f0):.3e} for {env.kind}")

    x0, x1 = x_e[0], x_e[1]
    if env.kind == envs.FLUID_FLOW:
        mu, omega, a, lam = env.params
        x2 = x_e[2]
        A = np.array([[mu + a * x2, -omega, a * x0],
                      [omega, mu + a * x2, a * x1],
                      [2 * lam * x0, 2 * lam * x1, -lam]])
        B = np.array([[0.0], [1.0], [0.0]])
    elif env.kind == envs.LORENZ:
        sigma, rho, beta = env.params
        x2 = x_e[2]
        A = np.array([[-sigma, sigma, 0.0],
                      [rho - x2, -1.0, -x0],
                      [x1, x0, -beta]])
        B = np.array([[1.0], [0.0], [0.0]])
    elif env.kind == envs.DOUBLE_WELL:
        A = np.array([[4.0 - 12.0 * x0 ** 2, 0.0], [0.0, -2.0]])
        B = np.array([[1.0], [1.0]])
    else:  # pragma: no cover
        raise ValueError(env.kind)
    return A, B


def solve_dare(A, B, Q, R, tol: float = 1e-12, max_iters: int = 1_000_000) -> LqrSolution:
    """Discrete Riccati equation by fixed-point iteration from P0 = Q."""
    A, B, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R))
    P = Q.copy()
    for it in range(1, max_iters + 1):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_new = Q + A.T @ P @ A - A.T @ P @ B @ gain
        P_new = 0.5 * (P_new + P_new.T)
        if not np.all(np.isfinite(P_new)):
            raise NoConvergence("DARE iteration diverged")
        delta = np.max(np.abs(P_new - P))
        P = P_new
        if delta < tol * max(1.0, np.max(np.abs(P))):
            K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
            return LqrSolution(P, K, "discrete", it)
    raise NoConvergence(f"DARE did not converge in {max_iters} iterations")


def dare_residual(A, B, Q, R, P) -> np.ndarray:
    A, B, Q, R, P = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R, P))
    BtPA = B.T @ P @ A
    return Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(R + B.T @ P @ B, BtPA) - P


def care_rhs(A, B, Q, Rinv, P) -> np.ndarray:
    """A^T P + P A - P B R^-1 B^T P + Q (equals -dP/dt of the Riccati flow)."""
    PB = P @ B
    return A.T @ P + P @ A - PB @ Rinv @ PB.T + Q


def solve_care(A, B, Q, R, tol: float = 1e-10, max_iters: int = 5_000_000,
               h: float = 1e-3) -> LqrSolution:
    """Continuous Riccati equation as the steady state of the Riccati flow.

    Integrates ``-dP/dt = A^T P + P A - P B R^-1 B^T P + Q`` in reverse time
    with RK4 at pseudo-time step ``h`` from P0 = Q. The step is halved if the
    iteration goes non-finite (stiff cases with tiny R).
    """
    A, B, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R))
    Rinv = np.linalg.inv(R)
    S = B @ Rinv @ B.T
    step = h
    while step > 1e-9:
        P, it, status = kernels.riccati_flow(A, S, Q, step, tol, max_iters)
        if status == 0:
            return LqrSolution(P, Rinv @ B.T @ P, "continuous", it)
        if status == 1:
            raise NoConvergence(f"CARE did not converge in {max_iters} steps")
        step *= 0.5
    raise NoConvergence("CARE integration unstable at every step size tried")


def care_residual(A, B, Q, R, P) -> np.ndarray:
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return care_rhs(np.atleast_2d(A), np.atleast_2d(B), np.atleast_2d(Q), np.linalg.inv(R),
                    np.atleast_2d(P))


def spectral_radius(M, squarings: int = 40) -> float:
    """Gelfand-formula estimate of the spectral radius (no eigensolver)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    log_scale = 0.0
    power = 1.0
    for _ in range(squarings):
        norm = np.linalg.norm(M, 2)
        if norm == 0.0:
            return 0.0
        M = M / norm
        log_scale = 2.0 * (log_scale + np.log(norm))
        M = M @ M
        power *= 2.0
    norm = np.linalg.norm(M, 2)
    if norm == 0.0:
        return 0.0
    return float(np.exp((log_scale + np.log(norm)) / power))


def lyapunov_certificate(Acl) -> np.ndarray:
    """Solve Acl^T S + S Acl = -I by vectorization; S positive definite iff Acl is Hurwitz."""
    Acl = np.atleast_2d(np.asarray(Acl, dtype=float))
    n = Acl.shape[0]
    I = np.eye(n)
    L = np.kron(I, Acl.T) + np.kron(Acl.T, I)
    S = np.linalg.solve(L, -I.reshape(-1)).reshape(n, n)
    return 0.5 * (S + S.T)


def is_stabilizing(A, B, sol: LqrSolution) -> bool:
    Acl = np.atleast_2d(A) - np.atleast_2d(B) @ sol.K
    if sol.mode == "discrete":
        return spectral_radius(Acl) < 1.0
    S = lyapunov_certificate(Acl)
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return False
    return True


def solve_env(env: envs.EnvironmentSpec) -> LqrSolution:
    """dlqr for the linear map, continuous lqr on the linearization elsewhere."""
    A, B = linearize(env)
    if env.kind == envs.LINEAR_SYSTEM:
        return solve_dare(A, B, env.Q, env.R)
    return solve_care(A, B, env.Q, env.R)


def lqr_policy(sol: LqrSolution, x, x_e, action_bounds=None) -> np.ndarray:
    """u = -K (x - x_e), clipped to ``action_bounds = (low, high)`` when given.

    Works on one state or a batch of states (rows).
    """
    d = np.asarray(x, dtype=float) - np.asarray(x_e, dtype=float)
    u = -(d @ sol.K.T)
    if action_bounds is not None:
        u = np.clip(u, action_bounds[0], action_bounds[1])
    return u


class LqrController:
    """Batched LQR policy bound to an environment, usable with ``episode_returns``."""

    def __init__(self, env: envs.EnvironmentSpec, sol: LqrSolution | None = None,
                 clip: bool = True):
        self.env = env
        self.sol = solve_env(env) if sol is None else sol
        self.clip = clip

    def __call__(self, x, rng=None):
        bounds = (self.env.action_low, self.env.action_high) if self.clip else None
        return lqr_policy(self.sol, x, self.env.x_e, bounds)


def lqr_action_range(env: envs.EnvironmentSpec, episodes: int = 10, seed: int = 0):
    """[min, max] of the unclipped LQR actions over ``episodes`` episodes.

    This is how the default action bounds of every environment were derived.
    """
    wide = env.replace(action_low=np.full(env.action_dim, -1e12),
                       action_high=np.full(env.action_dim, 1e12))
    ctrl = LqrController(wide, clip=False)
    rng = np.random.default_rng(seed)
    lo = np.full(env.action_dim, np.inf)
    hi = np.full(env.action_dim, -np.inf)

    def recording(X, rng_):
        nonlocal lo, hi
        U = ctrl(X)
        lo = np.minimum(lo, U.min(axis=0))
        hi = np.maximum(hi, U.max(axis=0))
        return U

    envs.episode_returns(wide, recording, rng, episodes)
    return lo, hi


FORMAT_VERSION = 1


def save_model(path, env: envs.EnvironmentSpec, sol: LqrSolution) -> None:
    doc = {"format_version": FORMAT_VERSION, "kind": "lqr", "env": env.kind,
           "env_spec": env.to_dict(), "mode": sol.mode, "iterations": sol.iterations,
           "P": sol.P.tolist(), "K": sol.K.tolist()}
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path):
    """Returns (env, LqrSolution)."""
    try:
        doc = json.loads(Path(path).read_text())
        if doc.get("kind") != "lqr":
            raise ModelFormat(f"{path} is not an LQR model")
        env = envs.EnvironmentSpec.from_dict(doc["env_spec"])
        sol = LqrSolution(np.asarray(doc["P"], float), np.asarray(doc["K"], float),
                          doc["mode"], int(doc.get("iterations", 0)))
        return env, sol
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, ModelFormat):
            raise
        raise ModelFormat(f"malformed LQR model {path}: {exc}") from exc
