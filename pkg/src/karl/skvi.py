"""Soft Koopman value iteration on a discrete action grid.

Values follow the cost convention: ``V(x) = w . phi(x)`` estimates the
discounted cost-to-go, and policies prefer low scores.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import environments as envs
from .dictionaries import MonomialBasis
from .errors import ModelFormat
from .koopman import KoopmanTensor
from .numerics import lstsq

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
W_RIDGE = 1e-8


@dataclass(frozen=True)
class ActionGrid:
    low: tuple
    high: tuple
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("an action grid needs at least 2 points")
        object.__setattr__(self, "low", tuple(float(v) for v in np.atleast_1d(self.low)))
        object.__setattr__(self, "high", tuple(float(v) for v in np.atleast_1d(self.high)))

    @classmethod
    def for_env(cls, env: envs.EnvironmentSpec, count: int = 101) -> "ActionGrid":
        return cls(tuple(env.action_low), tuple(env.action_high), count)

    @property
    def points(self) -> np.ndarray:
        """All grid actions, shape (n_actions, action_dim); a product grid in >1 dims."""
        axes = [np.linspace(lo, hi, self.count) for lo, hi in zip(self.low, self.high)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def __len__(self) -> int:
        return self.count ** len(self.low)


def continuation_weights(w, tensor: KoopmanTensor, actions) -> np.ndarray:
    """Rows ``(K^{u_a})^T w``, so that ``w . K^{u_a} phi(x) = phi(x) . rows[a]``."""
    K = tensor.k_u(np.asarray(actions, dtype=float))
    return np.einsum("aij,i->aj", K, np.asarray(w, dtype=float))


def q_scores(w, tensor: KoopmanTensor, x, grid, gamma: float,
             cost_fn: Callable) -> np.ndarray:
    """Scores ``c(x, u_a) + gamma * w . K^{u_a} phi(x)`` for every grid action.

    ``x`` may be one state (returns shape (n_actions,)) or a batch
    (returns (N, n_actions)). ``cost_fn(X, U)`` must broadcast over
    a states axis and an actions axis.
    """
    actions = grid.points if isinstance(grid, ActionGrid) else np.asarray(grid, dtype=float)
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    rows = continuation_weights(w, tensor, actions)
    phi = tensor.phi_basis.eval(X)
    cont = phi @ rows.T
    costs = cost_fn(X[:, None, :], actions[None, :, :])
    out = costs + gamma * cont
    return out[0] if x.ndim == 1 else out


def softmax_policy(scores, alpha: float) -> np.ndarray:
    """Boltzmann distribution ``exp(-score/alpha)`` normalized over the last axis."""
    s = -np.asarray(scores, dtype=float) / alpha
    s = s - np.max(s, axis=-1, keepdims=True)
    p = np.exp(s)
    return p / np.sum(p, axis=-1, keepdims=True)


def soft_backup(scores, alpha: float):
    """Entropy-regularized soft minimum with uniform base measure over the last axis:
    ``-alpha * log(mean(exp(-scores / alpha)))``."""
    s = np.asarray(scores, dtype=float)
    n = s.shape[-1]
    smin = np.min(s, axis=-1)
    z = np.exp(-(s - smin[..., None]) / alpha)
    return smin - alpha * (np.log(np.sum(z, axis=-1)) - np.log(n))


@dataclass
class ValueWeights:
    w: np.ndarray
    norm_bound: float = 1e6
    abe_history: list = field(default_factory=list)

    def value(self, phi_basis: MonomialBasis, x):
        return phi_basis.eval(x) @ self.w


def project(w, bound: float) -> np.ndarray:
    norm = np.linalg.norm(w)
    if norm > bound:
        return w * (bound / norm)
    return w


def value_iteration(tensor: KoopmanTensor, env: envs.EnvironmentSpec, dataset_states, grid: ActionGrid,
                    alpha: float = 1.0, gamma: float = 0.99, epsilon: float = 1e-2,
                    W: float = 1e6, max_iters: int = 150, batch_size: int = 16384,
                    rng=None, w0=None, callback=None) -> ValueWeights:
    """Iterated average-Bellman-error regression for the value weights.

    Each iteration samples a batch of states (with replacement), computes the
    soft backups under the current weights, refits ``w`` by least squares and
    projects it onto the ball of radius ``W``. Stops once the average Bellman
    error of the new weights on that batch drops to ``epsilon``.
    """
    rng = np.random.default_rng() if rng is None else rng
    states = np.asarray(dataset_states, dtype=float)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("dataset_states must be a non-empty (N, state_dim) array")
    actions = grid.points
    # the action grid and its K^u are fixed for the whole run
    K_all = tensor.k_u(actions)
    action_costs = envs.action_cost(env, actions)[None, :]
    w = np.zeros(tensor.d_x) if w0 is None else np.asarray(w0, dtype=float)
    history = []

    def backups(weights, phi, costs):
        rows = np.einsum("aij,i->aj", K_all, weights)
        return soft_backup(costs + gamma * (phi @ rows.T), alpha)

    for it in range(max_iters):
        idx = rng.integers(0, states.shape[0], size=min(batch_size, states.shape[0]) if batch_size else states.shape[0])
        X = states[idx]
        phi = tensor.phi_basis.eval(X)
        costs = envs.state_cost(env, X)[:, None] + action_costs
        targets = backups(w, phi, costs)
        w = project(lstsq(phi, targets, W_RIDGE), W)
        abe = float(np.mean((phi @ w - backups(w, phi, costs)) ** 2))
        history.append(abe)
        if callback is not None:
            callback(it, w, abe)
        log.debug("skvi iter %d abe %.6g", it, abe)
        if not np.isfinite(abe):
            break
        if abe <= epsilon:
            break
    return ValueWeights(w, W, history)


class SkviPolicy:
    """Acting with learned value weights: greedy argmin or softmax sampling.

    Callable on a single state or a batch of states.
    """

    def __init__(self, weights, tensor: KoopmanTensor, env: envs.EnvironmentSpec,
                 grid: ActionGrid, alpha: float = 1.0, gamma: float = 0.99,
                 greedy: bool = True):
        self.w = np.asarray(weights.w if isinstance(weights, ValueWeights) else weights, float)
        self.tensor = tensor
        self.env = env
        self.grid = grid
        self.alpha = alpha
        self.gamma = gamma
        self.greedy = greedy
        self.actions = grid.points
        self._rows = continuation_weights(self.w, tensor, self.actions)
        self._action_costs = envs.action_cost(env, self.actions)[None, :]

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        phi = self.tensor.phi_basis.eval(X)
        costs = envs.state_cost(self.env, X)[:, None] + self._action_costs
        return costs + self.gamma * (phi @ self._rows.T)

    def __call__(self, x, rng=None):
        x = np.asarray(x, dtype=float)
        S = self.scores(x)
        if self.greedy:
            idx = np.argmin(S, axis=1)  # ties go to the lowest grid index
        else:
            P = softmax_policy(S, self.alpha)
            cdf = np.cumsum(P, axis=1)
            r = rng.random(S.shape[0])[:, None]
            idx = np.minimum((cdf < r).sum(axis=1), S.shape[1] - 1)
        U = self.actions[idx]
        return U[0] if x.ndim == 1 else U


def skvi_act(w, tensor, x, grid, alpha, gamma, cost_fn, rng=None, greedy=True) -> np.ndarray:
    """Action for a single state from value weights ``w``."""
    actions = grid.points
    S = q_scores(w, tensor, x, actions, gamma, cost_fn)
    if greedy:
        return actions[int(np.argmin(S))]
    p = softmax_policy(S, alpha)
    return actions[int(rng.choice(len(actions), p=p))]


def save_model(path, weights: ValueWeights, grid: ActionGrid, alpha: float, gamma: float,
               tensor: KoopmanTensor, env: envs.EnvironmentSpec, tensor_path=None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "skvi",
        "env": env.kind,
        "env_spec": env.to_dict(),
        "w": weights.w.tolist(),
        "W": weights.norm_bound,
        "abe_history": list(weights.abe_history),
        "grid": {"low": list(grid.low), "high": list(grid.high), "count": grid.count},
        "alpha": alpha,
        "gamma": gamma,
        "phi_basis": tensor.phi_basis.to_dict(),
        "psi_basis": tensor.psi_basis.to_dict(),
        "tensor_path": None if tensor_path is None else str(tensor_path),
        "tensor": tensor.to_dict(),
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path):
    """Returns (ValueWeights, ActionGrid, alpha, gamma, KoopmanTensor, doc)."""
    try:
        doc = json.loads(Path(path).read_text())
        if doc.get("kind") != "skvi":
            raise ModelFormat(f"{path} is not an SKVI model")
        tensor = KoopmanTensor.from_dict(doc["tensor"])
        g = doc["grid"]
        grid = ActionGrid(tuple(g["low"]), tuple(g["high"]), int(g["count"]))
        weights = ValueWeights(np.asarray(doc["w"], dtype=float), float(doc["W"]),
                               list(doc.get("abe_history", [])))
        return weights, grid, float(doc["alpha"]), float(doc["gamma"]), tensor, doc
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, ModelFormat):
            raise
        raise ModelFormat(f"malformed SKVI model {path}: {exc}") from exc
