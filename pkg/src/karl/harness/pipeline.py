"""End-to-end building blocks shared by the CLI, the sweeps and the tests.

Every function takes an integer seed and derives independent streams from
it, so a (function, seed) pair always reproduces the same result.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import actor_critic as ac
from .. import environments as envs
from .. import lqr
from ..dictionaries import MonomialBasis
from ..koopman import DEFAULT_RIDGE, KoopmanTensor, fit_tensor
from ..skvi import ActionGrid, SkviPolicy, ValueWeights, value_iteration
from .data import Dataset, collect

# stream tags for np.random.default_rng([seed, tag])
DATA, TRAIN, EVAL = 11, 23, 37

DEFAULT_SKVI_BATCH = 16384


def rng_for(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


def collect_dataset(env, seed: int, n_steps: int = 30000, episode_len: int | None = None) -> Dataset:
    return collect(env, n_steps, rng_for(seed, DATA), episode_len)


def build_tensor(env, seed: int = 0, *, n_steps: int = 30000, phi_degree: int = 2,
                 psi_degree: int = 2, ridge: float = DEFAULT_RIDGE,
                 episode_len: int | None = None, dataset: Dataset | None = None):
    """Collect random-agent data (unless given) and fit the Koopman tensor."""
    if dataset is None:
        dataset = collect_dataset(env, seed, n_steps, episode_len)
    phi = MonomialBasis(env.state_dim, phi_degree)
    psi = MonomialBasis(env.action_dim, psi_degree)
    return fit_tensor(dataset.triples(), phi, psi, ridge), dataset


@dataclass
class SkviRun:
    policy: SkviPolicy
    weights: ValueWeights
    tensor: KoopmanTensor
    grid: ActionGrid
    dataset: Dataset


def run_skvi(env, seed: int = 0, *, tensor: KoopmanTensor | None = None,
             dataset: Dataset | None = None, n_steps: int = 30000, phi_degree: int = 2,
             psi_degree: int = 2, grid_count: int = 101, alpha: float = 1.0,
             gamma: float = 0.99, epochs: int = 150, batch_size: int = DEFAULT_SKVI_BATCH,
             epsilon: float = 1e-2, W: float = 1e6) -> SkviRun:
    if tensor is None or dataset is None:
        fitted, dataset = build_tensor(env, seed, n_steps=n_steps, phi_degree=phi_degree,
                                       psi_degree=psi_degree, dataset=dataset)
        tensor = tensor or fitted
    grid = ActionGrid.for_env(env, grid_count)
    weights = value_iteration(tensor, env, dataset.X, grid, alpha=alpha, gamma=gamma,
                              epsilon=epsilon, W=W, max_iters=epochs, batch_size=batch_size,
                              rng=rng_for(seed, TRAIN))
    policy = SkviPolicy(weights, tensor, env, grid, alpha, gamma, greedy=True)
    return SkviRun(policy, weights, tensor, grid, dataset)


def run_actor_critic(algo: str, env, seed: int = 0, *, steps: int = 50000,
                     tensor: KoopmanTensor | None = None, config: ac.AgentConfig | None = None,
                     n_steps: int = 30000, phi_degree: int = 2, psi_degree: int = 2,
                     episode_len: int | None = None, on_episode=None) -> ac.TrainResult:
    if algo == ac.SAKC and tensor is None:
        tensor, _ = build_tensor(env, seed, n_steps=n_steps, phi_degree=phi_degree,
                                 psi_degree=psi_degree, episode_len=episode_len)
    rng = rng_for(seed, TRAIN)
    return ac.train(algo, env, steps, rng, config=config, tensor=tensor, on_episode=on_episode)


def agent_policy(agent: ac.SoftAgent):
    """Deterministic evaluation policy: the mean action of the actor."""
    return lambda X, rng=None: agent.act_mean(X)


def lqr_policy(env):
    return lqr.LqrController(env)


def zero_policy(env):
    return lambda X, rng=None: np.zeros((np.atleast_2d(X).shape[0], env.action_dim))


def evaluate_returns(env, policy, seed: int = 0, episodes: int = 100) -> np.ndarray:
    """Episode returns on the evaluation stream of ``seed``.

    Policies that do not draw random numbers see identical initial states
    (and, for the stochastic environment, identical noise) for a given seed.
    """
    return envs.episode_returns(env, policy, rng_for(seed, EVAL), episodes)


def mean_return(env, policy, seed: int = 0, episodes: int = 100) -> float:
    return float(np.mean(evaluate_returns(env, policy, seed, episodes)))
