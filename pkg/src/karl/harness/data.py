"""Random-agent transition datasets and their CSV format."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import environments as envs
from ..errors import ModelFormat


@dataclass
class Dataset:
    episode: np.ndarray
    step: np.ndarray
    X: np.ndarray
    U: np.ndarray
    reward: np.ndarray
    Y: np.ndarray

    def __len__(self) -> int:
        return self.X.shape[0]

    def triples(self):
        return self.X, self.U, self.Y

    def header(self) -> list[str]:
        n, m = self.X.shape[1], self.U.shape[1]
        return (["episode", "step"] + [f"x_{i}" for i in range(n)] + [f"u_{j}" for j in range(m)]
                + ["reward"] + [f"next_x_{i}" for i in range(n)])

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for k in range(len(self)):
                writer.writerow([int(self.episode[k]), int(self.step[k])]
                                + [repr(float(v)) for v in self.X[k]]
                                + [repr(float(v)) for v in self.U[k]]
                                + [repr(float(self.reward[k]))]
                                + [repr(float(v)) for v in self.Y[k]])

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ModelFormat(f"{path}: empty dataset file") from None
            rows = [r for r in reader]
        n = sum(1 for h in header if h.startswith("x_"))
        m = sum(1 for h in header if h.startswith("u_"))
        expected = 2 + n + m + 1 + n
        if len(header) != expected or header[:2] != ["episode", "step"]:
            raise ModelFormat(f"{path}: unexpected dataset header {header}")
        if any(len(r) != expected for r in rows):
            raise ModelFormat(f"{path}: row width does not match header")
        data = np.array(rows, dtype=float).reshape(-1, expected)
        return cls(data[:, 0].astype(int), data[:, 1].astype(int), data[:, 2:2 + n],
                   data[:, 2 + n:2 + n + m], data[:, 2 + n + m], data[:, 3 + n + m:])


def collect(env: envs.EnvironmentSpec, n_steps: int, rng, episode_len: int | None = None) -> Dataset:
    """Transitions from a uniform-random agent; a new episode starts every
    ``episode_len`` steps (the environment's own length by default)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    L = env.episode_len if episode_len is None else episode_len
    n, m = env.state_dim, env.action_dim
    X = np.empty((n_steps, n))
    U = np.empty((n_steps, m))
    Y = np.empty((n_steps, n))
    episode = np.empty(n_steps, dtype=int)
    step = np.empty(n_steps, dtype=int)
    x = None
    for k in range(n_steps):
        t = k % L
        if t == 0:
            x = envs.reset(env, rng)
        u = rng.uniform(env.action_low, env.action_high)
        x_next = envs.step(env, x, u, rng)
        X[k], U[k], Y[k] = x, u, x_next
        episode[k], step[k] = k // L, t
        x = x_next
    reward = -envs.cost(env, X, U)
    return Dataset(episode, step, X, U, reward, Y)
