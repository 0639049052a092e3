"""Soft actor Koopman-critic (SAKC) and the two neural SAC baselines.

Rewards are negative costs. All three agents share the replay buffer, the
twin Q networks and the squashed-Gaussian actor; they differ in how the
continuation value inside the Q target is formed:

* SAKC:  r + gamma * w_bar . K^u phi(x)     (linear value, Koopman tensor)
* SAC_V: r + gamma * V_target(x')           (value network with Polyak target)
* SAC_Q: r + gamma * (min Q_target(x', u') - alpha log pi(u'|x'))
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import environments as envs
from ._alloc import tune_allocator
from .errors import InsufficientData, ModelFormat
from .koopman import KoopmanTensor
from .neural import Adam, Mlp, PolicyHead

log = logging.getLogger(__name__)

SAKC = "SAKC"
SAC_V = "SAC_V"
SAC_Q = "SAC_Q"
ALGOS = (SAKC, SAC_V, SAC_Q)
FORMAT_VERSION = 1


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = int(capacity)
        self.X = np.zeros((self.capacity, state_dim))
        self.U = np.zeros((self.capacity, action_dim))
        self.R = np.zeros(self.capacity)
        self.Y = np.zeros((self.capacity, state_dim))
        self.D = np.zeros(self.capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, x, u, r, x_next, done=False) -> None:
        k = self.cursor
        self.X[k], self.U[k], self.R[k], self.Y[k], self.D[k] = x, u, r, x_next, done
        self.cursor = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng) -> "Batch":
        """Uniform sample with replacement."""
        if self.size < batch or self.size == 0:
            raise InsufficientData(f"buffer holds {self.size} transitions, {batch} requested")
        idx = rng.integers(0, self.size, size=batch)
        return Batch(self.X[idx], self.U[idx], self.R[idx], self.Y[idx], self.D[idx])

    def contents(self) -> list[tuple]:
        """Stored transitions from oldest to newest."""
        start = self.cursor if self.size == self.capacity else 0
        order = [(start + i) % self.capacity for i in range(self.size)]
        return [(self.X[k].copy(), self.U[k].copy(), float(self.R[k]), self.Y[k].copy(), bool(self.D[k]))
                for k in order]


def buffer_push(buffer: ReplayBuffer, transition) -> None:
    buffer.push(*transition)


def buffer_sample(buffer: ReplayBuffer, batch: int, rng) -> "Batch":
    return buffer.sample(batch, rng)


@dataclass
class Batch:
    X: np.ndarray
    U: np.ndarray
    R: np.ndarray
    Y: np.ndarray
    D: np.ndarray = None

    def __len__(self):
        return self.X.shape[0]


def polyak(w, w_bar, tau: float):
    """tau * w + (1 - tau) * w_bar (arrays or lists of arrays)."""
    if isinstance(w, (list, tuple)):
        return [polyak(a, b, tau) for a, b in zip(w, w_bar)]
    return tau * np.asarray(w, float) + (1.0 - tau) * np.asarray(w_bar, float)


def _polyak_inplace(params, target_params, tau):
    for p, t in zip(params, target_params):
        t *= 1.0 - tau
        t += tau * p


W_OPTIMIZERS = ("sgd", "adam", "gauss_newton")
W_GN_RIDGE = 1e-8


@dataclass
class AgentConfig:
    alpha: float = 0.2
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    hidden: int = 256
    q_lr: float = 1e-3
    v_lr: float = 1e-3
    policy_lr: float = 3e-4
    w_lr: float = 0.1
    w_optimizer: str = "gauss_newton"  # or "sgd", "adam"
    buffer_size: int = 1_000_000
    learning_starts: int = 5000
    autotune: bool | None = None  # default: on for SAC_Q only
    alpha_lr: float = 1e-3


class SoftAgent:
    """State shared by all three algorithms: twin critics and the actor."""

    algo = ""

    def __init__(self, env: envs.EnvironmentSpec, config: AgentConfig | None = None, rng=None):
        self.env = env
        self.config = config or AgentConfig()
        rng = np.random.default_rng() if rng is None else rng
        n, m, h = env.state_dim, env.action_dim, self.config.hidden
        self.q1 = Mlp([n + m, h, 1], rng)
        self.q2 = Mlp([n + m, h, 1], rng)
        self.policy = PolicyHead(n, m, env.action_low, env.action_high, h, rng)
        self.q1_opt = Adam(self.q1.params, self.config.q_lr)
        self.q2_opt = Adam(self.q2.params, self.config.q_lr)
        self.policy_opt = Adam(self.policy.params, self.config.policy_lr)
        self.alpha = float(self.config.alpha)
        self.gamma = float(self.config.gamma)
        self.tau = float(self.config.tau)

    # -- critics -------------------------------------------------------------
    def q_values(self, X, U):
        XU = np.concatenate([X, U], axis=1)
        return self.q1(XU)[:, 0], self.q2(XU)[:, 0]

    def q_target(self, batch: Batch, rng=None, noise=None) -> np.ndarray:
        raise NotImplementedError

    def q_loss_and_grads(self, batch: Batch, target=None):
        """Loss 1/2 mean (Q_i - target)^2 for both critics and their gradients."""
        if target is None:
            target = self.q_target(batch)
        XU = np.concatenate([batch.X, batch.U], axis=1)
        n = len(batch)
        out = []
        for net in (self.q1, self.q2):
            q, cache = net.forward(XU)
            err = q[:, 0] - target
            grads, _ = net.backward(cache, (err / n)[:, None])
            out.append((0.5 * float(np.mean(err ** 2)), grads))
        return out

    def update_q(self, batch: Batch, rng=None):
        target = self.q_target(batch, rng)
        (l1, g1), (l2, g2) = self.q_loss_and_grads(batch, target)
        self.q1_opt.step(g1)
        self.q2_opt.step(g2)
        return l1, l2

    # -- actor ---------------------------------------------------------------
    def policy_loss_and_grads(self, batch: Batch, rng=None, noise=None):
        """Reparameterized loss mean(alpha log pi(u~|x) - min_i Q_i(x, u~)) and its gradients."""
        X = batch.X
        n = X.shape[0]
        m = self.env.action_dim
        U, logp, aux = self.policy.sample(X, rng, noise)
        XU = np.concatenate([X, U], axis=1)
        q1, c1 = self.q1.forward(XU)
        q2, c2 = self.q2.forward(XU)
        use1 = q1[:, 0] <= q2[:, 0]
        qmin = np.where(use1, q1[:, 0], q2[:, 0])
        loss = float(np.mean(self.alpha * logp - qmin))
        # dQmin/du only through the network attaining the minimum
        ones = np.full((n, 1), -1.0 / n)
        _, gx1 = self.q1.backward(c1, ones * use1[:, None], param_grads=False)
        _, gx2 = self.q2.backward(c2, ones * (~use1)[:, None], param_grads=False)
        grad_u = (gx1 + gx2)[:, -m:]
        grads = self.policy.backward(aux, grad_u, np.full(n, self.alpha / n))
        return loss, grads, logp

    def update_policy(self, batch: Batch, rng=None):
        loss, grads, logp = self.policy_loss_and_grads(batch, rng)
        self.policy_opt.step(grads)
        return loss, logp

    # -- acting --------------------------------------------------------------
    def act(self, x, rng):
        u, _, _ = self.policy.sample(x, rng)
        return u

    def act_mean(self, x, rng=None):
        return self.policy.mean_action(x)

    def gradient_step(self, buffer: ReplayBuffer, rng) -> dict:
        raise NotImplementedError

    # -- persistence ---------------------------------------------------------
    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "kind": self.algo, "env": self.env.kind,
                "env_spec": self.env.to_dict(), "alpha": self.alpha, "gamma": self.gamma,
                "tau": self.tau, "q1": self.q1.to_dict(), "q2": self.q2.to_dict(),
                "policy": self.policy.to_dict()}


class SakcAgent(SoftAgent):
    algo = SAKC

    def __init__(self, env, tensor: KoopmanTensor, config=None, rng=None):
        super().__init__(env, config, rng)
        self.tensor = tensor
        self.w = np.zeros(tensor.d_x)
        self.w_bar = np.zeros(tensor.d_x)
        self._w_opt = None
        if self.config.w_optimizer not in W_OPTIMIZERS:
            raise ValueError(f"w_optimizer must be one of {W_OPTIMIZERS}")
        if self.config.w_optimizer == "adam":
            self._w_opt = Adam([self.w], self.config.w_lr)

    def value(self, X):
        return self.tensor.phi_basis.eval(X) @ self.w

    def target_q(self, x, u) -> np.ndarray:
        """r(x, u) + gamma * w_bar . K^u phi(x) for one pair or a batch."""
        r = envs.reward(self.env, x, u)
        cont = self.tensor.predict_phi(x, u) @ self.w_bar
        return r + self.gamma * cont

    def q_target(self, batch, rng=None, noise=None):
        return self.target_q(batch.X, batch.U)

    def value_targets(self, batch, rng=None, noise=None):
        U, logp, _ = self.policy.sample(batch.X, rng, noise)
        q1, q2 = self.q_values(batch.X, U)
        return np.minimum(q1, q2) - self.alpha * logp

    def value_loss_and_grad(self, batch, targets):
        phi = self.tensor.phi_basis.eval(batch.X)
        err = phi @ self.w - targets
        return 0.5 * float(np.mean(err ** 2)), phi.T @ err / len(batch)

    def update_value_weights(self, batch, rng=None, targets=None, lr=None):
        """One step on the quadratic value loss with the configured optimizer.

        ``gauss_newton`` moves a fraction ``lr`` of the way to the batch
        least-squares fit, so raw monomials of very different magnitudes all
        converge at the same rate. Plain ``sgd`` caps its step at
        1 / mean |phi|^2 (a lower bound on 1 / lambda_max of the batch
        Hessian) to stay stable.
        """
        if targets is None:
            targets = self.value_targets(batch, rng)
        loss, grad = self.value_loss_and_grad(batch, targets)
        if self._w_opt is not None:
            self._w_opt.step([grad])
            return loss
        lr = self.config.w_lr if lr is None else lr
        phi = self.tensor.phi_basis.eval(batch.X)
        if self.config.w_optimizer == "gauss_newton":
            # precondition with the batch Gram matrix: a step of size lr toward
            # the batch least-squares solution, whatever the feature scales
            G = phi.T @ phi / len(batch)
            G[np.diag_indices_from(G)] += W_GN_RIDGE * max(np.trace(G) / len(G), 1.0)
            self.w = self.w - lr * np.linalg.solve(G, grad)
            return loss
        phi_sq = float(np.mean(np.sum(phi ** 2, axis=1)))
        if phi_sq > 0:
            lr = min(lr, 1.0 / phi_sq)
        self.w = self.w - lr * grad
        return loss

    def gradient_step(self, buffer, rng):
        batch = buffer.sample(self.config.batch_size, rng)
        v_loss = self.update_value_weights(batch, rng)
        q1_loss, q2_loss = self.update_q(batch, rng)
        pi_loss, _ = self.update_policy(batch, rng)
        self.w_bar = polyak(self.w, self.w_bar, self.tau)
        return {"v_loss": v_loss, "q1_loss": q1_loss, "q2_loss": q2_loss, "pi_loss": pi_loss}

    def to_dict(self):
        d = super().to_dict()
        d.update(w=self.w.tolist(), w_bar=self.w_bar.tolist(), tensor=self.tensor.to_dict())
        return d


class SacVAgent(SoftAgent):
    algo = SAC_V

    def __init__(self, env, config=None, rng=None):
        super().__init__(env, config, rng)
        rng = np.random.default_rng() if rng is None else rng
        self.v = Mlp([env.state_dim, self.config.hidden, 1], rng)
        self.v_target = self.v.copy()
        self.v_opt = Adam(self.v.params, self.config.v_lr)

    def q_target(self, batch, rng=None, noise=None):
        return batch.R + self.gamma * self.v_target(batch.Y)[:, 0]

    def value_targets(self, batch, rng=None, noise=None):
        U, logp, _ = self.policy.sample(batch.X, rng, noise)
        q1, q2 = self.q_values(batch.X, U)
        return np.minimum(q1, q2) - self.alpha * logp

    def value_loss_and_grads(self, batch, targets):
        v, cache = self.v.forward(batch.X)
        err = v[:, 0] - targets
        grads, _ = self.v.backward(cache, (err / len(batch))[:, None])
        return 0.5 * float(np.mean(err ** 2)), grads

    def gradient_step(self, buffer, rng):
        batch = buffer.sample(self.config.batch_size, rng)
        v_loss, grads = self.value_loss_and_grads(batch, self.value_targets(batch, rng))
        self.v_opt.step(grads)
        q1_loss, q2_loss = self.update_q(batch, rng)
        pi_loss, _ = self.update_policy(batch, rng)
        _polyak_inplace(self.v.params, self.v_target.params, self.tau)
        return {"v_loss": v_loss, "q1_loss": q1_loss, "q2_loss": q2_loss, "pi_loss": pi_loss}

    def to_dict(self):
        d = super().to_dict()
        d.update(v=self.v.to_dict(), v_target=self.v_target.to_dict())
        return d


class SacQAgent(SoftAgent):
    algo = SAC_Q

    def __init__(self, env, config=None, rng=None):
        super().__init__(env, config, rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        autotune = self.config.autotune
        self.autotune = True if autotune is None else bool(autotune)
        self.target_entropy = -float(env.action_dim)
        self.log_alpha = np.array([np.log(self.alpha)])
        self.alpha_opt = Adam([self.log_alpha], self.config.alpha_lr)

    def q_target(self, batch, rng=None, noise=None):
        U2, logp2, _ = self.policy.sample(batch.Y, rng, noise)
        XU = np.concatenate([batch.Y, U2], axis=1)
        q = np.minimum(self.q1_target(XU)[:, 0], self.q2_target(XU)[:, 0])
        return batch.R + self.gamma * (q - self.alpha * logp2)

    def alpha_loss_and_grad(self, logp):
        """J(alpha) = mean(-alpha (log pi + target_entropy)) w.r.t. log alpha."""
        a = float(np.exp(self.log_alpha[0]))
        s = float(np.mean(logp + self.target_entropy))
        return -a * s, np.array([-a * s])

    def gradient_step(self, buffer, rng):
        batch = buffer.sample(self.config.batch_size, rng)
        q1_loss, q2_loss = self.update_q(batch, rng)
        pi_loss, logp = self.update_policy(batch, rng)
        if self.autotune:
            _, grad = self.alpha_loss_and_grad(logp)
            self.alpha_opt.step([grad])
            self.alpha = float(np.exp(self.log_alpha[0]))
        _polyak_inplace(self.q1.params, self.q1_target.params, self.tau)
        _polyak_inplace(self.q2.params, self.q2_target.params, self.tau)
        return {"q1_loss": q1_loss, "q2_loss": q2_loss, "pi_loss": pi_loss, "alpha": self.alpha}

    def to_dict(self):
        d = super().to_dict()
        d.update(q1_target=self.q1_target.to_dict(), q2_target=self.q2_target.to_dict(),
                 log_alpha=float(self.log_alpha[0]))
        return d


def make_agent(algo: str, env, config=None, rng=None, tensor=None) -> SoftAgent:
    if algo == SAKC:
        if tensor is None:
            raise ValueError("SAKC needs a fitted Koopman tensor")
        return SakcAgent(env, tensor, config, rng)
    if algo == SAC_V:
        return SacVAgent(env, config, rng)
    if algo == SAC_Q:
        return SacQAgent(env, config, rng)
    raise ValueError(f"unknown algorithm {algo!r}")


@dataclass
class EpisodeLog:
    episode: int
    step: int
    ret: float
    wall_time: float


@dataclass
class TrainResult:
    agent: SoftAgent
    episodes: list = field(default_factory=list)


def train(algo: str, env: envs.EnvironmentSpec, total_steps: int, rng, config=None,
          tensor=None, agent: SoftAgent | None = None, on_episode=None) -> TrainResult:
    """Interleave one environment step and (after warm-up) one gradient step.

    Episodes have the environment's fixed length; each finished episode's
    return is appended to the log (and passed to ``on_episode``).
    """
    tune_allocator()
    if agent is None:
        agent = make_agent(algo, env, config, rng, tensor)
    cfg = agent.config
    buffer = ReplayBuffer(min(cfg.buffer_size, max(total_steps, 1)), env.state_dim, env.action_dim)
    result = TrainResult(agent)
    t0 = time.perf_counter()
    x = envs.reset(env, rng)
    ep_ret, ep_t, episode = 0.0, 0, 0
    for step in range(total_steps):
        u = agent.act(x, rng)
        r = -float(envs.cost(env, x, u))
        x_next = envs.step(env, x, u, rng)
        ep_t += 1
        done = ep_t == env.episode_len
        buffer.push(x, u, r, x_next, done)
        ep_ret += r
        x = x_next
        if done:
            rec = EpisodeLog(episode, step + 1, ep_ret, time.perf_counter() - t0)
            result.episodes.append(rec)
            if on_episode is not None:
                on_episode(rec)
            episode += 1
            ep_ret, ep_t = 0.0, 0
            x = envs.reset(env, rng)
        if step + 1 >= cfg.learning_starts and len(buffer) >= cfg.batch_size:
            agent.gradient_step(buffer, rng)
    return result


def save_agent(agent: SoftAgent, path) -> None:
    Path(path).write_text(json.dumps(agent.to_dict()))


def load_agent(path) -> SoftAgent:
    """Rebuild an agent (policy, critics, value weights) from a model file."""
    try:
        d = json.loads(Path(path).read_text())
        return agent_from_dict(d)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, ModelFormat):
            raise
        raise ModelFormat(f"malformed agent model {path}: {exc}") from exc


def agent_from_dict(d: dict) -> SoftAgent:
    kind = d.get("kind")
    if kind not in ALGOS:
        raise ModelFormat(f"not an actor-critic model (kind={kind!r})")
    env = envs.EnvironmentSpec.from_dict(d["env_spec"])
    cfg = AgentConfig(alpha=d["alpha"], gamma=d["gamma"], tau=d["tau"],
                      hidden=d["q1"]["layer_dims"][1])
    rng = np.random.default_rng(0)
    if kind == SAKC:
        agent = SakcAgent(env, KoopmanTensor.from_dict(d["tensor"]), cfg, rng)
        agent.w = np.asarray(d["w"], float)
        agent.w_bar = np.asarray(d["w_bar"], float)
    elif kind == SAC_V:
        agent = SacVAgent(env, cfg, rng)
        agent.v = Mlp.from_dict(d["v"])
        agent.v_target = Mlp.from_dict(d["v_target"])
    else:
        agent = SacQAgent(env, cfg, rng)
        agent.q1_target = Mlp.from_dict(d["q1_target"])
        agent.q2_target = Mlp.from_dict(d["q2_target"])
        agent.log_alpha = np.array([d["log_alpha"]])
    agent.q1 = Mlp.from_dict(d["q1"])
    agent.q2 = Mlp.from_dict(d["q2"])
    agent.policy = PolicyHead.from_dict(d["policy"])
    agent.alpha = float(d["alpha"])
    return agent
