"""Small fully connected networks with hand-written backprop, Adam, and the
tanh-squashed Gaussian policy head used by the actor-critic agents."""
from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
TANH_EPS = 1e-6
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class Mlp:
    """ReLU hidden layers, identity output. Weights are stored (fan_in, fan_out)."""

    def __init__(self, layer_dims, rng=None, weights=None, biases=None):
        self.layer_dims = [int(d) for d in layer_dims]
        if len(self.layer_dims) < 2:
            raise ValueError("need at least an input and an output layer")
        if weights is None:
            rng = np.random.default_rng() if rng is None else rng
            weights, biases = [], []
            for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
                bound = 1.0 / math.sqrt(fan_in)
                weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
                biases.append(rng.uniform(-bound, bound, size=fan_out))
        self.weights = [np.array(W, dtype=float) for W in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for W, b, fi, fo in zip(self.weights, self.biases, self.layer_dims[:-1], self.layer_dims[1:]):
            if W.shape != (fi, fo) or b.shape != (fo,):
                raise DimensionMismatch("parameter shapes do not match layer_dims")

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.layer_dims, weights=[W.copy() for W in self.weights],
                   biases=[b.copy() for b in self.biases])

    def forward(self, x):
        """Returns (output, cache). Accepts one input vector or a batch (rows)."""
        x = np.asarray(x, dtype=float)
        h = x[None, :] if x.ndim == 1 else x
        if h.shape[1] != self.layer_dims[0]:
            raise DimensionMismatch(f"expected input dim {self.layer_dims[0]}, got {h.shape[1]}")
        inputs, pre = [], []
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ W + b
            pre.append(z)
            h = z if k == last else np.maximum(z, 0.0)
        out = h[0] if x.ndim == 1 else h
        return out, (inputs, pre, x.ndim == 1)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, out_grad, param_grads: bool = True):
        """Gradients of ``sum(output * out_grad)``.

        Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
        :attr:`params` (``None`` entries when ``param_grads`` is false).
        """
        inputs, pre, single = cache
        g = np.asarray(out_grad, dtype=float)
        g = g[None, :] if single else g
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            if k != len(self.weights) - 1:
                g = g * (pre[k] > 0.0)
            if param_grads:
                grads[2 * k] = inputs[k].T @ g
                grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k].T
        return grads, (g[0] if single else g)

    def to_dict(self) -> dict:
        return {"layer_dims": self.layer_dims,
                "layers": [{"W": W.ravel().tolist(), "b": b.tolist()}
                           for W, b in zip(self.weights, self.biases)]}

    @classmethod
    def from_dict(cls, d) -> "Mlp":
        dims = d["layer_dims"]
        Ws = [np.asarray(l["W"], float).reshape(fi, fo)
              for l, fi, fo in zip(d["layers"], dims[:-1], dims[1:])]
        bs = [np.asarray(l["b"], float) for l in d["layers"]]
        return cls(dims, weights=Ws, biases=bs)


class Adam:
    """Bias-corrected Adam acting in place on a list of parameter arrays."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params, grads, state: Adam) -> None:
    """Functional spelling of ``state.step(grads)`` for ``state.params is params``."""
    if state.params is not params:
        state.params = params
    state.step(grads)


def squash_log_std(raw):
    """Map an unbounded output into [LOG_STD_MIN, LOG_STD_MAX] via tanh."""
    return LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (np.tanh(raw) + 1.0)


class PolicyHead:
    """Gaussian policy squashed by tanh and rescaled into the action box."""

    def __init__(self, state_dim, action_dim, action_low, action_high, hidden=256,
                 rng=None, trunk: Mlp | None = None, out_init_scale: float = 1e-3):
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.low = np.broadcast_to(np.asarray(action_low, float), (self.action_dim,)).copy()
        self.high = np.broadcast_to(np.asarray(action_high, float), (self.action_dim,)).copy()
        self.scale = (self.high - self.low) / 2.0
        self.bias = (self.high + self.low) / 2.0
        if trunk is None:
            dims = [self.state_dim] + ([hidden] if hidden else []) + [2 * self.action_dim]
            trunk = Mlp(dims, rng)
            # near-zero head: the untrained policy is state-independent noise
            trunk.weights[-1] *= out_init_scale
            trunk.biases[-1] *= out_init_scale
        self.trunk = trunk

    @property
    def params(self):
        return self.trunk.params

    def dist_params(self, x):
        """(mean, log_std, cache) of the pre-squash Gaussian."""
        out, cache = self.trunk.forward(np.atleast_2d(x))
        m = self.action_dim
        return out[:, :m], squash_log_std(out[:, m:]), (cache, out[:, m:])

    def _squash(self, a):
        y = np.tanh(a)
        u = np.clip(self.scale * y + self.bias, self.low, self.high)
        return u, y

    def sample(self, x, rng=None, noise=None):
        """Reparameterized sample: returns (action, log_prob, aux) for one state or a batch.

        ``aux`` carries what :meth:`backward` needs.
        """
        x = np.asarray(x, dtype=float)
        mean, log_std, cache = self.dist_params(x)
        if noise is None:
            noise = rng.standard_normal(mean.shape)
        noise = np.asarray(noise, dtype=float).reshape(mean.shape)
        std = np.exp(log_std)
        a = mean + std * noise
        u, y = self._squash(a)
        log_prob = (-0.5 * noise ** 2 - log_std - _HALF_LOG_2PI
                    - np.log(self.scale * (1.0 - y * y) + TANH_EPS)).sum(axis=1)
        aux = (cache, noise, std, y)
        if x.ndim == 1:
            return u[0], float(log_prob[0]), aux
        return u, log_prob, aux

    def mean_action(self, x):
        """Deterministic action scale * tanh(mean) + bias."""
        x = np.asarray(x, dtype=float)
        mean, _, _ = self.dist_params(x)
        u, _ = self._squash(mean)
        return u[0] if x.ndim == 1 else u

    def log_std(self, x):
        return self.dist_params(x)[1]

    def backward(self, aux, grad_u, grad_logp):
        """Parameter gradients of ``sum(grad_u * u + grad_logp * log_prob)`` through
        a reparameterized sample with its noise held fixed."""
        (trunk_cache, raw), noise, std, y = aux
        grad_u = np.atleast_2d(grad_u)
        grad_logp = np.asarray(grad_logp, dtype=float).reshape(-1, 1)
        one_minus_y2 = 1.0 - y * y
        denom = self.scale * one_minus_y2 + TANH_EPS
        # d log_prob / d a through the tanh correction term
        dlogp_da = 2.0 * y * self.scale * one_minus_y2 / denom
        g_a = grad_u * self.scale * one_minus_y2 + grad_logp * dlogp_da
        g_mean = g_a
        g_log_std = g_a * std * noise - grad_logp
        t = np.tanh(raw)
        g_raw = g_log_std * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t)
        grads, _ = self.trunk.backward(trunk_cache, np.concatenate([g_mean, g_raw], axis=1))
        return grads

    def to_dict(self):
        return {"state_dim": self.state_dim, "action_dim": self.action_dim,
                "low": self.low.tolist(), "high": self.high.tolist(),
                "trunk": self.trunk.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["state_dim"], d["action_dim"], d["low"], d["high"],
                   trunk=Mlp.from_dict(d["trunk"]))


def policy_sample(head: PolicyHead, x, rng):
    """(action, log_prob) for a single state."""
    u, logp, _ = head.sample(x, rng)
    return u, logp
