"""Koopman tensor estimation for controlled systems.

The tensor ``T`` has shape (d_x, d_x, d_u) and is stored flattened as
``M`` (d_x, d_x * d_u) with ``T[i, j, z] == M[i, z * d_x + j]`` (column-major
reshape of each row). Contracting the third axis against ``psi(u)`` gives
the action-conditioned operator ``K^u`` with ``K^u phi(x) = M (psi(u) kron phi(x))``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import environments as envs
from .dictionaries import MonomialBasis, joint_feature
from .errors import DimensionMismatch, ModelFormat
from .numerics import lstsq, sherman_morrison_update

FORMAT_VERSION = 1
DEFAULT_RIDGE = 1e-6


@dataclass
class KoopmanTensor:
    M: np.ndarray
    phi_basis: MonomialBasis
    psi_basis: MonomialBasis
    ridge: float = 0.0
    n_samples: int = 0

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        if self.M.shape != (self.d_x, self.d_x * self.d_u):
            raise DimensionMismatch(
                f"M has shape {self.M.shape}, expected {(self.d_x, self.d_x * self.d_u)}")

    @property
    def d_x(self) -> int:
        return self.phi_basis.dim

    @property
    def d_u(self) -> int:
        return self.psi_basis.dim

    def tensor(self) -> np.ndarray:
        """The 3-D array T with T[i, j, z] = M[i, z * d_x + j]."""
        return self.M.reshape(self.d_x, self.d_u, self.d_x).transpose(0, 2, 1)

    @classmethod
    def from_tensor(cls, T, phi_basis, psi_basis, **kw) -> "KoopmanTensor":
        T = np.asarray(T, dtype=float)
        M = T.transpose(0, 2, 1).reshape(T.shape[0], -1)
        return cls(M, phi_basis, psi_basis, **kw)

    def k_u(self, u) -> np.ndarray:
        """K^u for one action (d_x, d_x) or a batch of actions (n, d_x, d_x)."""
        return k_u(self, u)

    def predict_phi(self, x, u) -> np.ndarray:
        return predict_phi(self, x, u)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "koopman_tensor",
            "d_x": self.d_x,
            "d_u": self.d_u,
            "phi_basis": self.phi_basis.to_dict(),
            "psi_basis": self.psi_basis.to_dict(),
            "M": self.M.ravel().tolist(),
            "ridge": self.ridge,
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KoopmanTensor":
        try:
            if d.get("kind") != "koopman_tensor":
                raise ModelFormat(f"not a Koopman tensor file (kind={d.get('kind')!r})")
            if int(d["format_version"]) > FORMAT_VERSION:
                raise ModelFormat(f"unsupported format_version {d['format_version']}")
            phi = MonomialBasis.from_dict(d["phi_basis"])
            psi = MonomialBasis.from_dict(d["psi_basis"])
            d_x, d_u = int(d["d_x"]), int(d["d_u"])
            if (d_x, d_u) != (phi.dim, psi.dim):
                raise ModelFormat("basis dimensions disagree with d_x/d_u")
            M = np.asarray(d["M"], dtype=float).reshape(d_x, d_x * d_u)
            return cls(M, phi, psi, float(d.get("ridge", 0.0)), int(d.get("n_samples", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ModelFormat):
                raise
            raise ModelFormat(f"malformed tensor file: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "KoopmanTensor":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ModelFormat(f"{path}: {exc}") from exc
        return cls.from_dict(d)


def _stack(dataset):
    """Accept a list of (x, u, x_next) tuples or a tuple of three arrays."""
    if isinstance(dataset, tuple) and len(dataset) == 3 and np.ndim(dataset[0]) == 2:
        X, U, Y = dataset
    else:
        if len(dataset) == 0:
            raise ValueError("empty dataset")
        X, U, Y = (np.array([np.atleast_1d(s[k]) for s in dataset], dtype=float)
                   for k in range(3))
    X, U, Y = (np.asarray(a, dtype=float) for a in (X, U, Y))
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    return X, U, Y


def fit_tensor(dataset, phi_basis: MonomialBasis, psi_basis: MonomialBasis,
               ridge: float = DEFAULT_RIDGE) -> KoopmanTensor:
    """Least-squares Koopman tensor from transitions (x, u, x_next)."""
    X, U, Y = _stack(dataset)
    features = joint_feature(phi_basis, psi_basis, X, U)
    targets = phi_basis.eval(Y)
    W = lstsq(features, targets, ridge)
    return KoopmanTensor(W.T, phi_basis, psi_basis, ridge, X.shape[0])


def k_u(tensor: KoopmanTensor, u) -> np.ndarray:
    psi = tensor.psi_basis.eval(u)
    M3 = tensor.M.reshape(tensor.d_x, tensor.d_u, tensor.d_x)
    if psi.ndim == 1:
        return np.einsum("izj,z->ij", M3, psi)
    return np.einsum("izj,az->aij", M3, psi)


def predict_phi(tensor: KoopmanTensor, x, u) -> np.ndarray:
    """Predicted next-state features K^u phi(x) (single point or batch)."""
    return joint_feature(tensor.phi_basis, tensor.psi_basis, x, u) @ tensor.M.T


def predict_state(tensor: KoopmanTensor, x, u) -> np.ndarray:
    """Raw next state read off the degree-1 features of the prediction."""
    phi_next = predict_phi(tensor, x, u)
    n = tensor.phi_basis.input_dim
    # degree-1 monomials sit right after the constant, in coordinate order
    return phi_next[..., 1:1 + n]


@dataclass
class RktdState:
    z: np.ndarray
    inv_v: np.ndarray
    delta: float
    samples_seen: int = 0

    @classmethod
    def initial(cls, phi_basis: MonomialBasis, psi_basis: MonomialBasis, delta: float = 1.0):
        d_x = phi_basis.dim
        D = d_x * psi_basis.dim
        return cls(np.zeros((d_x, D)), np.eye(D) / delta, float(delta), 0)

    @property
    def M(self) -> np.ndarray:
        return self.z @ self.inv_v


def rktd_update(state: RktdState, x, u, x_next, phi_basis: MonomialBasis,
                psi_basis: MonomialBasis) -> RktdState:
    """One recursive least-squares step on the sample (x, u, x_next).

    After n samples the estimate equals the batch ridge fit with ``ridge = delta``.
    """
    v = joint_feature(phi_basis, psi_basis, np.atleast_1d(x), np.atleast_1d(u))
    target = phi_basis.eval(np.atleast_1d(x_next))
    return RktdState(state.z + np.outer(target, v), sherman_morrison_update(state.inv_v, v),
                     state.delta, state.samples_seen + 1)


def rktd_tensor(state: RktdState, phi_basis, psi_basis) -> KoopmanTensor:
    return KoopmanTensor(state.M, phi_basis, psi_basis, state.delta, state.samples_seen)


def generator_estimates(X, Y, dt):
    """Finite-difference drift and diffusion estimates per sample.

    Returns ``mu`` (N, n) = dx/dt and ``a`` (N, n, n) = dx dx^T / dt.
    """
    X = np.asarray(X, dtype=float)
    dX = np.asarray(Y, dtype=float) - X
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (X.shape[0],))
    mu = dX / dt[:, None]
    a = dX[:, :, None] * dX[:, None, :] / dt[:, None, None]
    return mu, a


def fit_generator(dataset, phi_basis: MonomialBasis, psi_basis: MonomialBasis,
                  ridge: float = DEFAULT_RIDGE) -> KoopmanTensor:
    """Flattened generator tensor L from samples (x, u, x_next, dt).

    Regression targets are ``mu . grad phi(x) + 1/2 a : hess phi(x)`` with the
    finite-difference estimates of :func:`generator_estimates`.
    """
    if isinstance(dataset, tuple) and len(dataset) == 4 and np.ndim(dataset[0]) == 2:
        X, U, Y, dts = (np.asarray(a, dtype=float) for a in dataset)
    else:
        if len(dataset) == 0:
            raise ValueError("empty dataset")
        X, U, Y = (np.array([np.atleast_1d(s[k]) for s in dataset], dtype=float)
                   for k in range(3))
        dts = np.array([float(s[3]) for s in dataset])
    if np.any(np.broadcast_to(dts, (X.shape[0],)) <= 0):
        raise ValueError("dt must be positive")
    mu, a = generator_estimates(X, Y, dts)
    targets = np.empty((X.shape[0], phi_basis.dim))
    for i in range(X.shape[0]):
        grad = phi_basis.gradient(X[i])
        hess = phi_basis.hessian(X[i])
        targets[i] = grad @ mu[i] + 0.5 * np.einsum("kjl,jl->k", hess, a[i])
    features = joint_feature(phi_basis, psi_basis, X, U)
    W = lstsq(features, targets, ridge)
    return KoopmanTensor(W.T, phi_basis, psi_basis, ridge, X.shape[0])


def policy_consistency(tensor: KoopmanTensor, policy, env: envs.EnvironmentSpec, rng,
                       n_points: int, dataset=None, ridge: float | None = None) -> float:
    """Largest gap between K^{pi(x)} phi(x) and K^pi phi(x) over sampled states.

    K^pi is an autonomous operator fit (constant control dictionary) on data
    generated by the deterministic ``policy(x) -> u``. When ``dataset`` is
    given, its states and actions are used instead of fresh samples.
    """
    if dataset is None:
        X = envs.reset(env, rng, n_points)
        U = np.array([np.atleast_1d(policy(x)) for x in X])
        Y = envs.step(env, X, U, rng)
    else:
        X, U, Y = _stack(dataset)
    const = MonomialBasis(tensor.psi_basis.input_dim, 0)
    k_pi = fit_tensor((X, U, Y), tensor.phi_basis, const,
                      tensor.ridge if ridge is None else ridge)
    pred_u = predict_phi(tensor, X, U)
    pred_pi = tensor.phi_basis.eval(X) @ k_pi.M.T
    return float(np.max(np.abs(pred_u - pred_pi)))
