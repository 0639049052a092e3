"""Monomial dictionaries for states and controls."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import kernels
from .errors import DimensionMismatch


def basis_dim(n: int, p: int) -> int:
    """Number of monomials in ``n`` variables of total degree at most ``p``."""
    if n < 1 or p < 0:
        raise ValueError("need n >= 1 and p >= 0")
    return comb(n + p, n)


def monomial_exponents(n: int, p: int) -> np.ndarray:
    """Multi-indices ordered by total degree, then lexicographically (descending powers
    of the earlier variables first), constant term first.

    For ``n=2, p=2`` this gives 1, x0, x1, x0^2, x0 x1, x1^2.
    """
    rows = []
    for deg in range(p + 1):
        block = [e for e in itertools.product(range(deg, -1, -1), repeat=n) if sum(e) == deg]
        block.sort(reverse=True)
        rows.extend(block)
    return np.array(rows, dtype=np.int64).reshape(-1, n)


@dataclass(frozen=True)
class MonomialBasis:
    input_dim: int
    max_degree: int
    exponents: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        e = monomial_exponents(self.input_dim, self.max_degree)
        e.setflags(write=False)
        object.__setattr__(self, "exponents", e)

    @property
    def dim(self) -> int:
        return self.exponents.shape[0]

    def __call__(self, z) -> np.ndarray:
        return self.eval(z)

    def eval(self, z) -> np.ndarray:
        """Features of one point (1-D input) or of a batch (2-D, one row per sample)."""
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        Z = z[None, :] if single else z
        if Z.ndim != 2 or Z.shape[1] != self.input_dim:
            raise DimensionMismatch(f"expected inputs of dim {self.input_dim}, got shape {z.shape}")
        out = kernels.monomials(self.exponents, Z)
        return out[0] if single else out

    def gradient(self, z) -> np.ndarray:
        """Jacobian of the feature vector at ``z``; shape (dim, input_dim)."""
        z = np.asarray(z, dtype=float)
        e = self.exponents
        out = np.zeros((self.dim, self.input_dim))
        for j in range(self.input_dim):
            lowered = e.copy()
            lowered[:, j] = np.maximum(lowered[:, j] - 1, 0)
            vals = np.prod(z[None, :] ** lowered, axis=1)
            out[:, j] = e[:, j] * vals
        return out

    def hessian(self, z) -> np.ndarray:
        """Per-feature Hessians at ``z``; shape (dim, input_dim, input_dim)."""
        z = np.asarray(z, dtype=float)
        e = self.exponents
        n = self.input_dim
        out = np.zeros((self.dim, n, n))
        for j in range(n):
            for k in range(n):
                lowered = e.copy()
                if j == k:
                    coef = e[:, j] * (e[:, j] - 1)
                    lowered[:, j] = np.maximum(lowered[:, j] - 2, 0)
                else:
                    coef = e[:, j] * e[:, k]
                    lowered[:, j] = np.maximum(lowered[:, j] - 1, 0)
                    lowered[:, k] = np.maximum(lowered[:, k] - 1, 0)
                out[:, j, k] = coef * np.prod(z[None, :] ** lowered, axis=1)
        return out

    def term_names(self, names=None) -> list[str]:
        """Human-readable monomials, e.g. ``["1", "x", "y", "x^2", "xy", "y^2"]``."""
        if names is None:
            names = ["x", "y", "z"] if self.input_dim <= 3 else [f"x{i}" for i in range(self.input_dim)]
        terms = []
        for row in self.exponents:
            parts = []
            for name, power in zip(names, row):
                if power == 1:
                    parts.append(name)
                elif power > 1:
                    parts.append(f"{name}^{power}")
            terms.append("".join(parts) if parts else "1")
        return terms

    def to_dict(self) -> dict:
        return {"dim": self.input_dim, "degree": self.max_degree,
                "exponents": self.exponents.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MonomialBasis":
        basis = cls(int(d["dim"]), int(d["degree"]))
        if "exponents" in d and np.asarray(d["exponents"]).tolist() != basis.exponents.tolist():
            raise ValueError("stored exponent ordering does not match this library's ordering")
        return basis


def joint_feature(phi_b: MonomialBasis, psi_b: MonomialBasis, x, u) -> np.ndarray:
    """``psi(u) kron phi(x)``: entry ``z * d_x + i`` is ``psi(u)[z] * phi(x)[i]``.

    Accepts single points or batches (rows are samples).
    """
    phi = phi_b.eval(x)
    psi = psi_b.eval(u)
    if phi.ndim != psi.ndim:
        raise DimensionMismatch("x and u must both be single points or both batches")
    if phi.ndim == 1:
        return (psi[:, None] * phi[None, :]).ravel()
    if phi.shape[0] != psi.shape[0]:
        raise DimensionMismatch("x and u batches differ in length")
    return (psi[:, :, None] * phi[:, None, :]).reshape(phi.shape[0], -1)
