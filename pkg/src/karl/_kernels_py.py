"""Pure numpy implementations of the hot per-step kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them one-to-one.
All functions take 2-D sample-major arrays.
"""
import numpy as np

FLUID_FLOW = 1
LORENZ = 2
DOUBLE_WELL = 3


def monomials(exponents, Z):
    """Evaluate monomials ``prod_j Z[:, j] ** exponents[k, j]`` -> (N, K)."""
    exponents = np.asarray(exponents, dtype=np.int64)
    Z = np.asarray(Z, dtype=float)
    n_samples, n = Z.shape
    max_deg = int(exponents.max()) if exponents.size else 0
    # powers[d, i, j] = Z[i, j] ** d
    powers = np.empty((max_deg + 1, n_samples, n))
    powers[0] = 1.0
    for d in range(1, max_deg + 1):
        powers[d] = powers[d - 1] * Z
    out = np.ones((n_samples, exponents.shape[0]))
    for j in range(n):
        out *= powers[exponents[:, j], :, j].T
    return out


def drift(code, params, X, U):
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    x0, x1 = X[:, 0], X[:, 1]
    u = U[:, 0]
    if code == FLUID_FLOW:
        mu, omega, a, lam = params[0], params[1], params[2], params[3]
        x2 = X[:, 2]
        return np.stack([
            mu * x0 - omega * x1 + a * x0 * x2,
            omega * x0 + mu * x1 + a * x1 * x2 + u,
            -lam * (x2 - x0 * x0 - x1 * x1),
        ], axis=1)
    if code == LORENZ:
        sigma, rho, beta = params[0], params[1], params[2]
        x2 = X[:, 2]
        return np.stack([
            sigma * (x1 - x0) + u,
            (rho - x2) * x0 - x1,
            x0 * x1 - beta * x2,
        ], axis=1)
    if code == DOUBLE_WELL:
        return np.stack([4.0 * x0 - 4.0 * x0 ** 3 + u, -2.0 * x1 + u], axis=1)
    raise ValueError(f"no continuous drift for system code {code}")


def rk4(code, params, X, U, dt):
    k1 = drift(code, params, X, U)
    k2 = drift(code, params, X + 0.5 * dt * k1, U)
    k3 = drift(code, params, X + 0.5 * dt * k2, U)
    k4 = drift(code, params, X + dt * k3, U)
    return X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def euler_maruyama(code, params, X, U, dt, noise):
    """One Euler-Maruyama step; ``noise`` holds standard normal draws (N, 2)."""
    X = np.asarray(X, dtype=float)
    f = drift(code, params, X, U)
    sq = np.sqrt(dt)
    out = X + f * dt
    if code == DOUBLE_WELL:
        out[:, 0] += sq * (0.7 * noise[:, 0] + X[:, 0] * noise[:, 1])
        out[:, 1] += sq * 0.5 * noise[:, 1]
    return out


def riccati_flow(A, S, Q, step, tol, max_iters):
    """RK4 on -dP/dt = A^T P + P A - P S P + Q from P = Q.

    Returns ``(P, iterations, status)`` with status 0 converged, 1 out of
    iterations, 2 diverged.
    """
    A, S, Q = (np.ascontiguousarray(M, dtype=float) for M in (A, S, Q))

    def rhs(P):
        PA = P @ A
        return PA.T + PA - P @ S @ P + Q

    P = Q.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        return _flow(rhs, P, step, tol, max_iters)


def _flow(rhs, P, step, tol, max_iters):
    for it in range(1, max_iters + 1):
        k1 = rhs(P)
        if np.abs(k1).max() < tol * max(1.0, np.abs(P).max()):
            return 0.5 * (P + P.T), it, 0
        k2 = rhs(P + (0.5 * step) * k1)
        k3 = rhs(P + (0.5 * step) * k2)
        k4 = rhs(P + step * k3)
        P = P + (step / 6.0) * (k1 + 2 * (k2 + k3) + k4)
        if it % 64 == 0:
            P = 0.5 * (P + P.T)
            if not np.isfinite(P).all() or np.abs(P).max() > 1e12:
                return P, it, 2
    return P, max_iters, 1
