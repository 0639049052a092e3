import numpy as np
import pytest

from karl import environments as E
from karl import lqr
from karl.errors import NotEquilibrium


def test_linearize_linear_system_exact():
    env = E.make_env(E.LINEAR_SYSTEM)
    A, B = lqr.linearize(env)
    assert np.array_equal(A, env.A) and np.array_equal(B, env.B)


def test_linearize_double_well_and_lorenz():
    A, B = lqr.linearize(E.make_env(E.DOUBLE_WELL))
    assert np.allclose(A, [[4.0, 0.0], [0.0, -2.0]]) and np.allclose(B, [[1.0], [1.0]])
    env = E.make_env(E.LORENZ)
    s, r, b = 10.0, 28.0, 8.0 / 3.0
    x1, x2, x3 = env.x_e
    A, B = lqr.linearize(env)
    assert np.allclose(A, [[-s, s, 0.0], [r - x3, -1.0, -x1], [x2, x1, -b]])
    assert np.allclose(B, [[1.0], [0.0], [0.0]])


def test_linearize_matches_finite_differences():
    for kind in (E.FLUID_FLOW, E.LORENZ, E.DOUBLE_WELL):
        env = E.make_env(kind)
        A, B = lqr.linearize(env)
        h = 1e-6
        for j in range(env.state_dim):
            e = np.zeros(env.state_dim)
            e[j] = h
            col = (E.drift(env, env.x_e + e, [0.0]) - E.drift(env, env.x_e - e, [0.0])) / (2 * h)
            assert np.allclose(A[:, j], col, atol=1e-6)


def test_linearize_rejects_non_equilibrium():
    with pytest.raises(NotEquilibrium):
        lqr.linearize(E.make_env(E.LORENZ), x_e=np.ones(3))


def test_dare_scalar_examples():
    sol = lqr.solve_dare(np.zeros((1, 1)), np.eye(1), np.eye(1), np.eye(1))
    assert sol.P[0, 0] == pytest.approx(1.0) and sol.K[0, 0] == pytest.approx(0.0)
    sol = lqr.solve_dare(np.eye(1), np.eye(1), np.eye(1), np.eye(1))
    assert abs(sol.P[0, 0] - (1 + np.sqrt(5)) / 2) < 1e-8
    assert sol.K[0, 0] == pytest.approx((np.sqrt(5) - 1) / 2, abs=1e-8)


def test_care_scalar_examples():
    sol = lqr.solve_care(-np.eye(1), np.zeros((1, 1)), np.eye(1), np.eye(1))
    assert sol.P[0, 0] == pytest.approx(0.5, abs=1e-8)
    sol = lqr.solve_care(np.zeros((1, 1)), np.eye(1), np.eye(1), np.eye(1))
    assert sol.P[0, 0] == pytest.approx(1.0, abs=1e-8) and sol.K[0, 0] == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("kind", E.KINDS)
def test_environment_riccati_residuals_and_stability(kind):
    env = E.make_env(kind)
    A, B = lqr.linearize(env)
    sol = lqr.solve_env(env)
    assert np.allclose(sol.P, sol.P.T, atol=1e-10)
    assert np.min(np.linalg.eigvalsh(sol.P)) > -1e-10
    if sol.mode == "discrete":
        assert np.max(np.abs(lqr.dare_residual(A, B, env.Q, env.R, sol.P))) < 1e-8
        assert lqr.spectral_radius(A - B @ sol.K) < 1.0
    else:
        assert np.max(np.abs(lqr.care_residual(A, B, env.Q, env.R, sol.P))) < 1e-6
        S = lqr.lyapunov_certificate(A - B @ sol.K)
        assert np.min(np.linalg.eigvalsh(S)) > 0
    assert lqr.is_stabilizing(A, B, sol)


def test_spectral_radius_against_eigenvalues(rng):
    M = rng.normal(size=(4, 4))
    assert lqr.spectral_radius(M) == pytest.approx(np.max(np.abs(np.linalg.eigvals(M))), rel=1e-3)


def test_lqr_policy_examples():
    sol = lqr.solve_dare(np.eye(1), np.eye(1), np.eye(1), np.eye(1))
    assert lqr.lqr_policy(sol, [2.0], [2.0])[0] == 0.0
    assert lqr.lqr_policy(sol, [1.0], [0.0])[0] == pytest.approx(-0.618034, abs=1e-6)
    assert lqr.lqr_policy(sol, [1e6], [0.0], ([-3.0], [3.0]))[0] == -3.0


def test_lqr_beats_zero_policy_on_linear_system():
    env = E.make_env(E.LINEAR_SYSTEM)
    ctrl = lqr.LqrController(env)
    zero = lambda X, r: np.zeros((X.shape[0], 1))
    r_lqr = E.episode_returns(env, ctrl, np.random.default_rng(0), 50).mean()
    r_zero = E.episode_returns(env, zero, np.random.default_rng(0), 50).mean()
    assert r_lqr > r_zero


def test_default_bounds_cover_lqr_actions():
    for kind in E.KINDS:
        env = E.make_env(kind)
        lo, hi = lqr.lqr_action_range(env)
        assert np.all(env.action_high >= np.maximum(np.abs(lo), np.abs(hi)) - 1e-9)


def test_model_round_trip(tmp_path):
    env = E.make_env(E.DOUBLE_WELL)
    sol = lqr.solve_env(env)
    lqr.save_model(tmp_path / "m.json", env, sol)
    env2, sol2 = lqr.load_model(tmp_path / "m.json")
    assert np.array_equal(sol2.K, sol.K) and env2.kind == env.kind
