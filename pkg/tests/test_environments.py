import numpy as np
import pytest
from scipy.integrate import solve_ivp
from hypothesis import given, settings, strategies as st

from karl import environments as E
from karl.errors import DimensionMismatch, NonFiniteState


def test_drift_equilibria():
    assert np.allclose(E.drift(E.make_env(E.FLUID_FLOW), np.zeros(3), [0.0]), 0.0)
    assert np.allclose(E.drift(E.make_env(E.DOUBLE_WELL), [1.0, 0.0], [0.0]), 0.0)
    lor = E.make_env(E.LORENZ)
    xe = np.array([np.sqrt(72.0), np.sqrt(72.0), 27.0])
    assert np.allclose(lor.x_e, xe)
    assert np.allclose(E.drift(lor, xe, [0.0]), 0.0, atol=1e-12)


def test_control_enters_where_expected():
    for kind, idx in [(E.FLUID_FLOW, [1]), (E.LORENZ, [0]), (E.DOUBLE_WELL, [0, 1])]:
        env = E.make_env(kind)
        x = np.full(env.state_dim, 0.3)
        diff = E.drift(env, x, [1.0]) - E.drift(env, x, [0.0])
        expected = np.zeros(env.state_dim)
        expected[idx] = 1.0
        assert np.allclose(diff, expected)


def test_drift_dimension_check():
    with pytest.raises(DimensionMismatch):
        E.drift(E.make_env(E.LORENZ), [1.0, 2.0], [0.0])


def test_diffusion_matrix():
    dw = E.make_env(E.DOUBLE_WELL)
    assert np.allclose(E.diffusion(dw, [0.0, 5.0]), [[0.7, 0.0], [0.0, 0.5]])
    assert np.allclose(E.diffusion(dw, [2.0, -1.0]), [[0.7, 2.0], [0.0, 0.5]])
    assert not np.any(E.diffusion(E.make_env(E.LORENZ), np.ones(3)))


def test_linear_step_identity_map():
    env = E.make_env(E.LINEAR_SYSTEM, A=np.eye(2), B=np.zeros((2, 1)))
    x = np.array([0.3, -0.7])
    assert np.array_equal(E.step(env, x, [1.0]), x)


def test_double_well_zero_noise_equilibrium():
    env = E.make_env(E.DOUBLE_WELL)
    assert np.allclose(E.step(env, [1.0, 0.0], [0.0], noise=np.zeros(2)), [1.0, 0.0])


def test_euler_maruyama_zero_noise_is_explicit_euler(rng):
    env = E.make_env(E.DOUBLE_WELL)
    for _ in range(20):
        x, u = rng.uniform(-2, 2, 2), rng.uniform(-3, 3, 1)
        euler = x + env.dt * E.drift(env, x, u)
        assert np.array_equal(E.step(env, x, u, noise=np.zeros(2)), euler)


def test_euler_maruyama_noise_scaling():
    env = E.make_env(E.DOUBLE_WELL)
    x, xi = np.array([0.5, 0.2]), np.array([1.0, -2.0])
    expected = x + env.dt * E.drift(env, x, [0.0]) + np.sqrt(env.dt) * E.diffusion(env, x) @ xi
    assert np.allclose(E.step(env, x, [0.0], noise=xi), expected, rtol=1e-14)


@pytest.mark.xfail(strict=True, reason="dt=1e-5 Euler is itself ~1.3e-5 off the true flow; "
                   "RK4's own local error here is ~2e-6")
def test_lorenz_rk4_matches_fine_euler_oracle():
    env = E.make_env(E.LORENZ)
    x = np.ones(3)
    y = x.copy()
    for _ in range(1000):
        y = y + 1e-5 * E.drift(env, y, [0.0])
    assert np.max(np.abs(E.step(env, x, [0.0]) - y)) < 1e-6


def test_lorenz_rk4_step_against_high_accuracy_integrator():
    env = E.make_env(E.LORENZ)
    x = np.ones(3)
    ref = solve_ivp(lambda t, y: E.drift(env, y, [0.0]), (0.0, env.dt), x, method="DOP853",
                    rtol=1e-13, atol=1e-13).y[:, -1]
    # classical RK4 local truncation at dt=0.01 on this state is a few 1e-6
    assert np.max(np.abs(E.step(env, x, [0.0]) - ref)) < 5e-6


def test_lorenz_rk4_is_classical_four_stage():
    env = E.make_env(E.LORENZ)
    x, h = np.array([3.0, -2.0, 17.0]), env.dt
    f = lambda z: E.drift(env, z, [0.5])
    k1 = f(x)
    k2 = f(x + h / 2 * k1)
    k3 = f(x + h / 2 * k2)
    k4 = f(x + h * k3)
    assert np.allclose(E.step(env, x, [0.5]), x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), rtol=1e-14)


def test_rk4_convergence_order():
    x0 = np.ones(3)
    horizon = 0.1
    base = E.make_env(E.LORENZ)
    ref = solve_ivp(lambda t, y: E.drift(base, y, [0.0]), (0.0, horizon), x0, method="DOP853",
                    rtol=1e-13, atol=1e-13).y[:, -1]

    def err(dt):
        env = E.make_env(E.LORENZ, dt=dt)
        x = x0.copy()
        for _ in range(int(round(horizon / dt))):
            x = E.step(env, x, [0.0])
        return np.max(np.abs(x - ref))

    ratio = err(0.02) / err(0.01)
    assert ratio >= 12.0


def test_lorenz_stays_bounded():
    env = E.make_env(E.LORENZ)
    x = np.ones(3)
    peak = 0.0
    for _ in range(10_000):
        x = E.step(env, x, [0.0])
        peak = max(peak, np.max(np.abs(x)))
    assert peak < 100.0


def test_cost_examples():
    lin = E.make_env(E.LINEAR_SYSTEM)
    assert E.cost(lin, [0.0, 0.0], [0.0]) == 0.0
    assert E.cost(lin, [1.0, 1.0], [2.0]) == 6.0
    lor = E.make_env(E.LORENZ)
    assert E.cost(lor, lor.x_e, [3.0]) == pytest.approx(0.009)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(-100, 100))
def test_cost_nonnegative(x, u):
    for kind in (E.FLUID_FLOW, E.LORENZ):
        assert E.cost(E.make_env(kind), x, [u]) >= 0.0


def test_reset_box_and_determinism():
    env = E.make_env(E.LORENZ)
    X = E.reset(env, np.random.default_rng(0), 10_000)
    assert np.all(X >= env.init_low) and np.all(X <= env.init_high)
    a = E.reset(env, np.random.default_rng(5), 10)
    b = E.reset(env, np.random.default_rng(5), 10)
    assert np.array_equal(a, b)
    point = env.replace(init_low=[1.0, 2.0, 3.0], init_high=[1.0, 2.0, 3.0])
    assert np.array_equal(E.reset(point, np.random.default_rng(1)), [1.0, 2.0, 3.0])


def test_spec_validation():
    with pytest.raises(ValueError):
        E.make_env("Pendulum")
    with pytest.raises(ValueError):
        E.make_env(E.LORENZ, dt=0.0)
    with pytest.raises(ValueError):
        E.make_env(E.LORENZ, episode_len=0)
    with pytest.raises(ValueError):
        E.make_env(E.LORENZ).replace(Q=np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_rollout_zero_cost():
    env = E.make_env(E.FLUID_FLOW, Q_scale=0.0, R_scale=0.0)
    results = E.rollout(env, lambda x, r: r.uniform(-1, 1, 1), np.random.default_rng(0), 3)
    assert [ret for ret, _ in results] == [0.0, 0.0, 0.0]


def test_rollout_geometric_return():
    env = E.make_env(E.LINEAR_SYSTEM, A=0.5 * np.eye(2), episode_len=30)
    [(ret, transitions)] = E.rollout(env, lambda x, r: np.zeros(1), np.random.default_rng(3), 1)
    x0 = transitions[0].x
    expected = -sum(float(x0 @ x0) * 0.25 ** k for k in range(30))
    assert ret == pytest.approx(expected, rel=1e-12)


def test_rollout_transitions_and_determinism():
    env = E.make_env(E.DOUBLE_WELL, episode_len=50)
    pol = lambda x, r: r.uniform(-1, 1, 1)
    a = E.rollout(env, pol, np.random.default_rng(9), 2)
    b = E.rollout(env, pol, np.random.default_rng(9), 2)
    assert [r for r, _ in a] == [r for r, _ in b]
    trans = a[0][1]
    assert len(trans) == 50 and trans[-1].done and not trans[0].done
    for t in trans:
        assert t.reward == -E.cost(env, t.x, t.u)


def test_blow_up_charges_max_cost():
    # x_{k+1} = 1e200 x_k overflows on the second step
    env = E.make_env(E.LINEAR_SYSTEM, A=1e200 * np.eye(2), episode_len=10)
    env = env.replace(init_low=[1.0, 1.0], init_high=[1.0, 1.0])
    [(ret, _)] = E.rollout(env, lambda x, r: np.zeros(1), np.random.default_rng(0), 1)
    assert np.isfinite(ret)
    # step 1 costs 2; the second state overflows, so all 9 remaining steps are charged 2
    assert ret == pytest.approx(-2.0 * 10)


def test_batched_returns_match_sequential_for_deterministic_policy():
    env = E.make_env(E.FLUID_FLOW, episode_len=40)
    K = np.array([[0.5, 1.0, 0.0]])
    batched = E.episode_returns(env, lambda X, r: -X @ K.T, np.random.default_rng(4), 5)
    rng = np.random.default_rng(4)
    X0 = E.reset(env, rng, 5)
    for k in range(5):
        x, total = X0[k], 0.0
        for _ in range(40):
            u = E.clip_action(env, -K @ x)
            total -= E.cost(env, x, u)
            x = E.step(env, x, u)
        assert batched[k] == pytest.approx(total, rel=1e-12)


@pytest.mark.filterwarnings("ignore:overflow encountered:RuntimeWarning")
def test_step_raises_on_non_finite():
    env = E.make_env(E.LINEAR_SYSTEM, A=1e308 * np.eye(2))
    with pytest.raises(NonFiniteState):
        E.step(env, [10.0, 10.0], [0.0])
