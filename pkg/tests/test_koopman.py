import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from karl import environments as E
from karl import koopman as K
from karl.dictionaries import MonomialBasis, joint_feature
from karl.errors import DimensionMismatch, ModelFormat, SingularSystem
from karl.harness.pipeline import collect_dataset

B1 = MonomialBasis(1, 1)


def scalar_data(n, rng):
    X = rng.uniform(-2, 2, (n, 1))
    U = rng.uniform(-1, 1, (n, 1))
    return X, U, 0.9 * X + 0.1 * U


def test_scalar_system_exact_fit(rng):
    data = scalar_data(500, rng)
    t = K.fit_tensor(data, B1, B1, ridge=0.0)
    X, U, Y = scalar_data(100, rng)
    assert np.max(np.abs(t.predict_phi(X, U) - B1.eval(Y))) < 1e-8
    assert np.allclose(t.k_u([0.0]), [[1.0, 0.0], [0.0, 0.9]], atol=1e-10)


def test_linear_system_exact_representability(rng):
    env = E.make_env(E.LINEAR_SYSTEM)
    phi, psi = MonomialBasis(2, 1), MonomialBasis(1, 1)
    X = rng.uniform(-3, 3, (500, 2))
    U = rng.uniform(-2, 2, (500, 1))
    t = K.fit_tensor((X, U, E.step(env, X, U)), phi, psi, ridge=0.0)
    Xt, Ut = rng.uniform(-3, 3, (200, 2)), rng.uniform(-2, 2, (200, 1))
    assert np.max(np.abs(t.predict_phi(Xt, Ut) - phi.eval(E.step(env, Xt, Ut)))) < 1e-8
    assert np.allclose(K.predict_state(t, Xt, Ut), E.step(env, Xt, Ut), atol=1e-8)


def test_planted_tensor_recovery(rng):
    phi, psi = MonomialBasis(2, 2), MonomialBasis(1, 2)
    M_star = rng.normal(size=(phi.dim, phi.dim * psi.dim))
    X, U = rng.uniform(-1, 1, (400, 2)), rng.uniform(-1, 1, (400, 1))
    feats = joint_feature(phi, psi, X, U)
    targets = feats @ M_star.T
    # regress directly on the planted targets through the same solver
    from karl.numerics import lstsq
    W = lstsq(feats, targets, 0.0)
    assert np.max(np.abs(W.T - M_star)) < 1e-8


def test_repeated_sample_needs_ridge():
    data = [(np.array([1.0]), np.array([0.5]), np.array([2.0]))] * 5
    t = K.fit_tensor(data, B1, B1, ridge=1e-3)
    assert np.all(np.isfinite(t.M))
    with pytest.raises(SingularSystem):
        K.fit_tensor(data, B1, B1, ridge=0.0)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        K.fit_tensor([], B1, B1)


def test_k_u_index_identity(rng):
    phi, psi = MonomialBasis(3, 2), MonomialBasis(2, 2)
    t = K.KoopmanTensor(rng.normal(size=(phi.dim, phi.dim * psi.dim)), phi, psi)
    for _ in range(100):
        x, u = rng.normal(size=3), rng.normal(size=2)
        direct = t.M @ np.kron(psi.eval(u), phi.eval(x))
        assert np.max(np.abs(t.k_u(u) @ phi.eval(x) - direct)) < 1e-12
    X, U = rng.normal(size=(7, 3)), rng.normal(size=(7, 2))
    batch = t.k_u(U)
    assert batch.shape == (7, phi.dim, phi.dim)
    assert np.allclose(batch[3], t.k_u(U[3]))


def test_k_u_with_constant_control_dictionary(rng):
    phi, psi = MonomialBasis(2, 2), MonomialBasis(1, 0)
    t = K.KoopmanTensor(rng.normal(size=(phi.dim, phi.dim)), phi, psi)
    assert np.array_equal(t.k_u([0.3]), t.k_u([-7.0]))
    assert np.array_equal(t.k_u([1.0]), t.M)


def test_tensor_index_map_and_round_trip(rng):
    phi, psi = MonomialBasis(2, 1), MonomialBasis(1, 2)
    t = K.KoopmanTensor(rng.normal(size=(phi.dim, phi.dim * psi.dim)), phi, psi)
    T = t.tensor()
    for i in range(phi.dim):
        for j in range(phi.dim):
            for z in range(psi.dim):
                assert T[i, j, z] == t.M[i, z * phi.dim + j]
    assert np.array_equal(K.KoopmanTensor.from_tensor(T, phi, psi).M, t.M)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_k_u_linear_in_psi(seed):
    rng = np.random.default_rng(seed)
    phi, psi = MonomialBasis(2, 1), MonomialBasis(1, 1)
    t = K.KoopmanTensor(rng.normal(size=(phi.dim, phi.dim * psi.dim)), phi, psi)
    T = t.tensor()
    u = rng.normal(size=1)
    assert np.allclose(t.k_u(u), T @ psi.eval(u), rtol=1e-13, atol=1e-13)


def test_k_u_dimension_mismatch():
    t = K.KoopmanTensor(np.zeros((3, 6)), MonomialBasis(2, 1), MonomialBasis(1, 1))
    with pytest.raises(DimensionMismatch):
        t.k_u([1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        K.KoopmanTensor(np.zeros((3, 5)), MonomialBasis(2, 1), MonomialBasis(1, 1))


def test_rktd_single_sample_by_hand():
    # scalar reading phi(x)=x, psi=1, delta=1, sample (1 -> 2): z=2, inv_v=1/2, M=1
    from karl.numerics import sherman_morrison_update
    inv_v = sherman_morrison_update(np.eye(1), np.array([1.0]))
    assert (2.0 * inv_v)[0, 0] == pytest.approx(1.0)
    # with the constant feature, v=(1,1): (I + vv^T)^-1 v = v/3, so M = target v^T / 3
    phi, psi = MonomialBasis(1, 1), MonomialBasis(1, 0)
    s1 = K.rktd_update(K.RktdState.initial(phi, psi, 1.0), [1.0], [0.0], [2.0], phi, psi)
    assert np.allclose(s1.M, [[1 / 3, 1 / 3], [2 / 3, 2 / 3]], atol=1e-14)


def test_rktd_initial_state():
    st0 = K.RktdState.initial(B1, B1, delta=4.0)
    assert not st0.z.any() and not st0.M.any()
    assert np.allclose(st0.inv_v, np.eye(4) / 4.0)


@pytest.mark.parametrize("n", [1, 5, 200])
def test_rktd_equals_batch_ridge(n, rng):
    phi, psi = MonomialBasis(2, 2), MonomialBasis(1, 1)
    X, U, Y = rng.normal(size=(n, 2)), rng.normal(size=(n, 1)), rng.normal(size=(n, 2))
    state = K.RktdState.initial(phi, psi, delta=0.5)
    for i in range(n):
        state = K.rktd_update(state, X[i], U[i], Y[i], phi, psi)
    batch = K.fit_tensor((X, U, Y), phi, psi, ridge=0.5)
    assert np.linalg.norm(state.M - batch.M) < 1e-6
    assert np.allclose(state.inv_v, state.inv_v.T, atol=1e-10)
    assert K.rktd_tensor(state, phi, psi).n_samples == n


def test_generator_linear_flow():
    dt = 0.01
    X = np.linspace(-2, 2, 401)[:, None]
    Y = X * np.exp(-dt)
    U = np.zeros_like(X)
    const = MonomialBasis(1, 0)
    L = K.fit_generator((X, U, Y, np.full(len(X), dt)), B1, const, ridge=0.0)
    assert L.M[1, 1] == pytest.approx(-1.0, abs=2e-2)
    assert abs(L.M[1, 0]) < 1e-8
    assert np.max(np.abs(L.M[0])) < 1e-2
    mu, a = K.generator_estimates(X, Y, dt)
    assert np.max(np.abs(a)) < 10 * dt * np.max(np.abs(mu)) ** 2


def test_generator_rejects_non_positive_dt():
    X = np.ones((3, 1))
    with pytest.raises(ValueError):
        K.fit_generator((X, X, X, np.zeros(3)), B1, B1)


def test_constant_row_preserved(rng):
    env = E.make_env(E.FLUID_FLOW)
    ds = collect_dataset(env, 0, 3000)
    t = K.fit_tensor(ds.triples(), MonomialBasis(3, 2), MonomialBasis(1, 1), ridge=0.0)
    X, U = ds.X[:200], ds.U[:200]
    assert np.max(np.abs(t.predict_phi(X, U)[:, 0] - 1.0)) < 1e-6


def test_fluid_flow_holdout_error():
    env = E.make_env(E.FLUID_FLOW)
    ds = collect_dataset(env, 0, 30000)
    X, U, Y = ds.X, ds.U, ds.Y
    cut = int(0.9 * len(X))
    t = K.fit_tensor((X[:cut], U[:cut], Y[:cut]), MonomialBasis(3, 2), MonomialBasis(1, 2))
    pred = K.predict_state(t, X[cut:], U[cut:])
    rel = np.linalg.norm(pred - Y[cut:]) / np.linalg.norm(Y[cut:])
    assert rel < 0.05


def test_policy_consistency_constant_policy(rng):
    env = E.make_env(E.FLUID_FLOW)
    X = E.reset(env, rng, 500)
    U = np.full((500, 1), 0.4)
    Y = E.step(env, X, U)
    t = K.fit_tensor((X, U, Y), MonomialBasis(3, 2), MonomialBasis(1, 1))
    gap = K.policy_consistency(t, lambda x: np.array([0.4]), env, rng, 500, dataset=(X, U, Y))
    assert gap < 1e-6


def test_policy_consistency_linear_system_linear_policy(rng):
    env = E.make_env(E.LINEAR_SYSTEM)
    phi, psi = MonomialBasis(2, 1), MonomialBasis(1, 1)
    X, U = rng.uniform(-1, 1, (300, 2)), rng.uniform(-1, 1, (300, 1))
    t = K.fit_tensor((X, U, E.step(env, X, U)), phi, psi, ridge=0.0)
    pol = lambda x: np.array([0.3 * x[0] - 0.2 * x[1]])
    assert K.policy_consistency(t, pol, env, rng, 300, ridge=0.0) < 1e-6


def test_policy_consistency_undersampled_is_finite(rng):
    env = E.make_env(E.LORENZ)
    t = K.KoopmanTensor(rng.normal(size=(10, 20)), MonomialBasis(3, 2), MonomialBasis(1, 1))
    gap = K.policy_consistency(t, lambda x: rng.normal(size=1), env, rng, 5, ridge=1e-3)
    assert np.isfinite(gap)


def test_save_load_round_trip(tmp_path, rng):
    phi, psi = MonomialBasis(3, 2), MonomialBasis(1, 2)
    t = K.KoopmanTensor(rng.normal(size=(phi.dim, phi.dim * psi.dim)), phi, psi, 1e-6, 42)
    t.save(tmp_path / "t.json")
    t2 = K.KoopmanTensor.load(tmp_path / "t.json")
    assert np.array_equal(t2.M, t.M) and t2.n_samples == 42 and t2.ridge == 1e-6
    (tmp_path / "bad.json").write_text('{"kind": "something"}')
    with pytest.raises(ModelFormat):
        K.KoopmanTensor.load(tmp_path / "bad.json")
    (tmp_path / "junk.json").write_text("{not json")
    with pytest.raises(ModelFormat):
        K.KoopmanTensor.load(tmp_path / "junk.json")
