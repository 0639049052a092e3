import numpy as np
import pytest

from karl import neural as N
from karl.errors import DimensionMismatch

from gradcheck import numeric_grad, rel_error


def test_forward_examples():
    zero = N.Mlp([3, 4, 2], weights=[np.zeros((3, 4)), np.zeros((4, 2))],
                 biases=[np.zeros(4), np.zeros(2)])
    assert np.array_equal(zero([1.0, 2.0, 3.0]), [0.0, 0.0])
    ident = N.Mlp([3, 3], weights=[np.eye(3)], biases=[np.zeros(3)])
    assert np.array_equal(ident([1.0, -2.0, 3.0]), [1.0, -2.0, 3.0])
    gate = N.Mlp([1, 1, 1], weights=[np.ones((1, 1)), np.ones((1, 1))],
                 biases=[np.zeros(1), np.zeros(1)])
    _, (inputs, pre, _) = gate.forward([-1.0])
    assert gate([-1.0])[0] == 0.0 and inputs[1][0, 0] == 0.0


def test_forward_dimension_check(rng):
    with pytest.raises(DimensionMismatch):
        N.Mlp([3, 2], rng)([1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        N.Mlp([3, 2], weights=[np.zeros((2, 3))], biases=[np.zeros(2)])


def test_batch_matches_single(rng):
    net = N.Mlp([4, 8, 8, 2], rng)
    X = rng.normal(size=(5, 4))
    assert np.allclose(net(X)[2], net(X[2]))


def test_backward_trivial_cases(rng):
    net = N.Mlp([3, 5, 2], rng)
    _, cache = net.forward(rng.normal(size=(4, 3)))
    grads, gin = net.backward(cache, np.zeros((4, 2)))
    assert all(not g.any() for g in grads) and not gin.any()
    lin = N.Mlp([1, 1], weights=[np.array([[2.0]])], biases=[np.zeros(1)])
    _, cache = lin.forward([3.0])
    grads, gin = lin.backward(cache, [1.0])
    assert grads[0][0, 0] == 3.0 and grads[1][0] == 1.0 and gin[0] == 2.0


@pytest.mark.parametrize("dims", [[3, 7, 5, 2], [4, 6, 1], [2, 3]])
def test_backward_matches_finite_differences(dims, rng):
    net = N.Mlp(dims, rng)
    X = rng.normal(size=(2, dims[0]))
    G = rng.normal(size=(2, dims[-1]))
    f = lambda: float(np.sum(net(X) * G))
    _, cache = net.forward(X)
    grads, gin = net.backward(cache, G)
    for g, fd in zip(grads, numeric_grad(f, net.params)):
        assert rel_error(g, fd) < 1e-4
    fd_x = numeric_grad(f, [X])[0]
    assert rel_error(gin, fd_x) < 1e-4


def test_backward_without_param_grads(rng):
    net = N.Mlp([3, 4, 1], rng)
    X = rng.normal(size=(2, 3))
    _, cache = net.forward(X)
    full, gin = net.backward(cache, np.ones((2, 1)))
    none, gin2 = net.backward(cache, np.ones((2, 1)), param_grads=False)
    assert all(g is None for g in none) and np.array_equal(gin, gin2)


def test_serialization_round_trip(rng):
    net = N.Mlp([3, 4, 2], rng)
    copy = N.Mlp.from_dict(net.to_dict())
    X = rng.normal(size=(3, 3))
    assert np.array_equal(copy(X), net(X))


def test_adam_zero_gradient():
    p = [np.array([1.0, 2.0])]
    opt = N.Adam(p, lr=0.1)
    opt.step([np.zeros(2)])
    assert np.array_equal(p[0], [1.0, 2.0]) and opt.t == 1


def test_adam_first_step_size():
    p = [np.array([0.0, 0.0])]
    opt = N.Adam(p, lr=0.01)
    N.adam_step(p, [np.array([5.0, -0.3])], opt)
    assert np.allclose(p[0], [-0.01, 0.01], rtol=1e-6)


def test_adam_converges_on_quadratic():
    w = [np.array([0.0])]
    opt = N.Adam(w, lr=0.1)
    for _ in range(500):
        opt.step([2.0 * (w[0] - 3.0)])
    assert abs(w[0][0] - 3.0) < 1e-2


def test_squash_log_std_range():
    raw = np.array([-1e6, -3.0, 0.0, 3.0, 1e6])
    out = N.squash_log_std(raw)
    assert out[0] == -5.0 and out[-1] == 2.0 and out[2] == pytest.approx(-1.5)
    assert np.all(np.diff(out) >= 0)


def test_policy_bounds_and_log_std(rng):
    head = N.PolicyHead(3, 2, [-1.0, 0.0], [1.0, 4.0], hidden=32, rng=rng, out_init_scale=30.0)
    X = rng.normal(scale=50.0, size=(100_000, 3))
    u, logp, _ = head.sample(X, rng)
    assert np.all(u >= [-1.0, 0.0]) and np.all(u <= [1.0, 4.0])
    ls = head.log_std(X)
    assert ls.min() >= -5.0 and ls.max() <= 2.0
    assert np.all(np.isfinite(logp))


def fixed_head(mean, raw, low=-1.0, high=1.0):
    """Single-action head whose output ignores the state: (mean, raw log-std)."""
    trunk = N.Mlp([1, 2], weights=[np.zeros((1, 2))], biases=[np.array([mean, raw])])
    return N.PolicyHead(1, 1, [low], [high], trunk=trunk)


def test_policy_sample_at_zero():
    head = fixed_head(0.0, -1e3)
    u, logp, _ = head.sample([0.0], noise=[0.0])
    assert u[0] == 0.0
    # Gaussian density at the mode with std e^-5; correction log(1 + 1e-6) is ~0
    assert logp == pytest.approx(5.0 - 0.5 * np.log(2 * np.pi), abs=1e-5)


def test_policy_sample_reproducible(rng):
    head = N.PolicyHead(2, 1, [-2.0], [2.0], hidden=8, rng=rng)
    a = head.sample([0.3, 0.1], np.random.default_rng(7))
    b = head.sample([0.3, 0.1], np.random.default_rng(7))
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


@pytest.mark.parametrize("mean,raw,low,high", [(0.3, 0.5, -1.0, 1.0), (-0.2, -0.6, -2.0, 3.0)])
def test_squashed_density_normalizes(mean, raw, low, high):
    head = fixed_head(mean, raw, low, high)
    log_std = float(N.squash_log_std(raw))
    scale, bias = (high - low) / 2, (high + low) / 2
    # density of u on a fine grid, via the noise that produces each u
    u = np.linspace(low, high, 200_001)[1:-1]
    a = np.arctanh((u - bias) / scale)
    xi = (a - mean) / np.exp(log_std)
    _, logp, _ = head.sample(np.zeros((len(u), 1)), noise=xi[:, None])
    dens = np.exp(logp)
    assert np.trapezoid(dens, u) == pytest.approx(1.0, abs=0.02)
    # histogram of 1e5 samples against the same density
    samples, _, _ = head.sample(np.zeros((100_000, 1)), np.random.default_rng(1))
    counts, edges = np.histogram(samples[:, 0], bins=40, range=(low, high))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(u))])
    mass = np.diff(np.interp(edges, u, cdf))
    assert np.sum(np.abs(counts / 100_000 - mass)) < 0.02


def test_mean_action():
    head = fixed_head(0.5, 0.0, -2.0, 2.0)
    assert head.mean_action([1.0])[0] == pytest.approx(2.0 * np.tanh(0.5))


@pytest.mark.parametrize("hidden", [0, 6])
def test_policy_backward_frozen_noise(hidden, rng):
    head = N.PolicyHead(3, 2, [-1.0, -3.0], [1.0, 2.0], hidden=hidden, rng=rng, out_init_scale=1.0)
    X = rng.normal(size=(2, 3))
    noise = rng.normal(size=(2, 2))
    cu, cl = rng.normal(size=(2, 2)), rng.normal(size=2)

    def f():
        u, logp, _ = head.sample(X, noise=noise)
        return float(np.sum(cu * u) + np.sum(cl * logp))

    _, _, aux = head.sample(X, noise=noise)
    grads = head.backward(aux, cu, cl)
    for g, fd in zip(grads, numeric_grad(f, head.params)):
        assert rel_error(g, fd) < 1e-4


def test_policy_serialization(rng):
    head = N.PolicyHead(2, 1, [-1.0], [1.0], hidden=4, rng=rng)
    copy = N.PolicyHead.from_dict(head.to_dict())
    assert np.array_equal(copy.mean_action([0.2, 0.4]), head.mean_action([0.2, 0.4]))
