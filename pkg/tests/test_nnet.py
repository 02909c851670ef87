import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradbench.nnet import (
    ADAM_EPS,
    Adam,
    DenseNet,
    clip_global_norm,
    global_norm,
    init_orthogonal,
    load_params,
    save_params,
)


def fd_check(net, x, g, h=1e-5):
    """Max relative error between backward() and central differences of sum(g * net(x))."""
    net.forward(x)
    grads, _ = net.backward(g)
    worst = 0.0
    for p, gp in zip(net.params, grads):
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = np.sum(g * net.forward(x))
            flat[i] = old - h
            down = np.sum(g * net.forward(x))
            flat[i] = old
            fd = (up - down) / (2 * h)
            an = gp.reshape(-1)[i]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    return worst


def test_orthogonal_init():
    rng = np.random.default_rng(0)
    w = init_orthogonal((5, 5), 1.0, rng)
    np.testing.assert_allclose(w.T @ w, np.eye(5), atol=1e-6)
    for shape in [(4, 64), (64, 2), (64, 64)]:
        w = init_orthogonal(shape, 0.01, rng)
        np.testing.assert_allclose(np.linalg.svd(w, compute_uv=False), 0.01, atol=1e-6)
        assert w.shape == shape
    a = init_orthogonal((3, 7), 2.0, np.random.default_rng(5))
    b = init_orthogonal((3, 7), 2.0, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


def test_forward_trivial_cases():
    net = DenseNet([3, 5, 2], rng=np.random.default_rng(0))
    for p in net.params:
        p[...] = 0.0
    np.testing.assert_array_equal(net(np.ones((4, 3))), 0.0)

    ident = DenseNet([3, 3], rng=np.random.default_rng(0))
    ident.weights[0][...] = np.eye(3)
    x = np.random.default_rng(1).normal(size=(6, 3))
    np.testing.assert_array_equal(ident(x), x)

    with pytest.raises(ValueError):
        net(np.ones((4, 2)))


def test_forward_matches_straight_line_oracle():
    rng = np.random.default_rng(3)
    net = DenseNet([4, 64, 64, 2], gains=[2**0.5, 2**0.5, 0.01], rng=rng)
    for b in net.biases:
        b[...] = rng.normal(size=b.shape)
    x = rng.normal(size=(7, 4))
    (w1, w2, w3), (b1, b2, b3) = net.weights, net.biases
    expected = np.empty((7, 2))
    for r in range(7):
        h1 = [np.tanh(sum(x[r, i] * w1[i, j] for i in range(4)) + b1[j]) for j in range(64)]
        h2 = [np.tanh(sum(h1[i] * w2[i, j] for i in range(64)) + b2[j]) for j in range(64)]
        expected[r] = [sum(h2[i] * w3[i, j] for i in range(64)) + b3[j] for j in range(2)]
    np.testing.assert_allclose(net(x), expected, atol=1e-10, rtol=0)
    np.testing.assert_array_equal(net(x), net(x))


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 1000), sizes=st.sampled_from([[3, 4, 2], [2, 5, 5, 1], [4, 6, 3, 3]]))
def test_backward_matches_finite_differences(seed, sizes):
    rng = np.random.default_rng(seed)
    net = DenseNet(sizes, gains=[1.0] * (len(sizes) - 1), rng=rng)
    for b in net.biases:
        b[...] = rng.normal(scale=0.3, size=b.shape)
    x = rng.normal(size=(5, sizes[0]))
    g = rng.normal(size=(5, sizes[-1]))
    assert fd_check(net, x, g) < 1e-4


def test_backward_input_gradient_and_linearity():
    rng = np.random.default_rng(0)
    net = DenseNet([3, 8, 2], rng=rng)
    x = rng.normal(size=(4, 3))
    net(x)
    g1, g2 = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    a, _ = net.backward(g1)
    b, _ = net.backward(g2)
    c, gx = net.backward(g1 + g2)
    for pa, pb, pc in zip(a, b, c):
        np.testing.assert_allclose(pa + pb, pc, atol=1e-9)
    zero, _ = net.backward(np.zeros((4, 2)))
    assert all(np.all(z == 0) for z in zero)
    h = 1e-6
    for i in range(3):
        xp, xm = x.copy(), x.copy()
        xp[0, i] += h
        xm[0, i] -= h
        fd = (np.sum((g1 + g2) * net(xp)) - np.sum((g1 + g2) * net(xm))) / (2 * h)
        assert fd == pytest.approx(gx[0, i], rel=1e-6)


def test_backward_before_forward():
    with pytest.raises(RuntimeError):
        DenseNet([2, 2]).backward(np.zeros((1, 2)))


def test_adam_first_step_closed_form():
    alpha = 2.5e-4
    p = np.array([0.0])
    opt = Adam([p], lr=alpha)
    opt.step([np.array([1.0])])
    # m_hat = 1, v_hat = 1 on the first step
    assert p[0] == pytest.approx(-alpha / (1.0 + ADAM_EPS), abs=1e-15)
    assert opt.t == 1


def test_adam_zero_grad_and_parallel_tensors():
    p = np.ones((2, 3))
    q = np.ones((2, 3))
    opt = Adam([p, q], lr=0.1)
    opt.step([np.zeros((2, 3)), np.zeros((2, 3))])
    np.testing.assert_array_equal(p, 1.0)
    g = np.random.default_rng(0).normal(size=(2, 3))
    for k in range(5):
        opt.step([g, g.copy()])
    np.testing.assert_array_equal(p, q)
    assert opt.t == 6


def test_clip_global_norm():
    g = [np.array([0.6]), np.array([0.8])]
    out = clip_global_norm(g, 0.5)
    np.testing.assert_allclose(out[0], 0.3)
    np.testing.assert_allclose(out[1], 0.4)
    small = [np.array([0.18]), np.array([0.24])]
    out = clip_global_norm(small, 0.5)
    np.testing.assert_array_equal(out[0], small[0])
    rng = np.random.default_rng(0)
    for _ in range(50):
        grads = [rng.normal(scale=rng.uniform(0.01, 3), size=s) for s in [(3, 4), (4,)]]
        m = rng.uniform(0.1, 2)
        assert global_norm(clip_global_norm(grads, m)) == pytest.approx(min(global_norm(grads), m), abs=1e-9)
    with pytest.raises(ValueError):
        clip_global_norm(g, 0.0)


def test_checkpoint_round_trip(tmp_path):
    net = DenseNet([4, 64, 64, 2], rng=np.random.default_rng(0))
    path = tmp_path / "actor.gbnn"
    save_params(path, net.params + [np.zeros(3)])
    loaded = load_params(path)
    assert len(loaded) == 7
    for a, b in zip(net.params, loaded):
        np.testing.assert_array_equal(a, b)
    assert path.read_bytes()[:4] == b"GBNN"
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_params(tmp_path / "bad")
