import numpy as np
import pytest

from nfc import autodiff as ad
from nfc.autodiff import DomainError, Graph, ShapeError, Tensor, grad_check


def fd_grad(f, x0, h=1e-6):
    """Central differences of a scalar numpy function."""
    g = np.zeros_like(x0)
    for i in np.ndindex(x0.shape):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_sigmoid_at_zero():
    assert ad.sigmoid(Tensor(0.0)).data == 0.5


def test_matmul_identity():
    A = np.array([[1.5, -2.0], [0.25, 3.0]])
    assert np.array_equal(ad.matmul(np.eye(2), A).data, A)


def test_clamp_upper_values():
    assert ad.clamp_max(Tensor(1.2), 0.999).data == 0.999
    assert ad.clamp_max(Tensor(0.4), 0.999).data == 0.4


def test_square_gradient():
    g = Graph()
    x = g.leaf(3.0)
    assert g.backward(x * x)[x.node] == 6.0


def test_clamp_gradient_vanishes_when_active():
    g = Graph()
    x = g.leaf(1.2)
    assert g.backward(ad.clamp_max(x, 0.999))[x.node] == 0.0


@pytest.mark.parametrize("op, bound", [(ad.clamp_max, 0.5), (ad.clamp_min, 0.5)])
def test_clamp_tie_counts_as_active(op, bound):
    g = Graph()
    x = g.leaf(bound)
    assert g.backward(op(x, bound))[x.node] == 0.0


def test_sigmoid_gradient_at_zero_matches_fd():
    g = Graph()
    x = g.leaf(0.0)
    analytic = g.backward(ad.sigmoid(x))[x.node]
    h = 1e-6
    s = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
    assert analytic == 0.25
    assert abs((s(h) - s(-h)) / (2 * h) - 0.25) < 1e-9


def test_grad_check_sum_sigmoid():
    rng = np.random.default_rng(0)
    assert grad_check(lambda x: ad.sigmoid(x).sum(), rng.normal(size=(4, 3)), 1e-6) < 1e-6


def test_grad_check_constant_is_zero():
    assert grad_check(lambda x: Tensor(2.0), np.ones(3)) == 0.0


def test_nonscalar_backward_raises():
    g = Graph()
    x = g.leaf(np.ones(3))
    with pytest.raises(ShapeError):
        g.backward(x * 2.0)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_broadcast_shape_error():
    with pytest.raises(ShapeError):
        ad.add(np.ones((2, 3)), np.ones((4,)))


def test_log_domain_error():
    with pytest.raises(DomainError):
        ad.log(Tensor([1.0, 0.0]))


def test_mixing_graphs_rejected():
    a, b = Graph().leaf(1.0), Graph().leaf(2.0)
    with pytest.raises(ValueError):
        a + b


def test_constants_evaluate_eagerly():
    t = ad.exp(Tensor([0.0, 1.0]))
    assert t.graph is None
    np.testing.assert_allclose(t.data, [1.0, np.e])


def test_tape_is_topological():
    g = Graph()
    x = g.leaf(np.ones(2))
    y = ad.relu(x * 2.0 + 1.0).sum()
    g.backward(y)
    for i, node in enumerate(g.nodes):
        assert all(p is None or p < i for p in node.parents)


# unary ops: (op, sampler for interior points)
UNARY = {
    "neg": (ad.neg, lambda r, s: r.normal(size=s)),
    "relu": (ad.relu, lambda r, s: r.choice([-1, 1], size=s) * r.uniform(0.1, 2, size=s)),
    "sigmoid": (ad.sigmoid, lambda r, s: r.normal(size=s) * 3),
    "softplus": (ad.softplus, lambda r, s: r.normal(size=s) * 3),
    "exp": (ad.exp, lambda r, s: r.normal(size=s)),
    "log": (ad.log, lambda r, s: r.uniform(0.1, 3, size=s)),
    "clamp_max": (lambda x: ad.clamp_max(x, 0.5), lambda r, s: r.uniform(-1, 0.45, size=s)),
    "clamp_min": (lambda x: ad.clamp_min(x, -0.5), lambda r, s: r.uniform(-0.45, 1, size=s)),
    "sum_axis": (lambda x: ad.tsum(x, axis=1), lambda r, s: r.normal(size=s)),
    "mean": (lambda x: ad.mean(x, axis=0, keepdims=True), lambda r, s: r.normal(size=s)),
    "reshape": (lambda x: ad.reshape(x, (-1,)), lambda r, s: r.normal(size=s)),
    "broadcast": (lambda x: ad.broadcast_to(ad.reshape(x, (1,) + x.shape), (3,) + x.shape), lambda r, s: r.normal(size=s)),
    "cumsum": (lambda x: ad.cumsum(x, axis=1), lambda r, s: r.normal(size=s)),
    "cumsum_excl": (lambda x: ad.cumsum(x, axis=1, exclusive=True), lambda r, s: r.normal(size=s)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients_match_fd(name):
    op, sample = UNARY[name]
    rng = np.random.default_rng(sum(map(ord, name)))
    worst = 0.0
    for _ in range(100):
        x = sample(rng, (2, 3))
        w = rng.normal(size=op(Tensor(x)).shape)
        worst = max(worst, grad_check(lambda t: ad.tsum(ad.mul(op(t), w)), x, 1e-6))
    assert worst < 1e-5


@pytest.mark.parametrize("op", [ad.add, ad.sub, ad.mul])
def test_broadcasting_binary_gradients(op):
    rng = np.random.default_rng(1)
    for _ in range(100):
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(3,))
        g = Graph()
        ta, tb = g.leaf(a), g.leaf(b)
        w = rng.normal(size=(4, 3))
        grads = g.backward(ad.tsum(ad.mul(op(ta, tb), w)))
        f_a = lambda v: float((op(Tensor(v), Tensor(b)).data * w).sum())  # noqa: E731
        f_b = lambda v: float((op(Tensor(a), Tensor(v)).data * w).sum())  # noqa: E731
        np.testing.assert_allclose(grads[ta.node], fd_grad(f_a, a), rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(grads[tb.node], fd_grad(f_b, b), rtol=1e-5, atol=1e-7)


def test_matmul_and_concat_gradients():
    rng = np.random.default_rng(2)
    for _ in range(100):
        A = rng.normal(size=(3, 4))
        B = rng.normal(size=(4, 2))
        C = rng.normal(size=(3, 1))
        assert grad_check(lambda t: ad.tsum(ad.sigmoid(ad.concat([ad.matmul(A, t), C], axis=1))), B) < 1e-5
        assert grad_check(lambda t: ad.tsum(ad.sigmoid(ad.matmul(t, B))), A) < 1e-5


def test_backward_is_linear():
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=5)
    f1 = lambda t: ad.tsum(ad.sigmoid(t))  # noqa: E731
    f2 = lambda t: ad.tsum(ad.mul(ad.exp(t), 0.3))  # noqa: E731

    def grad(f):
        g = Graph()
        x = g.leaf(x0)
        return g.backward(f(x))[x.node]

    np.testing.assert_allclose(grad(lambda t: f1(t) + f2(t)), grad(f1) + grad(f2), rtol=0, atol=1e-15)


def test_forward_backward_bit_identical():
    rng = np.random.default_rng(4)
    W = rng.normal(size=(6, 5))
    X = rng.normal(size=(10, 6))

    def run():
        g = Graph()
        w = g.leaf(W)
        loss = ad.mean(ad.softplus(ad.matmul(X, w)))
        return loss.data.copy(), g.backward(loss)[w.node]

    (l1, g1), (l2, g2) = run(), run()
    assert l1.tobytes() == l2.tobytes() and g1.tobytes() == g2.tobytes()


def test_unused_leaf_gets_zero_gradient():
    g = Graph()
    x = g.leaf(np.ones(2))
    y = g.leaf(np.ones(3))
    grads = g.backward(ad.tsum(x))
    assert np.array_equal(grads[y.node], np.zeros(3))


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_first_nonfinite_locates_node():
    g = Graph()
    x = g.leaf(np.array([1000.0]))
    ad.exp(ad.exp(x))
    nid, op, _ = g.first_nonfinite()
    assert op == "exp"
