import numpy as np
import pytest

from weightflow import numcore as nc
from weightflow.errors import ConfigError, NumericError
from weightflow.numcore import Param, Tape

from helpers import check_param_grads


def test_matmul_identity():
    out = nc.matmul(np.eye(2), np.array([[2.0], [3.0]]))
    np.testing.assert_array_equal(out.data, [[2.0], [3.0]])


def test_softmax_uniform_and_normalized():
    np.testing.assert_allclose(nc.softmax(np.zeros(3)).data, [1 / 3] * 3, rtol=0, atol=1e-15)
    x = np.random.default_rng(1).normal(scale=20, size=(50, 7))
    p = nc.softmax(x).data
    assert np.all(p > 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12)


@pytest.mark.parametrize("a", [-700.0, -3.5, 0.0, 2.25, 800.0])
def test_logsumexp_single_element(a):
    assert nc.logsumexp(np.array([a])).item() == a


def test_square_gradient_at_three():
    x = Param(np.array(3.0), "x")
    with Tape() as tape:
        loss = nc.square(x)
    grads = tape.backward(loss)
    assert grads[x] == pytest.approx(6.0)
    assert x.grad == pytest.approx(6.0)


def test_mse_softmax_gradient_matches_fd():
    rng = np.random.default_rng(7)
    W = Param(0.1 * rng.normal(size=(4, 5)), "W")
    x = rng.normal(size=(5, 3))
    target = rng.dirichlet(np.ones(4), size=3).T
    err = check_param_grads(lambda: nc.mse(nc.softmax(nc.matmul(W, x), axis=0), target), [W])
    assert err < 1e-4


def test_detached_param_gets_zero_gradient():
    a, b = Param(np.ones(3), "a"), Param(np.ones(3), "b")
    with Tape() as tape:
        loss = nc.sum(nc.square(a))
    grads = tape.backward(loss)
    assert b not in grads
    np.testing.assert_array_equal(b.grad, np.zeros(3))


def test_backward_requires_scalar_loss():
    a = Param(np.ones(3), "a")
    with Tape() as tape:
        out = nc.square(a)
    with pytest.raises(nc.ShapeError, match="scalar"):
        tape.backward(out)


def test_shape_error_names_op_and_shapes():
    with pytest.raises(nc.ShapeError) as info:
        nc.matmul(np.ones((2, 3)), np.ones((2, 3)))
    assert "matmul" in str(info.value) and "(2, 3)" in str(info.value)
    with pytest.raises(nc.ShapeError):
        nc.mul(np.ones((2, 3)), np.ones(3))   # no broadcasting beyond bias-add


def test_bias_add_broadcast_gradient():
    rng = np.random.default_rng(2)
    b = Param(rng.normal(size=4), "b")
    x = rng.normal(size=(6, 4))
    assert check_param_grads(lambda: nc.sum(nc.tanh(nc.add(x, b))), [b]) < 1e-6


def test_log_of_nonpositive_is_numeric_error():
    with pytest.raises(NumericError):
        nc.log(np.array([1.0, 0.0]))
    with pytest.raises(NumericError):
        nc.exp(np.array([1000.0]))


PRIMITIVES = {
    "matmul": lambda a, b: nc.sum(nc.matmul(a, b.T)),
    "add": lambda a, b: nc.sum(nc.square(nc.add(a, b))),
    "sub": lambda a, b: nc.sum(nc.square(nc.sub(a, b))),
    "mul": lambda a, b: nc.sum(nc.mul(a, b)),
    "concat": lambda a, b: nc.sum(nc.square(nc.concat([a, b], axis=1))),
    "slice": lambda a, b: nc.sum(nc.square(a[1:, ::2])) + nc.sum(b[[0, 0, 2]]),
    "sigmoid": lambda a, b: nc.sum(nc.mul(nc.sigmoid(a), b)),
    "tanh": lambda a, b: nc.sum(nc.mul(nc.tanh(a), b)),
    "exp": lambda a, b: nc.sum(nc.mul(nc.exp(a), b)),
    "log": lambda a, b: nc.sum(nc.mul(nc.log(nc.exp(a) + 1.0), b)),
    "softmax": lambda a, b: nc.sum(nc.mul(nc.softmax(a), b)),
    "logsumexp": lambda a, b: nc.sum(nc.mul(nc.logsumexp(a), nc.sum(b, axis=1))),
    "sum": lambda a, b: nc.sum(nc.square(nc.sum(a, axis=0))) + nc.sum(b),
    "mean": lambda a, b: nc.mean(nc.square(a)) + nc.mean(b, axis=0)[1],
    "mse": lambda a, b: nc.mse(a, b),
    "square": lambda a, b: nc.sum(nc.mul(nc.square(a), b)),
    "layer_norm": lambda a, b: nc.sum(nc.mul(nc.layer_norm(a, b[0], b[1]), b)),
    "transpose": lambda a, b: nc.sum(nc.mul(nc.transpose(a), nc.transpose(b))),
    "reshape": lambda a, b: nc.sum(nc.square(nc.reshape(nc.mul(a, b), (12,)))),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
@pytest.mark.parametrize("seed", range(3))
def test_primitive_gradients_match_fd(name, seed):
    rng = np.random.default_rng(seed)
    a = Param(rng.normal(size=(3, 4)), "a")
    b = Param(rng.normal(size=(3, 4)), "b")
    if name == "layer_norm":
        b.data = rng.normal(size=(3, 4))
    assert check_param_grads(lambda: PRIMITIVES[name](a, b), [a, b]) < 1e-4


def test_fused_primitives_match_fd():
    rng = np.random.default_rng(3)
    x = Param(rng.normal(size=(5, 8)), "x")
    W = Param(rng.normal(size=(8, 6)) * 0.3, "W")
    b = Param(rng.normal(size=6), "b")
    qkv = Param(rng.normal(size=(8, 24)) * 0.3, "qkv")
    wo = Param(rng.normal(size=(8, 8)) * 0.3, "wo")
    y = Param(rng.normal(size=7), "y")
    z = Param(rng.normal(size=7), "z")
    assert check_param_grads(lambda: nc.sum(nc.tanh(nc.linear(x, W, b))), [x, W, b]) < 1e-5
    assert check_param_grads(
        lambda: nc.sum(nc.tanh(nc.multi_head_attention(x, qkv, wo, 2))), [x, qkv, wo]) < 1e-5
    assert check_param_grads(lambda: nc.sum(nc.square(nc.axpy(y, z, 0.3))), [y, z]) < 1e-6
    assert check_param_grads(
        lambda: nc.sum(nc.square(nc.lincomb([y, z, y], [0.5, -2.0, 1.5]))), [y, z]) < 1e-6


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(0)
    A = nc.attention_weights(rng.normal(size=(9, 8)), rng.normal(size=(8, 24)), 4)
    np.testing.assert_allclose(A.sum(axis=-1), 1.0, rtol=0, atol=1e-12)


def test_replay_is_bit_identical():
    def run():
        rng = np.random.default_rng(11)
        W = Param(nc.glorot_uniform(rng, 4, 5), "W")
        x = rng.normal(size=(5, 2))
        with Tape() as tape:
            loss = nc.mse(nc.softmax(nc.matmul(W, x), axis=0), np.full((4, 2), 0.25))
        return loss.item(), tape.backward(loss)[W]

    (l1, g1), (l2, g2) = run(), run()
    assert l1 == l2 and np.array_equal(g1, g2)


def test_no_tape_records_nothing():
    a = Param(np.ones(2), "a")
    out = nc.square(a)
    assert not out.requires_grad
    with Tape() as tape:
        nc.square(np.ones(2))          # constants only
    assert len(tape) == 0


# ----------------------------------------------------------------------------- Adam

def test_adam_zero_gradient_leaves_params():
    p = Param(np.array([1.0, -2.0]), "p")
    opt = nc.Adam([p], lr=0.1)
    for _ in range(5):
        opt.zero_grad()
        opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_constant_gradient_descends():
    p = Param(np.zeros(3), "p")
    g = np.array([2.0, -0.5, 1e-3])
    opt = nc.Adam([p], lr=0.01)
    for _ in range(100):
        p.grad = g.copy()
        opt.step()
    assert np.all(np.sign(p.data) == -np.sign(g))


def test_adam_first_step_closed_form():
    g = np.array([3.0, -1e-2, 250.0])
    out = nc.adam_step([np.zeros(3)], [g], [np.zeros(3)], [np.zeros(3)], lr=1e-3, beta1=0.9,
                       beta2=0.999, eps=1e-8, step_count=1)[0]
    # bias-corrected first step is -lr * g / (|g| + eps)
    np.testing.assert_allclose(out, -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    np.testing.assert_allclose(np.abs(out), 1e-3, rtol=1e-5)


@pytest.mark.parametrize("lr", [0.0, -1e-3])
def test_adam_rejects_nonpositive_lr(lr):
    with pytest.raises(ConfigError):
        nc.Adam([Param(np.zeros(1), "p")], lr=lr)
    with pytest.raises(ConfigError):
        nc.adam_step([np.zeros(1)], [np.ones(1)], [np.zeros(1)], [np.zeros(1)], lr, 0.9, 0.999,
                     1e-8, 1)


def test_param_grad_shape_matches_value():
    p = Param(np.ones((2, 3)), "p")
    assert p.grad.shape == p.data.shape
    p.grad += 1
    p.zero_grad()
    assert not p.grad.any()
