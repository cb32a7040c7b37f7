import math

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from weightflow import numcore as nc
from weightflow.backbone import BackboneConfig, LayerSpec, ParamLayout
from weightflow.errors import ConfigError
from weightflow.hyperflow import (Hypernet, SolverConfig, build_spline, cde_field, dense_output,
                                  fit_autoencoder, hypernet_forward, integrate, ode_field, rollout,
                                  time_features)
from weightflow.weight_graph import to_graph

from helpers import check_param_grads

TINY = ParamLayout((LayerSpec("a", 2, 2), LayerSpec("b", 4, 1)))   # 6 nodes


def tiny_net(seed=0, m=1, randomize=True):
    net = Hypernet(TINY, m=m, d_model=8, heads=2, d_time=2, d_ff=8, seed=seed)
    if randomize:
        rng = np.random.default_rng(seed + 100)
        net.set_flat(rng.normal(scale=0.5, size=net.n_params))
    return net


class LinearField:
    """Stand-in for a hypernetwork: g(theta) = -theta, no time dependence."""
    m = 1

    def field(self, theta, t):
        return nc.reshape(-nc.as_tensor(theta), (theta.shape[0], 1))


# ----------------------------------------------------------------------------- hypernetwork

def test_fresh_hypernet_gives_zero_field():
    layout = BackboneConfig(d=2, L=16).layout
    net = Hypernet(layout, seed=1)
    theta = np.random.default_rng(0).normal(size=layout.total)
    assert not net.field(theta, 0.3).data.any()
    net.set_normalization(np.random.default_rng(1).normal(size=(5, layout.total)))
    assert net.normalized
    assert not net.field(theta, 0.3).data.any()


def test_zero_field_leaves_weights_unchanged():
    layout = BackboneConfig(d=2, L=16).layout
    theta0 = np.random.default_rng(2).normal(size=layout.total)
    sol = integrate(ode_field(Hypernet(layout)), theta0, 0.0, 1.0, SolverConfig("rk4", 10))
    assert np.array_equal(sol.theta.data, theta0)


def test_single_node_attention_by_hand():
    layout = ParamLayout((LayerSpec("only", 1, 2),))
    net = Hypernet(layout, d_model=4, heads=1, d_time=2, d_ff=3, seed=0)
    net.set_flat(np.random.default_rng(3).normal(size=net.n_params))
    theta, t = np.array([0.4, -1.2, 0.7]), 0.25

    def ln(x, g, b):
        xc = x - x.mean()
        return xc / math.sqrt((xc ** 2).mean() + 1e-5) * g + b

    x = np.concatenate([theta @ net.in_proj[0].data + net.layer_emb[0].data, time_features(t, 2)])
    v = ln(x, net.ln1_g.data, net.ln1_b.data) @ net.w_qkv.data[:, 8:]
    x = x + v @ net.w_o.data                       # one node: softmax weight is exactly 1
    hid = np.tanh(ln(x, net.ln2_g.data, net.ln2_b.data) @ net.w1.data + net.b1.data)
    x = x + hid @ net.w2.data + net.b2.data
    expect = x @ net.out_proj[0].data + net.out_bias[0].data
    np.testing.assert_allclose(net.field(theta, t).data.ravel(), expect, rtol=1e-12, atol=1e-12)


def test_permutation_equivariance_within_layer():
    net = tiny_net(4)
    theta = np.random.default_rng(5).normal(size=TINY.total)
    g = to_graph(theta, TINY)
    out = hypernet_forward(net, g, 0.6).data
    perm = np.array([2, 0, 3, 1])
    feats = [g.features[0], g.features[1][perm]]
    out_p = hypernet_forward(net, feats, 0.6).data
    a, b = out[:6], out[6:].reshape(4, 2)
    np.testing.assert_allclose(out_p[:6], a, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(out_p[6:].reshape(4, 2), b[perm], rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("m", [1, 2])
def test_hypernet_gradients_match_fd(m):
    net = tiny_net(6, m=m)
    net.set_normalization(np.random.default_rng(7).normal(size=(4, TINY.total)))
    theta = nc.Param(np.random.default_rng(8).normal(size=TINY.total), "theta")
    w = np.random.default_rng(9).normal(size=(TINY.total, m))

    def loss():
        return nc.sum(nc.mul(net.field(theta, 0.37), w))

    assert check_param_grads(loss, [theta] + net.params()) < 1e-5


def test_hypernet_rejects_bad_shapes():
    net = tiny_net(0)
    with pytest.raises(ConfigError):
        net.field(np.zeros(TINY.total + 1), 0.0)
    with pytest.raises(ConfigError):
        Hypernet(TINY, d_model=8, heads=3)
    with pytest.raises(ConfigError):
        net.set_flat(np.zeros(net.n_params + 1))


def test_buffers_round_trip():
    net = tiny_net(1)
    net.set_normalization(np.random.default_rng(2).normal(size=(3, TINY.total)))
    other = tiny_net(1)
    other.set_buffers(net.buffers())
    theta = np.random.default_rng(3).normal(size=TINY.total)
    assert np.array_equal(other.field(theta, 0.1).data, net.field(theta, 0.1).data)


# ----------------------------------------------------------------------------- integrators

def test_constant_field_is_exact():
    f = lambda theta, t: nc.Tensor(np.full(theta.shape, 2.0))
    for method in ("euler", "rk4"):
        sol = integrate(f, np.zeros(3), 0.0, 1.5, SolverConfig(method, 7))
        np.testing.assert_allclose(sol.theta.data, 3.0, rtol=1e-14)


def test_rk4_decay_accuracy_and_order():
    f = lambda theta, t: -theta
    err = {}
    for n in (10, 20):
        sol = integrate(f, np.array([1.0]), 0.0, 1.0, SolverConfig("rk4", n))
        err[n] = abs(sol.theta.item() - math.exp(-1))
    assert err[20] < 1e-6
    assert 14 < err[10] / err[20] < 18
    e1 = abs(integrate(f, np.array([1.0]), 0.0, 1.0, SolverConfig("euler", 100)).theta.item() - math.exp(-1))
    e2 = abs(integrate(f, np.array([1.0]), 0.0, 1.0, SolverConfig("euler", 200)).theta.item() - math.exp(-1))
    assert 1.8 < e1 / e2 < 2.2


def test_cde_with_unit_path_speed_equals_ode_bitwise():
    net = tiny_net(10)
    path = build_spline([0.0, 1.0], [[0.0], [1.0]])
    theta0 = np.random.default_rng(11).normal(size=TINY.total)
    solver = SolverConfig("rk4", 8)
    a = integrate(cde_field(net, path), theta0, 0.0, 1.0, solver).theta.data
    b = integrate(ode_field(net), theta0, 0.0, 1.0, solver).theta.data
    assert np.array_equal(a, b)
    assert not np.array_equal(a, theta0)


def test_constant_latent_path_freezes_weights():
    net = tiny_net(12, m=2)
    path = build_spline([0.0, 0.5, 1.0], np.tile([[0.3, -1.0]], (3, 1)))
    theta0 = np.random.default_rng(13).normal(size=TINY.total)
    sol = integrate(cde_field(net, path), theta0, 0.0, 1.0, SolverConfig("rk4", 10))
    assert np.array_equal(sol.theta.data, theta0)


def test_cde_invariant_to_time_reparameterization():
    z = np.array([0.0, 0.8, 0.5, 1.4])
    t = np.array([0.0, 0.3, 0.7, 1.0])
    solver = SolverConfig("rk4", 400)
    theta0 = np.array([1.0, -2.0])
    a = integrate(cde_field(LinearField(), build_spline(t, z)), theta0, 0.0, 1.0, solver).theta.data
    b = integrate(cde_field(LinearField(), build_spline(2.5 * t, z)), theta0, 0.0, 2.5, solver).theta.data
    np.testing.assert_allclose(a, theta0 * math.exp(-(z[-1] - z[0])), rtol=1e-8)
    assert np.max(np.abs(a - b)) < 1e-8


def test_rollout_checkpoints_and_dense_output():
    f = lambda theta, t: -theta
    sol = rollout(f, np.array([1.0]), [0.0, 0.4, 1.0], SolverConfig("rk4", 20))
    assert len(sol.checkpoints) == 3
    nodes = [0.0] + [s.t + s.dt for s in sol.steps]
    out = dense_output(f, sol, nodes)
    np.testing.assert_array_equal(out[1:, 0], [y.item() for y in sol.states])
    mid = dense_output(f, sol, [0.123, 0.77])[:, 0]
    np.testing.assert_allclose(mid, np.exp(-np.array([0.123, 0.77])), rtol=1e-7)
    with pytest.raises(ConfigError):
        dense_output(f, sol, [1.5])


def test_integrate_rejects_backwards_span():
    with pytest.raises(ConfigError):
        integrate(lambda y, t: y, np.zeros(1), 1.0, 0.0, SolverConfig())
    with pytest.raises(ConfigError):
        SolverConfig("dopri5")


# ----------------------------------------------------------------------------- spline

def test_spline_matches_scipy_natural():
    rng = np.random.default_rng(14)
    t = np.sort(rng.uniform(0, 5, 7))
    z = rng.normal(size=(7, 2))
    ours = build_spline(t, z)
    ref = CubicSpline(t, z, bc_type="natural")
    q = np.linspace(t[0], t[-1], 57)
    np.testing.assert_allclose([ours.evaluate(s) for s in q], ref(q), atol=1e-12)
    np.testing.assert_allclose([ours.derivative(s) for s in q], ref(q, 1), atol=1e-10)


def test_spline_interpolates_with_natural_ends():
    t = np.array([0.0, 1.0, 2.5, 3.0])
    z = np.array([1.0, -1.0, 0.5, 2.0])
    p = build_spline(t, z)
    for ti, zi in zip(t, z):
        assert p.evaluate(ti)[0] == pytest.approx(zi, abs=1e-14)
    assert p.second_derivative(t[0])[0] == pytest.approx(0, abs=1e-14)
    assert p.second_derivative(t[-1])[0] == pytest.approx(0, abs=1e-14)
    for s in (0.3, 1.7, 2.9):
        fd = (p.evaluate(s + 1e-6)[0] - p.evaluate(s - 1e-6)[0]) / 2e-6
        assert p.derivative(s)[0] == pytest.approx(fd, abs=1e-7)


def test_two_knot_spline_is_linear():
    p = build_spline([1.0, 3.0], [2.0, 6.0])
    assert p.evaluate(2.0)[0] == pytest.approx(4.0)
    assert p.derivative(1.3)[0] == pytest.approx(2.0)


def test_spline_rejects_bad_knots():
    with pytest.raises(ConfigError):
        build_spline([0.0, 1.0, 1.0], [0.0, 1.0, 2.0])
    with pytest.raises(ConfigError):
        build_spline([0.0], [0.0])


# ----------------------------------------------------------------------------- autoencoder

def test_identical_anchors_share_latents():
    anchors = np.tile(np.random.default_rng(15).normal(size=20), (4, 1))
    _, z = fit_autoencoder(anchors, m=1, epochs=50, seed=0)
    assert np.all(z == z[0])


def test_autoencoder_with_enough_latents_reconstructs():
    rng = np.random.default_rng(16)
    anchors = rng.normal(size=(5, 40))
    ae, z = fit_autoencoder(anchors, m=4, epochs=1500, seed=1, lr=1e-2)
    mse = np.mean((ae.decode(z) - anchors) ** 2)
    assert mse < 0.01 * anchors.var(axis=0).mean()
