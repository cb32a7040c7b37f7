import itertools
import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from weightflow.backbone import (BackboneConfig, compress_batch, conditional_distribution,
                                 enumerate_joint, init_weights, joint_log_prob, mdn_conditional,
                                 nll, permute_order, sample, zero_weights)
from weightflow.errors import ConfigError
from weightflow.numcore import Param
from weightflow.train import fit_backbone

from helpers import check_param_grads, tv


def random_theta(cfg, seed, scale=1.0):
    return np.random.default_rng(seed).normal(scale=scale, size=cfg.layout.total)


def test_layout_for_l32_h8():
    layout = BackboneConfig(d=3, L=32, H=8).layout
    widths = [(s.name, s.rows, s.cols + 1) for s in layout.layers]
    assert widths == [("embed", 8, 33), ("gru", 24, 18), ("head", 32, 9)]
    assert layout.total == 8 * 33 + 24 * 18 + 32 * 9 == 984
    assert layout.n_nodes == 64


def test_parameter_count_independent_of_d():
    assert BackboneConfig(d=2, L=32).layout == BackboneConfig(d=10, L=32).layout


@pytest.mark.parametrize("bad", [dict(d=2, L=1), dict(d=2, L=4, H=0), dict(d=2, L=4, order=(0, 0)),
                                 dict(d=1, L=4, head="mdn", K=0), dict(d=1, L=4, head="flow")])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        BackboneConfig(**bad)


def test_init_is_deterministic_with_zero_biases():
    cfg = BackboneConfig(d=2, L=8)
    a, b = init_weights(cfg, 3), init_weights(cfg, 3)
    assert np.array_equal(a.theta, b.theta)
    off = 0
    for spec in cfg.layout.layers:
        block = a.theta[off:off + spec.size].reshape(spec.rows, spec.width)
        assert not block[:, -1].any()
        off += spec.size


def test_zero_theta_is_uniform():
    cfg = BackboneConfig(d=3, L=5)
    theta = zero_weights(cfg).theta
    np.testing.assert_allclose(conditional_distribution(theta, cfg, [1, 4]), 0.2, rtol=0, atol=1e-15)
    assert joint_log_prob(theta, cfg, [0, 3, 2]) == pytest.approx(-3 * math.log(5), abs=1e-13)
    np.testing.assert_allclose(enumerate_joint(theta, cfg), 1 / 125, rtol=0, atol=1e-15)
    batch = np.random.default_rng(0).integers(0, 5, size=(17, 3))
    assert nll(theta, cfg, batch).item() == pytest.approx(3 * math.log(5), abs=1e-12)


def test_conditionals_positive_and_deterministic():
    cfg = BackboneConfig(d=3, L=6)
    theta = random_theta(cfg, 1, 2.0)
    p = conditional_distribution(theta, cfg, [2])
    assert np.all(p > 0) and abs(p.sum() - 1) < 1e-12
    assert np.array_equal(p, conditional_distribution(theta, cfg, [2]))
    with pytest.raises(ConfigError):
        conditional_distribution(theta, cfg, [6])
    with pytest.raises(ConfigError):
        conditional_distribution(theta, cfg, [0, 1, 2])


def test_product_of_conditionals_sums_to_one():
    cfg = BackboneConfig(d=3, L=4)
    theta = random_theta(cfg, 2)
    total = 0.0
    for x in itertools.product(range(4), repeat=3):
        p = 1.0
        for i in range(3):
            p *= conditional_distribution(theta, cfg, x[:i])[x[i]]
        total += p
    assert abs(total - 1) < 1e-10


def test_joint_log_prob_matches_enumeration():
    cfg = BackboneConfig(d=2, L=8)
    theta = random_theta(cfg, 3)
    table = enumerate_joint(theta, cfg)
    xs = np.array(list(itertools.product(range(8), repeat=2)))
    np.testing.assert_allclose(joint_log_prob(theta, cfg, xs), np.log(table[xs[:, 0], xs[:, 1]]),
                               rtol=0, atol=1e-10)
    cfg1 = BackboneConfig(d=1, L=8)
    t1 = random_theta(cfg1, 4)
    assert joint_log_prob(t1, cfg1, [5]) == pytest.approx(math.log(conditional_distribution(t1, cfg1)[5]),
                                                          abs=1e-12)


def test_enumerate_rejects_huge_tables():
    with pytest.raises(ConfigError):
        enumerate_joint(np.zeros(BackboneConfig(d=5, L=32).layout.total), BackboneConfig(d=5, L=32))


def test_nll_rejects_empty_batch():
    cfg = BackboneConfig(d=2, L=4)
    with pytest.raises(ConfigError):
        nll(zero_weights(cfg).theta, cfg, np.zeros((0, 2), dtype=int))


@pytest.mark.parametrize("seed", range(3))
def test_nll_gradient_matches_fd(seed):
    cfg = BackboneConfig(d=2, L=5, H=4)
    theta = Param(random_theta(cfg, seed, 0.5), "theta")
    batch = np.random.default_rng(seed).integers(0, 5, size=(12, 2))
    assert check_param_grads(lambda: nll(theta, cfg, batch), [theta]) < 1e-4


def test_compressed_batch_gives_same_nll():
    cfg = BackboneConfig(d=2, L=6)
    theta = random_theta(cfg, 5)
    batch = np.random.default_rng(1).integers(0, 3, size=(200, 2))
    assert nll(theta, cfg, *compress_batch(batch)).item() == pytest.approx(nll(theta, cfg, batch).item(),
                                                                         rel=1e-12)


def test_nll_bounded_below_by_empirical_entropy():
    cfg = BackboneConfig(d=2, L=4)
    batch = np.random.default_rng(2).integers(0, 4, size=(300, 2))
    _, w = compress_batch(batch)
    entropy = -float(np.sum(w * np.log(w)))
    for seed in range(5):
        assert nll(random_theta(cfg, seed), cfg, batch).item() >= entropy - 1e-9
    theta, losses = fit_backbone(init_weights(cfg, 0).theta, cfg, batch, 600, 3e-2)
    assert entropy - 1e-9 <= losses[-1] < entropy + 0.02


def test_degenerate_target_drives_nll_to_zero():
    cfg = BackboneConfig(d=2, L=8)
    batch = np.tile([[3, 5]], (50, 1))
    _, losses = fit_backbone(init_weights(cfg, 1).theta, cfg, batch, 2000, 5e-3)
    assert losses[-1] < 0.1


def test_sampling_is_seeded_and_matches_enumeration():
    cfg = BackboneConfig(d=2, L=8)
    theta = random_theta(cfg, 6)
    a = sample(theta, cfg, 100_000, 0)
    assert np.array_equal(a, sample(theta, cfg, 100_000, 0))
    emp = np.bincount(a[:, 0] * 8 + a[:, 1], minlength=64) / len(a)
    assert tv(emp, enumerate_joint(theta, cfg)) < 0.02


def test_zero_theta_samples_are_uniform():
    cfg = BackboneConfig(d=2, L=5)
    x = sample(zero_weights(cfg).theta, cfg, 100_000, 1)
    n, p = len(x), 0.2
    for k in range(2):
        counts = np.bincount(x[:, k], minlength=5)
        assert np.all(np.abs(counts - n * p) < 3 * math.sqrt(n * p * (1 - p)))


def test_permute_order():
    cfg = BackboneConfig(d=3, L=4)
    theta = random_theta(cfg, 7)
    same = permute_order(cfg, (0, 1, 2))
    assert np.array_equal(enumerate_joint(theta, same), enumerate_joint(theta, cfg))
    shuffled = permute_order(cfg, (2, 0, 1))
    table = enumerate_joint(theta, shuffled)
    assert abs(table.sum() - 1) < 1e-10
    # first AR step in the shuffled order is dimension 2
    marg2 = table.sum(axis=(0, 1))
    np.testing.assert_allclose(marg2, conditional_distribution(theta, shuffled), atol=1e-12)
    np.testing.assert_allclose(enumerate_joint(zero_weights(cfg).theta, shuffled), 1 / 64, atol=1e-15)
    with pytest.raises(ConfigError):
        permute_order(cfg, (0, 1, 1))


# ----------------------------------------------------------------------------- MDN head

def test_mdn_zero_theta_is_standard():
    cfg = BackboneConfig(d=2, L=2, head="mdn", K=5)
    mix = mdn_conditional(zero_weights(cfg).theta, cfg, [0.7])
    np.testing.assert_allclose(mix.weights, 0.2)
    assert not mix.means.any() and not mix.log_stds.any()


def test_mdn_single_component_closed_form():
    cfg = BackboneConfig(d=1, L=2, head="mdn", K=1)
    theta = random_theta(cfg, 8)
    mix = mdn_conditional(theta, cfg)
    mu, s = mix.means[0], math.exp(mix.log_stds[0])
    for x in (-2.0, 0.3, 4.0):
        closed = -0.5 * ((x - mu) / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)
        assert mix.log_density(x) == pytest.approx(closed, abs=1e-12)
        assert joint_log_prob(theta, cfg, np.array([x])) == pytest.approx(closed, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_mdn_quadrature_is_one(seed):
    cfg = BackboneConfig(d=2, L=2, head="mdn", K=3)
    mix = mdn_conditional(random_theta(cfg, seed, 0.7), cfg, [0.4])
    s = np.exp(mix.log_stds)
    lo, hi = float(np.min(mix.means - 10 * s)), float(np.max(mix.means + 10 * s))
    # composite Gauss-Legendre over many panels
    nodes, weights = leggauss(40)
    edges = np.linspace(lo, hi, 201)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        total += 0.5 * (b - a) * np.sum(weights * np.exp(mix.log_density(x)))
    assert abs(total - 1) < 1e-6


def test_mdn_nll_gradient_matches_fd():
    cfg = BackboneConfig(d=2, L=2, H=4, head="mdn", K=3)
    theta = Param(random_theta(cfg, 9, 0.4), "theta")
    batch = np.random.default_rng(9).normal(size=(10, 2))
    assert check_param_grads(lambda: nll(theta, cfg, batch), [theta]) < 1e-4
