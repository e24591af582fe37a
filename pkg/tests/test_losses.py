import math

import numpy as np
import pytest

from nfc.autodiff import Graph, Tensor, grad_check
from nfc.losses import (
    LossConfig,
    bitwise_cls_loss,
    channelwise_cls_loss,
    mse_loss,
    nfc_loss,
    nfc_terms,
)

CFG = LossConfig(lam=1.0)


def bce_ref(p, t):
    return -(t * math.log(p) + (1 - t) * math.log(1 - p))


def test_mse_identity_is_zero():
    x = np.random.default_rng(0).uniform(size=(5, 3))
    assert mse_loss(Tensor(x), x).data == 0.0


def test_mse_sums_channels():
    assert math.isclose(mse_loss(Tensor([[0.5, 0.5, 0.5]]), np.zeros((1, 3))).data, 0.75)


def test_mse_batch_mean():
    pred = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    assert math.isclose(mse_loss(Tensor(pred), np.zeros((2, 3))).data, (1.0 + 4.0) / 2)


def test_mse_shape_mismatch():
    with pytest.raises(ValueError):
        mse_loss(Tensor(np.zeros((2, 3))), np.zeros((3, 3)))


def test_bitwise_uniform_half_is_ln2():
    rng = np.random.default_rng(1)
    target = rng.integers(0, 2, size=(7, 3, 8)).astype(float)
    got = bitwise_cls_loss(Tensor(np.full((7, 3, 8), 0.5)), target).data
    # direct summation of the place weights
    brute = sum(2 ** j / 255 * math.log(2) for j in range(8))
    assert abs(got - brute) < 1e-12
    assert abs(got - math.log(2)) < 1e-9


def test_bitwise_perfect_is_tiny():
    rng = np.random.default_rng(2)
    target = rng.integers(0, 2, size=(4, 3, 8)).astype(float)
    got = bitwise_cls_loss(Tensor(target), target).data
    assert 0 < got <= -math.log(1 - 1e-7) * (1 + 1e-9)


def test_bitwise_top_bit_wrong():
    target = np.zeros((1, 1, 8))
    pred = np.zeros((1, 1, 8))
    pred[0, 0, 7] = 1.0  # confident in the 128s place
    got = bitwise_cls_loss(Tensor(pred), target).data
    expect = (128 / 255) * bce_ref(1 - 1e-7, 0.0) + (127 / 255) * bce_ref(1e-7, 0.0)
    assert math.isclose(got, expect, rel_tol=1e-12)
    assert abs(got - (128 / 255) * -math.log(1e-7)) < 1e-5


def test_bitwise_invariant_to_ray_permutation():
    rng = np.random.default_rng(3)
    pred = rng.uniform(size=(6, 3, 8))
    target = rng.integers(0, 2, size=(6, 3, 8)).astype(float)
    perm = rng.permutation(6)
    a = bitwise_cls_loss(Tensor(pred), target).data
    b = bitwise_cls_loss(Tensor(pred[perm]), target[perm]).data
    assert abs(a - b) < 1e-15


def test_channelwise_half():
    got = channelwise_cls_loss(Tensor(np.full((2, 3), 0.5)), np.full((2, 3), 0.5)).data
    assert abs(got - math.log(2)) < 1e-12


def test_channelwise_clamped_prediction():
    got = channelwise_cls_loss(Tensor([[1.2, 1.2, 1.2]]), np.ones((1, 3)), LossConfig(epsilon=1e-3)).data
    assert abs(got - -math.log(0.999)) < 1e-12
    assert abs(got - 0.0010005) < 1e-7


@pytest.mark.parametrize("c", [0.1, 0.37, 0.5, 0.8])
def test_channelwise_minimised_at_target(c):
    grid = np.linspace(5e-4, 0.999, 1998)
    vals = [channelwise_cls_loss(Tensor([[p]]), np.array([[c]])).data for p in grid]
    best = grid[int(np.argmin(vals))]
    entropy = -(c * math.log(c) + (1 - c) * math.log(1 - c))
    assert abs(best - c) < 5e-4
    assert abs(min(vals) - entropy) < 1e-5
    assert abs(channelwise_cls_loss(Tensor([[c]]), np.array([[c]])).data - entropy) < 1e-12


def test_nfc_lambda_zero_equals_mse():
    rng = np.random.default_rng(4)
    pred, target = rng.uniform(size=(5, 3)), rng.uniform(size=(5, 3))
    a = nfc_loss(Tensor(pred), target, LossConfig(lam=0.0)).data
    assert a == mse_loss(Tensor(pred), target).data


def test_nfc_half_half():
    got = nfc_loss(Tensor(np.full((1, 3), 0.5)), np.full((1, 3), 0.5), CFG).data
    assert abs(got - math.log(2)) < 1e-12


def test_nfc_overshoot():
    # one ray, every channel predicts 1.2 against 1.0:
    # mse = 3 * 0.04 (sum over channels), cls = -ln(0.999) (mean over channels)
    got = nfc_loss(Tensor([[1.2, 1.2, 1.2]]), np.ones((1, 3)), CFG).data
    assert abs(got - (3 * 0.04 - math.log(0.999))) < 1e-12


def test_terms_identity():
    rng = np.random.default_rng(5)
    pred, target = rng.uniform(size=(5, 3)), rng.uniform(size=(5, 3))
    cfg = LossConfig(lam=2.5)
    total, mse, cls = nfc_terms(Tensor(pred), target, cfg)
    assert abs(total.data - (mse.data + 2.5 * cls.data)) <= 1e-12


def test_regression_mode_ignores_cls():
    rng = np.random.default_rng(6)
    pred, target = rng.uniform(size=(5, 3)), rng.uniform(size=(5, 3))
    total, mse, cls = nfc_terms(Tensor(pred), target, LossConfig(mode="regression"))
    assert total.data == mse.data and cls.data > 0


def test_bitwise_mode_requires_bits():
    with pytest.raises(ValueError):
        nfc_terms(Tensor(np.full((1, 3), 0.5)), np.full((1, 3), 0.5), LossConfig(mode="bitwise"))


@pytest.mark.parametrize("kw", [{"epsilon": 0.0}, {"epsilon": 0.6}, {"epsilon_low": 0.01}, {"lam": -1.0}, {"mode": "x"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        LossConfig(**kw)


# -- gradients ----------------------------------------------------------------


def test_loss_gradients_match_fd():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        target = rng.uniform(0.05, 0.95, size=(4, 3))
        bits = rng.integers(0, 2, size=(4, 3, 8)).astype(float)
        x = rng.uniform(0.05, 0.95, size=(4, 3))
        xb = rng.uniform(0.05, 0.95, size=(4, 3, 8))
        worst = max(
            worst,
            grad_check(lambda t: mse_loss(t, target), x),
            grad_check(lambda t: channelwise_cls_loss(t, target, CFG), x),
            grad_check(lambda t: bitwise_cls_loss(t, bits, CFG), xb),
            grad_check(lambda t: nfc_loss(t, target, CFG), x),
        )
    assert worst < 1e-5


def test_active_clamp_leaves_only_mse_gradient():
    pred = np.array([[1.2, 0.5, 1.0005]])
    target = np.array([[1.0, 0.4, 0.9]])
    g = Graph()
    x = g.leaf(pred)
    g_cls = g.backward(channelwise_cls_loss(x, target, CFG))[x.node]
    g2 = Graph()
    x2 = g2.leaf(pred)
    g_nfc = g2.backward(nfc_loss(x2, target, CFG))[x2.node]
    g3 = Graph()
    x3 = g3.leaf(pred)
    g_mse = g3.backward(mse_loss(x3, target))[x3.node]
    active = pred >= 1 - CFG.epsilon
    assert np.all(g_cls[active] == 0.0)
    assert np.all(g_nfc[active] == g_mse[active])
    assert np.all(g_mse[active] != 0.0)
    assert np.all(g_cls[~active] != 0.0)


@pytest.mark.parametrize("c", [0.25, 0.5, 0.75])
def test_cls_bounded_below_by_entropy_while_mse_hits_zero(c):
    target = np.full((3, 3), c)
    entropy = -(c * math.log(c) + (1 - c) * math.log(1 - c))
    for p in np.linspace(0.01, 1.2, 50):
        assert channelwise_cls_loss(Tensor(np.full((3, 3), p)), target).data >= entropy - 1e-12
    assert mse_loss(Tensor(target), target).data == 0.0
    assert entropy > 0.5
