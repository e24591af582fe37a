"""Regression and classification objectives for neural fields.

Predictions are :class:`~nfc.autodiff.Tensor` objects (so the losses can be
differentiated); targets are plain arrays. Batches are laid out ray-major:
colors ``(B, 3)``, bit probabilities ``(B, 3, 8)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, clamp_max, clamp_min, constant, log, mean, mul, tsum
from .encoding import PLACE_WEIGHTS, encode_colors

MODES = ("regression", "bitwise", "channelwise")


@dataclass(frozen=True)
class LossConfig:
    lam: float = 5.0
    epsilon: float = 1e-3
    epsilon_low: float = 1e-7
    mode: str = "channelwise"

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")
        if not 0.0 < self.epsilon_low < self.epsilon:
            raise ValueError("epsilon_low must lie in (0, epsilon)")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


def _check_same(pred: Tensor, target: np.ndarray, what: str):
    if pred.shape != target.shape:
        raise ValueError(f"{what}: prediction shape {pred.shape} != target shape {target.shape}")


def bce(p, t) -> Tensor:
    """Elementwise -[t ln p + (1 - t) ln(1 - p)]; ``p`` must already be clamped."""
    p = constant(p)
    t = np.asarray(t, dtype=np.float64)
    return -(mul(log(p), t) + mul(log(1.0 - p), 1.0 - t))


def mse_loss(pred, target) -> Tensor:
    """Batch mean of the per-ray squared l2 norm."""
    pred = constant(pred)
    target = np.asarray(target, dtype=np.float64)
    _check_same(pred, target, "mse_loss")
    d = pred - target
    return mean(tsum(d * d, axis=-1))


def bitwise_cls_loss(pred_bits, target_bits, cfg: LossConfig = LossConfig()) -> Tensor:
    """Place-weighted BCE over the 8 bits of each channel, mean over rays and channels."""
    pred_bits = constant(pred_bits)
    target_bits = np.asarray(target_bits, dtype=np.float64)
    _check_same(pred_bits, target_bits, "bitwise_cls_loss")
    p = clamp_min(clamp_max(pred_bits, 1.0 - cfg.epsilon_low), cfg.epsilon_low)
    per_channel = tsum(mul(bce(p, target_bits), PLACE_WEIGHTS), axis=-1)
    return mean(per_channel)


def channelwise_cls_loss(pred_color, target, cfg: LossConfig = LossConfig()) -> Tensor:
    """BCE(clamp(C_hat, eps_low, 1 - eps), C) with C as a soft label, mean over rays and channels."""
    pred_color = constant(pred_color)
    target = np.asarray(target, dtype=np.float64)
    _check_same(pred_color, target, "channelwise_cls_loss")
    p = clamp_min(clamp_max(pred_color, 1.0 - cfg.epsilon), cfg.epsilon_low)
    return mean(bce(p, target))


def nfc_terms(pred_color, target, cfg: LossConfig, pred_bits=None, target_bits=None):
    """(total, mse, cls) with total = mse + lam * cls.

    In bitwise mode ``pred_bits``/``target_bits`` feed the classification term;
    in regression mode cls is still computed (channel-wise) for logging but
    carries zero weight.
    """
    mse = mse_loss(pred_color, target)
    if cfg.mode == "bitwise":
        if pred_bits is None:
            raise ValueError("bitwise mode needs bit probabilities")
        if target_bits is None:
            target_bits = encode_colors(target)
        cls = bitwise_cls_loss(pred_bits, target_bits, cfg)
    else:
        cls = channelwise_cls_loss(pred_color, target, cfg)
    lam = 0.0 if cfg.mode == "regression" else cfg.lam
    return mse + mul(cls, lam), mse, cls


def nfc_loss(pred_color, target, cfg: LossConfig = LossConfig(), pred_bits=None, target_bits=None) -> Tensor:
    return nfc_terms(pred_color, target, cfg, pred_bits, target_bits)[0]
