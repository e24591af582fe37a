"""Adam, learning-rate decay, and the fit/evaluate loop for image and radiance fields."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .autodiff import DomainError, Graph
from .datasets import ImageDataset
from .fields import FieldModel, eval_image_field
from .losses import LossConfig, nfc_terms
from .metrics import MetricReport, psnr, report
from .rendering import Rays, concat_rays, generate_rays, render_image, render_rays

TRAIN_MODES = ("nfr", "nfc-bitwise", "nfc-channelwise", "nfc-no-encoding")

_LOSS_MODE = {
    "nfr": "regression",
    "nfc-bitwise": "bitwise",
    "nfc-channelwise": "channelwise",
    "nfc-no-encoding": "channelwise",
}

# heads each mode can train; nfc-channelwise on a 3-logit head is the no-encoding ablation
_HEADS = {
    "nfr": ("regressor3",),
    "nfc-bitwise": ("classifier24",),
    "nfc-channelwise": ("classifier24", "regressor3"),
    "nfc-no-encoding": ("regressor3",),
}


class NumericalError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    mode: str = "nfc-channelwise"
    lam: float = 5.0
    iterations: int = 5000
    batch_size: int = 1024
    lr: float = 5e-4
    # iterations over which lr falls by 10x; None -> 2.5 * iterations
    decay_horizon: Optional[float] = None
    eval_every: int = 250
    seed: int = 0
    epsilon: float = 1e-3
    epsilon_low: float = 1e-7
    n_samples: int = 32
    eval_rays: int = 1024

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.batch_size < 1 or self.iterations < 1 or self.eval_every < 1:
            raise ValueError("batch_size, iterations and eval_every must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")

    def loss_config(self) -> LossConfig:
        return LossConfig(self.lam, self.epsilon, self.epsilon_low, _LOSS_MODE[self.mode])

    @property
    def horizon(self) -> float:
        return self.decay_horizon if self.decay_horizon is not None else 2.5 * self.iterations

    @staticmethod
    def default_head(mode: str) -> str:
        return _HEADS[mode][0]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LogRecord:
    iteration: int
    mse: float
    cls: float
    total: float
    train_psnr: float
    test_psnr: float
    seconds: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> tuple[dict, AdamState]:
    """Bias-corrected Adam update of ``params`` (in place); returns (params, state)."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k} {p.shape}")
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def lr_schedule(cfg: TrainConfig, it: float) -> float:
    return cfg.lr * 0.1 ** (it / cfg.horizon)


# -- data plumbing --------------------------------------------------------------


def pixel_coords(height: int, width: int) -> np.ndarray:
    """Pixel-center coordinates in [0, 1]^2 as (x, y), row-major, shape (H*W, 2)."""
    row, col = np.divmod(np.arange(height * width), width)
    return np.stack([(col + 0.5) / width, (row + 0.5) / height], axis=-1)


class Supervision(NamedTuple):
    inputs: object  # (n, 2) coords for image fields, Rays for radiance fields
    colors: np.ndarray  # (n, 3)

    def __len__(self):
        return len(self.colors)


def supervision(ds: ImageDataset, role: str) -> Supervision:
    """All supervised pixels/rays of the views with ``role``."""
    idx = ds.indices(role)
    if ds.is_image_task:
        coords, colors = [], []
        for i in idx:
            img = ds.images[i]
            sel = ds.mask(i).ravel()
            coords.append(pixel_coords(*img.shape[:2])[sel])
            colors.append(img.reshape(-1, 3)[sel])
        if not idx:
            return Supervision(np.zeros((0, 2)), np.zeros((0, 3)))
        return Supervision(np.concatenate(coords), np.concatenate(colors))
    parts, colors = [], []
    for i in idx:
        sel = np.flatnonzero(ds.mask(i).ravel())
        parts.append(generate_rays(ds.cameras[i], sel, ds.near, ds.far))
        colors.append(ds.images[i].reshape(-1, 3)[sel])
    if not idx:
        return Supervision(Rays(*(np.zeros((0, 3)),) * 2, *(np.zeros(0),) * 2, np.zeros(0, dtype=np.int64)), np.zeros((0, 3)))
    return Supervision(concat_rays(parts), np.concatenate(colors))


def _take(sup: Supervision, idx) -> Supervision:
    inputs = sup.inputs.take(idx) if isinstance(sup.inputs, Rays) else sup.inputs[idx]
    return Supervision(inputs, sup.colors[idx])


def predict(model: FieldModel, inputs, ds: ImageDataset, n_samples: int, params=None, rng=None, chunk: int = 4096):
    """Field output (color, bits) for pixel coords or rays."""
    if ds.is_image_task:
        return eval_image_field(model, inputs, params)
    return render_rays(model, inputs, n_samples, ds.background, rng, params)


def _predict_colors(model, sup: Supervision, ds, n_samples, chunk=4096) -> np.ndarray:
    out = []
    for s in range(0, len(sup), chunk):
        out.append(predict(model, _take(sup, slice(s, s + chunk)).inputs, ds, n_samples).color.data)
    return np.concatenate(out) if out else np.zeros((0, 3))


def _subset(sup: Supervision, n: int, seed: int) -> Supervision:
    if len(sup) <= n:
        return sup
    idx = np.sort(np.random.default_rng(seed).choice(len(sup), size=n, replace=False))
    return _take(sup, idx)


# -- loop -------------------------------------------------------------------


def train(model: FieldModel, ds: ImageDataset, cfg: TrainConfig,
          on_record: Optional[Callable[[LogRecord], None]] = None) -> tuple[FieldModel, list[LogRecord]]:
    """Fit ``model`` (a copy; the argument is untouched) and log every ``eval_every`` steps."""
    if model.spec.head not in _HEADS[cfg.mode]:
        raise ValueError(f"mode {cfg.mode} cannot train a {model.spec.head} head")
    if ds.is_image_task == model.spec.density:
        raise ValueError("model type does not match the dataset task")
    model = model.copy()
    loss_cfg = cfg.loss_config()
    train_sup = supervision(ds, "train")
    if len(train_sup) == 0:
        raise ValueError("dataset has no training pixels")
    # fixed evaluation subsets for the learning curves
    eval_train = _subset(train_sup, cfg.eval_rays, cfg.seed + 1) if not ds.is_image_task else train_sup
    test_sup = supervision(ds, "test")
    eval_test = _subset(test_sup, cfg.eval_rays, cfg.seed + 2) if not ds.is_image_task else test_sup

    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    logs: list[LogRecord] = []
    t0 = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        batch = _take(train_sup, rng.integers(0, len(train_sup), cfg.batch_size))
        g = Graph()
        params = model.bind(g)
        try:
            out = predict(model, batch.inputs, ds, cfg.n_samples, params, rng)
            total, mse, cls = nfc_terms(out.color, batch.colors, loss_cfg, out.bits)
            finite = bool(np.isfinite(total.data))
        except DomainError:
            finite = False
        if not finite:
            bad = g.first_nonfinite()
            where = f"node {bad[0]} ({bad[1]}, shape {bad[2]})" if bad else "unknown tensor"
            raise NumericalError(f"non-finite loss at iteration {it}; first non-finite tensor: {where}")
        grads = g.backward(total)
        adam_step(model.params, {k: grads[t.node] for k, t in params.items()}, state,
                  lr_schedule(cfg, it - 1))
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            rec = LogRecord(
                it, float(mse.data), float(cls.data), float(total.data),
                psnr(_predict_colors(model, eval_train, ds, cfg.n_samples), eval_train.colors),
                psnr(_predict_colors(model, eval_test, ds, cfg.n_samples), eval_test.colors)
                if len(eval_test) else float("nan"),
                time.perf_counter() - t0,
            )
            logs.append(rec)
            if on_record is not None:
                on_record(rec)
    return model, logs


# -- evaluation ---------------------------------------------------------------


class Evaluation(NamedTuple):
    views: list  # MetricReport per view
    psnr: float
    ssim: float


def render_view(model: FieldModel, ds: ImageDataset, i: int, n_samples: int = 64) -> np.ndarray:
    """Unclamped prediction for view ``i`` at full resolution."""
    h, w = ds.images[i].shape[:2]
    if ds.is_image_task:
        coords = pixel_coords(h, w)
        cols = [eval_image_field(model, coords[s:s + 4096]).color.data for s in range(0, len(coords), 4096)]
        return np.concatenate(cols).reshape(h, w, 3)
    return render_image(model, ds.cameras[i], n_samples, ds.background, ds.near, ds.far)


def evaluate(model: FieldModel, ds: ImageDataset, split: str = "test", n_samples: int = 64) -> Evaluation:
    """PSNR/SSIM of every view in ``split`` (restricted to its mask) and their mean."""
    idx = ds.indices(split)
    if not idx:
        raise ValueError(f"split {split!r} is empty")
    views = []
    for i in idx:
        pred = np.clip(render_view(model, ds, i, n_samples), 0.0, 1.0)
        mask = None if ds.masks is None or ds.masks[i] is None or ds.masks[i].all() else ds.masks[i]
        views.append(report(pred, ds.images[i], mask))
    return Evaluation(views, float(np.mean([v.psnr for v in views])), float(np.mean([v.ssim for v in views])))


__all__ = [
    "TRAIN_MODES", "NumericalError", "TrainConfig", "LogRecord", "AdamState", "adam_step",
    "lr_schedule", "train", "evaluate", "Evaluation", "MetricReport", "render_view",
    "supervision", "pixel_coords",
]
