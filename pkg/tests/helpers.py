"""Shared oracles and task builders for the unit and acceptance tests."""

import numpy as np

from nfc.autodiff import Tensor, grad_check
from nfc.datasets import image_task, inject_noise, sparsify, synthetic_image
from nfc.encoding import encode_colors
from nfc.fields import MlpSpec, eval_image_field, init_model
from nfc.losses import LossConfig, nfc_terms


def field_objective_error(seed: int, head: str = "classifier24", mode: str = "channelwise") -> float:
    """Worst relative FD error of the NFC objective through a 2-layer image field, over every parameter."""
    rng = np.random.default_rng(seed)
    spec = MlpSpec(in_dim=2, pos_freqs=2, widths=(8, 8), head=head)
    model = init_model(spec, seed)
    # nonzero biases keep the point generic
    for k in model.params:
        if k.endswith(".b"):
            model.params[k] = rng.normal(scale=0.1, size=model.params[k].shape)
    coords = rng.uniform(size=(6, 2))
    target = rng.uniform(0.05, 0.95, size=(6, 3))
    cfg = LossConfig(lam=2.0, mode=mode)
    target_bits = encode_colors(target) if mode == "bitwise" else None
    worst = 0.0
    for name, value in model.params.items():
        def f(t, name=name):
            p = {k: (t if k == name else Tensor(v)) for k, v in model.params.items()}
            out = eval_image_field(model, coords, p)
            return nfc_terms(out.color, target, cfg, out.bits, target_bits)[0]
        worst = max(worst, grad_check(f, value))
    return worst


def desk_image(keep: float = 0.25, noise: float = 0.0, seed: int = 0, size: int = 64):
    """The held-out-pixel image task: a fixed mid-tone image, ``keep`` of its pixels supervised."""
    ds = sparsify(image_task(synthetic_image(size, 0)), keep, seed)
    if noise:
        ds = inject_noise(ds, noise, seed)
    return ds
