"""
A radiance field of two spheres
===============================

Render a synthetic two-sphere scene from cameras spread over a sphere, train
a small radiance field with the classification head and render a held-out
view. The spheres sit on a white background and have constant colors, so the
field's color branch ignores the view direction.

The acceptance configuration (``demos/configs/scene_two_spheres.json``)
trains for 10k iterations; the default here is much shorter.
"""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from nfc.datasets import write_ppm
from nfc.experiments import build_dataset, fit, load_config
from nfc.metrics import psnr
from nfc.training import render_view

here = Path(__file__).parent
iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 500
cfg = load_config(here / "configs" / "scene_two_spheres.json")
cfg = replace(cfg, train=replace(cfg.train, mode="nfc-channelwise", iterations=iterations,
                                 eval_every=max(1, iterations // 5)))

###############################################################################
# Oracle views: 20 cameras, every tenth held out.

ds = build_dataset(cfg)
print("roles:", "".join("T" if r == "train" else "." for r in ds.roles), f"near/far {ds.near:.2f}/{ds.far:.2f}")

###############################################################################
# Train and look at a test view.

res = fit(cfg, ds)
for r in res.logs:
    print(f"it {r.iteration:5d}  train {r.train_psnr:6.2f}  test {r.test_psnr:6.2f}")
i = ds.indices("test")[0]
pred = np.clip(render_view(res.model, ds, i, cfg.eval_samples), 0, 1)
print(f"view {i}: PSNR {psnr(pred, ds.images[i]):.2f}")
out = here / "out"
out.mkdir(exist_ok=True)
write_ppm(out / f"scene_view{i}_truth.ppm", ds.images[i])
write_ppm(out / f"scene_view{i}_nfc.ppm", pred)
