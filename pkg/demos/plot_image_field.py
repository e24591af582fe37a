"""
Regression vs classification on a sparsely observed image
=========================================================

Fit a coordinate MLP to a quarter of the pixels of a 64x64 image and
score it on the other three quarters. Both heads share data, seed and
trunk initialization; only the head and the loss differ.

The full desk experiment runs 5000 iterations (``nfc compare
demos/configs/image_sparse.json``). This script uses fewer so it
finishes in about a minute.
"""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from nfc.datasets import write_ppm
from nfc.experiments import build_dataset, fit, load_config
from nfc.training import render_view

here = Path(__file__).parent
iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
cfg = load_config(here / "configs" / "image_sparse.json")
cfg = replace(cfg, train=replace(cfg.train, iterations=iterations, eval_every=iterations // 4))
ds = build_dataset(cfg)
print("train pixels:", int(ds.mask(0).sum()), "held out:", int(ds.mask(1).sum()))

###############################################################################
# Train both modes and print the learning curves.

results = {}
for mode in ("nfr", "nfc-channelwise"):
    res = fit(replace(cfg, train=replace(cfg.train, mode=mode)), ds)
    results[mode] = res
    print(mode)
    for r in res.logs:
        print(f"  it {r.iteration:5d}  mse {r.mse:.5f}  cls {r.cls:.4f}  train {r.train_psnr:6.2f}  test {r.test_psnr:6.2f}")

###############################################################################
# Held-out PSNR/SSIM, and the renders written next to this script.

out = here / "out"
out.mkdir(exist_ok=True)
write_ppm(out / "target.ppm", ds.images[1])
for mode, res in results.items():
    ev = res.evaluation
    print(f"{mode:16s} PSNR {ev.psnr:6.2f}  SSIM {ev.ssim:.4f}")
    write_ppm(out / f"{mode}.ppm", np.clip(render_view(res.model, ds, 1), 0, 1))
