"""
Classification loss against squared error
=========================================

For a mid-tone target the cross-entropy term cannot fall below the
target's entropy, while the squared error goes to zero. This is why the
logged ``cls`` value dwarfs ``mse`` late in training.
"""

import numpy as np

from nfc.autodiff import Tensor
from nfc.losses import LossConfig, channelwise_cls_loss, mse_loss

target = np.full((1, 3), 0.5)
cfg = LossConfig()

print(f"{'pred':>6s} {'mse':>10s} {'cls':>8s}")
for p in (0.1, 0.3, 0.45, 0.5, 0.55, 0.7, 0.9):
    pred = Tensor(np.full((1, 3), p))
    print(f"{p:6.2f} {mse_loss(pred, target).data:10.5f} {channelwise_cls_loss(pred, target, cfg).data:8.4f}")

###############################################################################
# The floor is the binary entropy of the target, ln 2 for 0.5.

print("entropy floor:", np.log(2))
