"""Neural fields as regressors (NFR) or as bit-encoded classifiers (NFC)."""

from .autodiff import Graph, Tensor, grad_check
from .datasets import ImageDataset, SceneSpec, Sphere, read_ppm, write_ppm
from .encoding import binary_decode, binary_encode, positional_encode, probability_decode
from .fields import FieldModel, MlpSpec, eval_image_field, eval_radiance_field, init_model
from .losses import LossConfig, bitwise_cls_loss, channelwise_cls_loss, mse_loss, nfc_loss
from .metrics import psnr, ssim
from .rendering import Camera, composite, generate_rays, render_image, stratified_sample
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"
