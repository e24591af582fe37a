"""Pinhole rays, stratified depth sampling and alpha compositing."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .autodiff import Tensor, constant, cumsum, exp, mul, reshape, tsum
from .encoding import N_BITS, probability_decode
from .fields import FieldModel, eval_radiance_field

LAST_DELTA = 1e10


@dataclass
class Camera:
    width: int
    height: int
    focal: float
    pose: np.ndarray  # 3x4 camera-to-world; camera looks down its -z axis, +y up

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64)
        if self.pose.shape != (3, 4):
            raise ValueError(f"pose must be 3x4, got {self.pose.shape}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        if not self.focal > 0:
            raise ValueError("focal length must be positive")
        R = self.pose[:, :3]
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9:
            raise ValueError("pose rotation is not orthonormal")

    @property
    def origin(self) -> np.ndarray:
        return self.pose[:, 3]

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "focal": self.focal,
                "pose": self.pose.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Camera":
        return cls(int(d["width"]), int(d["height"]), float(d["focal"]), np.array(d["pose"]))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """3x4 pose placing the camera at ``eye`` looking toward ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    back = eye - np.asarray(target, dtype=np.float64)
    back /= np.linalg.norm(back)
    right = np.cross(np.asarray(up, dtype=np.float64), back)
    right /= np.linalg.norm(right)
    true_up = np.cross(back, right)
    return np.column_stack([right, true_up, back, eye])


class Rays(NamedTuple):
    origins: np.ndarray  # (n, 3)
    directions: np.ndarray  # (n, 3), unit
    near: np.ndarray  # (n,)
    far: np.ndarray  # (n,)
    pixels: np.ndarray  # (n,) flat index row * width + col

    def __len__(self):
        return len(self.pixels)

    def take(self, idx) -> "Rays":
        return Rays(*(a[idx] for a in self))


def concat_rays(parts) -> Rays:
    return Rays(*(np.concatenate(cols) for cols in zip(*parts)))


def generate_rays(camera: Camera, pixels=None, near: float = 0.0, far: float = 1.0) -> Rays:
    """Rays through pixel centers; ``pixels`` are flat indices (default: all, row-major)."""
    if not near < far:
        raise ValueError("need near < far")
    n_pix = camera.width * camera.height
    pixels = np.arange(n_pix) if pixels is None else np.asarray(pixels, dtype=np.int64).ravel()
    if pixels.size and (pixels.min() < 0 or pixels.max() >= n_pix):
        raise IndexError(f"pixel index outside a {camera.width}x{camera.height} image")
    row, col = np.divmod(pixels, camera.width)
    d_cam = np.stack([
        (col + 0.5 - camera.width / 2) / camera.focal,
        -(row + 0.5 - camera.height / 2) / camera.focal,
        -np.ones(pixels.shape),
    ], axis=-1)
    d = d_cam @ camera.pose[:, :3].T
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    n = pixels.size
    return Rays(np.broadcast_to(camera.origin, (n, 3)).copy(), d,
                np.full(n, float(near)), np.full(n, float(far)), pixels)


class RaySamples(NamedTuple):
    t: np.ndarray  # (n, N) increasing depths
    deltas: np.ndarray  # (n, N); last entry is ``last_delta``

    def points(self, rays: Rays) -> np.ndarray:
        return rays.origins[:, None, :] + self.t[..., None] * rays.directions[:, None, :]


def _pixel_uniforms(seed: int, pixels: np.ndarray, n: int) -> np.ndarray:
    # one stream per (seed, pixel): results do not depend on chunking or order
    return np.stack([np.random.default_rng([int(seed), int(p)]).random(n) for p in pixels]) if len(pixels) else np.zeros((0, n))


def stratified_sample(rays: Rays, n_samples: int, rng=None, last_delta: float = LAST_DELTA) -> RaySamples:
    """One depth per equal-width bin of [near, far].

    ``rng`` may be a ``numpy.random.Generator`` (one stream for the batch), an
    int seed (independent stream per pixel), or None for bin midpoints.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample per ray")
    n = len(rays)
    frac = np.arange(n_samples + 1) / n_samples
    edges = rays.near[:, None] + (rays.far - rays.near)[:, None] * frac
    lo, width = edges[:, :-1], np.diff(edges, axis=1)
    if rng is None:
        u = np.full((n, n_samples), 0.5)
    elif isinstance(rng, np.random.Generator):
        u = rng.random((n, n_samples))
    else:
        u = _pixel_uniforms(rng, rays.pixels, n_samples)
    t = lo + u * width
    deltas = np.concatenate([np.diff(t, axis=1), np.full((n, 1), last_delta)], axis=1)
    return RaySamples(t, deltas)


def composite(sigma, values, deltas, background):
    """Alpha-composite per-sample values along rays.

    sigma: (n, N) densities; values: (n, N, k); deltas: (n, N); background: (k,).
    Returns (composited (n, k), weights (n, N)).
    """
    sigma = constant(sigma)
    values = constant(values)
    deltas = np.asarray(deltas, dtype=np.float64)
    if np.any(sigma.data < 0):
        raise ValueError("negative density")
    background = np.asarray(background, dtype=np.float64)
    n, N = sigma.shape
    tau = mul(sigma, deltas)
    trans = exp(-cumsum(tau, axis=1, exclusive=True))
    weights = trans * (1.0 - exp(-tau))
    acc = tsum(mul(reshape(weights, (n, N, 1)), values), axis=1)
    rest = reshape(1.0 - tsum(weights, axis=1), (n, 1))
    return acc + mul(rest, background), weights


def background_bits(background) -> np.ndarray:
    """Bit probabilities that decode to ``background``: its value repeated in every place."""
    return np.repeat(np.asarray(background, dtype=np.float64), N_BITS)


class RenderOutput(NamedTuple):
    color: Tensor  # (n, 3) composited color
    bits: Optional[Tensor]  # (n, 3, 8) composited bit probabilities (classifier head)
    weights: Tensor  # (n, N)


def render_rays(model: FieldModel, rays: Rays, n_samples: int, background=(0.0, 0.0, 0.0),
                rng=None, params=None, last_delta: float = LAST_DELTA) -> RenderOutput:
    """Query the field at stratified samples and composite.

    Colors are passed through their per-sample sigmoid before compositing;
    for a classifier head the 24 bit probabilities are composited and then
    decoded, which equals compositing the decoded colors.
    """
    n = len(rays)
    s = stratified_sample(rays, n_samples, rng, last_delta)
    pts = s.points(rays).reshape(-1, 3)
    sigma, out = eval_radiance_field(model, pts, rays.directions, params, dir_repeat=n_samples)
    sigma = reshape(sigma, (n, n_samples))
    if out.bits is None:
        color, w = composite(sigma, reshape(out.color, (n, n_samples, 3)), s.deltas, background)
        return RenderOutput(color, None, w)
    flat, w = composite(sigma, reshape(out.bits, (n, n_samples, 3 * N_BITS)), s.deltas,
                        background_bits(background))
    bits = reshape(flat, (n, 3, N_BITS))
    return RenderOutput(probability_decode(bits), bits, w)


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("NFC_THREADS", "1")))
    except ValueError:
        return 1


def render_image(model: FieldModel, camera: Camera, n_samples: int, background=(0.0, 0.0, 0.0),
                 near: float = 2.0, far: float = 6.0, seed: Optional[int] = None,
                 chunk: int = 2048) -> np.ndarray:
    """H x W x 3 composited colors (unclamped).

    ``seed=None`` uses bin midpoints; an int seed jitters samples with
    per-pixel streams, so the result is independent of chunking and threads.
    """
    rays = generate_rays(camera, None, near, far)
    starts = range(0, len(rays), chunk)

    def run(s):
        part = rays.take(slice(s, s + chunk))
        return render_rays(model, part, n_samples, background, seed).color.data

    workers = n_threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate(parts).reshape(camera.height, camera.width, 3)
