"""Desk-scale data: sphere scenes with exact ground truth, image-fitting tasks,
training-set degradations, deterministic splits, and PPM/manifest files."""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .rendering import Camera, composite, generate_rays, look_at


class PPMFormatError(ValueError):
    pass


# -- scenes -----------------------------------------------------------------


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    color: tuple
    density: float = 40.0


@dataclass(frozen=True)
class SceneSpec:
    spheres: tuple = ()
    bounds: tuple = ((-1.5, -1.5, -1.5), (1.5, 1.5, 1.5))
    background: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        lo, hi = (np.asarray(b, dtype=np.float64) for b in self.bounds)
        for s in self.spheres:
            c = np.asarray(s.center, dtype=np.float64)
            if s.radius <= 0:
                raise ValueError("sphere radius must be positive")
            if s.density <= 0:
                raise ValueError("sphere density must be positive")
            if np.any(c - s.radius < lo) or np.any(c + s.radius > hi):
                raise ValueError(f"sphere at {s.center} leaves the scene bounds")
            if not all(0.0 <= v <= 1.0 for v in s.color):
                raise ValueError("sphere colors must lie in [0, 1]")

    @property
    def extent(self) -> float:
        """Largest absolute coordinate reachable inside the bounds."""
        return float(np.abs(np.asarray(self.bounds)).max())

    def to_dict(self) -> dict:
        return {
            "spheres": [
                {"center": list(s.center), "radius": s.radius, "color": list(s.color), "density": s.density}
                for s in self.spheres
            ],
            "bounds": [list(b) for b in self.bounds],
            "background": list(self.background),
        }

    @classmethod
    def from_dict(cls, d) -> "SceneSpec":
        spheres = tuple(
            Sphere(tuple(s["center"]), float(s["radius"]), tuple(s["color"]), float(s.get("density", 40.0)))
            for s in d.get("spheres", [])
        )
        kw = {"spheres": spheres}
        if "bounds" in d:
            kw["bounds"] = tuple(tuple(b) for b in d["bounds"])
        if "background" in d:
            kw["background"] = tuple(d["background"])
        return cls(**kw)


def two_sphere_scene() -> SceneSpec:
    return SceneSpec(spheres=(
        Sphere((-0.45, 0.0, 0.0), 0.55, (0.9, 0.25, 0.2)),
        Sphere((0.55, 0.2, 0.1), 0.4, (0.2, 0.5, 0.9)),
    ))


def scene_near_far(scene: SceneSpec, camera: Camera) -> tuple[float, float]:
    lo, hi = (np.asarray(b, dtype=np.float64) for b in scene.bounds)
    center = (lo + hi) / 2
    half_diag = float(np.linalg.norm(hi - lo)) / 2
    dist = float(np.linalg.norm(camera.origin - center))
    return max(dist - half_diag, 1e-3), dist + half_diag


def _interval_overlap(origins, dirs, edges, sphere: Sphere):
    # chord [t0, t1] of each ray through the sphere, intersected with each interval
    oc = np.asarray(sphere.center) - origins
    b = np.einsum("ij,ij->i", dirs, oc)
    disc = b * b - (np.einsum("ij,ij->i", oc, oc) - sphere.radius**2)
    root = np.sqrt(np.maximum(disc, 0.0))
    t0 = np.where(disc > 0, b - root, 0.0)[:, None]
    t1 = np.where(disc > 0, b + root, 0.0)[:, None]
    return np.clip(np.minimum(edges[:, 1:], t1) - np.maximum(edges[:, :-1], t0), 0.0, None)


def oracle_render(scene: SceneSpec, camera: Camera, n_samples: int = 512,
                  near: Optional[float] = None, far: Optional[float] = None) -> np.ndarray:
    """Ground-truth image by alpha compositing over ``n_samples`` equal intervals.

    The optical depth of every interval is integrated exactly from the
    sphere chords (no sampling noise at silhouettes); colors are the
    density-weighted mix of the spheres inside the interval. No RNG.
    """
    if near is None or far is None:
        near, far = scene_near_far(scene, camera)
    rays = generate_rays(camera, None, near, far)
    n = len(rays)
    edges = near + (far - near) * (np.arange(n_samples + 1) / n_samples)
    edges = np.broadcast_to(edges, (n, n_samples + 1))
    width = np.diff(edges, axis=1)
    tau = np.zeros((n, n_samples))
    mix = np.zeros((n, n_samples, 3))
    for s in scene.spheres:
        t = s.density * _interval_overlap(rays.origins, rays.directions, edges, s)
        tau += t
        mix += t[..., None] * np.asarray(s.color, dtype=np.float64)
    color = np.divide(mix, tau[..., None], out=np.zeros_like(mix), where=tau[..., None] > 0)
    out, _ = composite(tau / width, color, width, scene.background)
    return out.data.reshape(camera.height, camera.width, 3)


def circle_rig(n_views: int, radius: float = 4.0, elevation: float = 0.5, width: int = 32,
               height: int = 32, focal: Optional[float] = None) -> list[Camera]:
    """Cameras evenly spaced on a circle around the origin, all looking at it."""
    focal = focal if focal is not None else 1.2 * width
    cams = []
    for i in range(n_views):
        a = 2 * math.pi * i / n_views
        eye = (radius * math.cos(a), radius * math.sin(a), elevation)
        cams.append(Camera(width, height, focal, look_at(eye, (0.0, 0.0, 0.0))))
    return cams


def sphere_rig(n_views: int, radius: float = 4.0, width: int = 32, height: int = 32,
               focal: Optional[float] = None) -> list[Camera]:
    """Cameras on a Fibonacci spiral over the whole sphere, all looking at the origin.

    Unlike a single ring, the views differ in elevation, which pins down
    density above and below the equator.
    """
    focal = focal if focal is not None else 1.2 * width
    golden = math.pi * (3.0 - math.sqrt(5.0))
    cams = []
    for i in range(n_views):
        z = 1.0 - (2 * i + 1) / n_views
        r = math.sqrt(1.0 - z * z)
        eye = (radius * r * math.cos(golden * i), radius * r * math.sin(golden * i), radius * z)
        cams.append(Camera(width, height, focal, look_at(eye, (0.0, 0.0, 0.0))))
    return cams


# -- image datasets ---------------------------------------------------------


@dataclass
class ImageDataset:
    images: list  # per-view (H, W, 3) arrays in [0, 1]
    roles: list  # "train" | "test"
    cameras: Optional[list] = None  # None for 2D image-fitting tasks
    masks: Optional[list] = None  # per-view boolean (H, W) supervision masks, or None
    near: float = 2.0
    far: float = 6.0
    background: tuple = (0.0, 0.0, 0.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.images) != len(self.roles):
            raise ValueError("one role per image")
        for img in self.images:
            if img.ndim != 3 or img.shape[2] != 3:
                raise ValueError(f"images must be HxWx3, got {img.shape}")
            if np.any(img < 0) or np.any(img > 1):
                raise ValueError("pixel values must lie in [0, 1]")
        if self.masks is not None:
            for img, m in zip(self.images, self.masks):
                if m is not None and m.shape != img.shape[:2]:
                    raise ValueError("mask dimensions must match the image")

    @property
    def is_image_task(self) -> bool:
        return self.cameras is None

    def indices(self, role: str) -> list[int]:
        return [i for i, r in enumerate(self.roles) if r == role]

    def mask(self, i: int) -> np.ndarray:
        m = None if self.masks is None else self.masks[i]
        return np.ones(self.images[i].shape[:2], dtype=bool) if m is None else m


def image_task(image, meta: Optional[dict] = None) -> ImageDataset:
    """2D fitting task: a train view and a test view of the same image.

    Both start fully supervised; :func:`sparsify` holds pixels out of the
    train view and hands the complement to the test view.
    """
    img = np.asarray(image, dtype=np.float64)
    full = np.ones(img.shape[:2], dtype=bool)
    return ImageDataset([img.copy(), img.copy()], ["train", "test"], None, [full, full.copy()],
                        meta=dict(meta or {}))


def synthetic_image(size: int = 64, seed: int = 0) -> np.ndarray:
    """Mid-tone 8-bit test image with natural-image statistics.

    Smooth color gradients and a few hard-edged discs, plus a 1/f-spectrum
    texture so detail exists at every scale, quantized to k/255.
    """
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size] / size
    img = np.empty((size, size, 3))
    for c in range(3):
        fx, fy = rng.uniform(0.5, 2.0, 2)
        ph = rng.uniform(0, 2 * np.pi, 2)
        img[..., c] = 0.5 + 0.15 * np.sin(2 * np.pi * fx * x + ph[0]) * np.cos(2 * np.pi * fy * y + ph[1])
        img[..., c] += 0.05 * np.sin(2 * np.pi * rng.uniform(4, 7) * (x + y) + rng.uniform(0, 2 * np.pi))
    for _ in range(4):
        cx, cy = rng.uniform(0.15, 0.85, 2)
        r = rng.uniform(0.06, 0.16)
        inside = (x - cx) ** 2 + (y - cy) ** 2 < r * r
        img[inside] = rng.uniform(0.2, 0.8, 3)
    f = np.hypot(*np.meshgrid(np.fft.fftfreq(size), np.fft.fftfreq(size), indexing="ij"))
    f[0, 0] = np.inf
    spectrum = rng.normal(size=(size, size, 3)) + 1j * rng.normal(size=(size, size, 3))
    texture = np.fft.ifft2(spectrum / f[..., None], axes=(0, 1)).real
    img += 0.06 * texture / texture.std()
    return np.rint(np.clip(img, 0.0, 1.0) * 255) / 255


def split_by_index(n_views: int) -> tuple[list[int], list[int]]:
    """Views whose index is divisible by 10 go to test, the rest to train."""
    test = [i for i in range(n_views) if i % 10 == 0]
    train = [i for i in range(n_views) if i % 10 != 0]
    if n_views < 10:
        test, train = [], list(range(n_views))
        warnings.warn(f"only {n_views} views: test split is empty", stacklevel=2)
    return train, test


def scene_dataset(scene: SceneSpec, cameras: list, n_samples: int = 512,
                  near: Optional[float] = None, far: Optional[float] = None) -> ImageDataset:
    """Oracle-rendered views of ``scene`` with the divisible-by-10 split.

    ``near``/``far`` default to the tightest range enclosing the bounds box
    from every camera. Passing a tighter range keeps training samples out of
    space that few cameras observe; it must still enclose the spheres.
    """
    lo, hi = scene_near_far(scene, cameras[0])
    for cam in cameras[1:]:
        n2, f2 = scene_near_far(scene, cam)
        lo, hi = min(lo, n2), max(hi, f2)
    near = lo if near is None else float(near)
    far = hi if far is None else float(far)
    if not 0 < near < far:
        raise ValueError(f"need 0 < near < far, got {near}, {far}")
    for cam in cameras:
        for sph in scene.spheres:
            dist = float(np.linalg.norm(cam.origin - np.asarray(sph.center)))
            if dist - sph.radius < near or dist + sph.radius > far:
                raise ValueError(f"near/far range [{near}, {far}] cuts a sphere seen from a camera")
    images = [oracle_render(scene, cam, n_samples, near, far) for cam in cameras]
    train, _ = split_by_index(len(cameras))
    roles = ["train" if i in train else "test" for i in range(len(cameras))]
    return ImageDataset(images, roles, list(cameras), None, near, far, tuple(scene.background))


def inject_noise(ds: ImageDataset, std: float, seed: int) -> ImageDataset:
    """Add i.i.d. N(0, std^2) to every color value of the train views, then clip to [0, 1]."""
    if std < 0:
        raise ValueError("noise std must be >= 0")
    rng = np.random.default_rng(seed)
    images = []
    for img, role in zip(ds.images, ds.roles):
        if role == "train" and std > 0:
            img = np.clip(img + rng.normal(0.0, std, img.shape), 0.0, 1.0)
        images.append(img)
    return replace(ds, images=images, meta={**ds.meta, "noise_std": std, "noise_seed": seed})


def sparsify(ds: ImageDataset, keep_fraction: float, seed: int) -> ImageDataset:
    """Keep ceil(keep_fraction * n) train views (3D) or supervised train pixels (2D)."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    meta = {**ds.meta, "keep_fraction": keep_fraction, "sparsity_seed": seed}
    train = ds.indices("train")
    if ds.is_image_task:
        masks = [ds.mask(i).copy() for i in range(len(ds.images))]
        kept = []
        for i in train:
            pix = np.flatnonzero(masks[i])
            k = math.ceil(keep_fraction * pix.size)
            if k == 0:
                raise ValueError("sparsify would leave no training pixels")
            m = np.zeros(masks[i].size, dtype=bool)
            m[rng.choice(pix, size=k, replace=False)] = True
            masks[i] = m.reshape(masks[i].shape)
            kept.append(masks[i])
        if kept:
            union = np.logical_or.reduce(kept)
            for i in ds.indices("test"):
                masks[i] = ~union
        return replace(ds, masks=masks, meta=meta)
    k = math.ceil(keep_fraction * len(train))
    if k == 0:
        raise ValueError("sparsify would leave no training views")
    chosen = set(rng.choice(train, size=k, replace=False).tolist())
    keep = [i for i in range(len(ds.images)) if ds.roles[i] != "train" or i in chosen]
    pick = lambda xs: None if xs is None else [xs[i] for i in keep]  # noqa: E731
    return replace(ds, images=pick(ds.images), roles=pick(ds.roles), cameras=pick(ds.cameras),
                   masks=pick(ds.masks), meta=meta)


# -- PPM --------------------------------------------------------------------


def encode_ppm(image) -> bytes:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 image, got {img.shape}")
    if not np.all(np.isfinite(img)) or img.min() < 0 or img.max() > 1:
        raise ValueError("pixel values must lie in [0, 1]")
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.rint(img * 255).astype(np.uint8).tobytes()


_HEADER = re.compile(rb"(P[1-7])(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def decode_ppm(raw: bytes) -> np.ndarray:
    m = _HEADER.match(raw)
    if m is None:
        raise PPMFormatError("malformed PPM header")
    if m.group(1) != b"P6":
        raise PPMFormatError(f"unsupported PNM variant {m.group(1).decode()} (only binary P6)")
    w, h, maxval = (int(g) for g in m.groups()[1:])
    if maxval != 255:
        raise PPMFormatError(f"unsupported maxval {maxval} (only 255)")
    payload = raw[m.end():]
    if len(payload) < w * h * 3:
        raise PPMFormatError(f"truncated payload: {len(payload)} of {w * h * 3} bytes")
    data = np.frombuffer(payload[:w * h * 3], dtype=np.uint8)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


def write_ppm(path, image) -> None:
    Path(path).write_bytes(encode_ppm(image))


def read_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


# -- manifests --------------------------------------------------------------


def save_dataset(ds: ImageDataset, directory, extra: Optional[dict] = None) -> Path:
    """Write every view as PPM plus ``manifest.json``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    views = []
    for i, (img, role) in enumerate(zip(ds.images, ds.roles)):
        name = f"view_{i:03d}.ppm"
        write_ppm(out / name, img)
        v = {"file": name, "role": role}
        if ds.cameras is not None:
            v["camera"] = ds.cameras[i].to_dict()
        if ds.masks is not None and ds.masks[i] is not None:
            v["mask_pixels"] = np.flatnonzero(ds.masks[i]).tolist()
        views.append(v)
    manifest = {
        "kind": "image2d" if ds.is_image_task else "scene3d",
        "views": views,
        "near": ds.near,
        "far": ds.far,
        "background": list(ds.background),
        "meta": ds.meta,
        **(extra or {}),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def load_dataset(directory) -> ImageDataset:
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text())
    images, roles, cams, masks = [], [], [], []
    for v in manifest["views"]:
        img = read_ppm(root / v["file"])
        images.append(img)
        roles.append(v["role"])
        cams.append(Camera.from_dict(v["camera"]) if "camera" in v else None)
        if "mask_pixels" in v:
            m = np.zeros(img.shape[0] * img.shape[1], dtype=bool)
            m[v["mask_pixels"]] = True
            masks.append(m.reshape(img.shape[:2]))
        else:
            masks.append(None)
    image_task_ = manifest.get("kind") == "image2d"
    return ImageDataset(
        images, roles, None if image_task_ else cams,
        masks if any(m is not None for m in masks) else None,
        float(manifest.get("near", 2.0)), float(manifest.get("far", 6.0)),
        tuple(manifest.get("background", (0.0, 0.0, 0.0))), manifest.get("meta", {}),
    )
