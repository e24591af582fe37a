"""Coordinate MLPs with a regression (3 logits) or classification (24 logits) head.

An image field maps a 2D point to a color. A radiance field maps a 3D point
and a view direction to a density and a color, with the direction entering
after the density branch.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Mapping, NamedTuple, Optional

import numpy as np

from .autodiff import Graph, Tensor, concat, relu, reshape, sigmoid, softplus
from .encoding import N_BITS, encoded_dim, positional_encode, probability_decode

HEADS = {"regressor3": 3, "classifier24": 3 * N_BITS}

CKPT_MAGIC = b"NFCKPT1\n"


class CheckpointFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    in_dim: int = 2
    pos_freqs: int = 10
    dir_freqs: int = 4
    include_input: bool = True
    widths: tuple = (128, 128, 128, 128)
    head: str = "regressor3"
    density: bool = False
    # positions are divided by this before positional encoding
    pos_scale: float = 1.0
    # initial density-logit bias; negative values start from nearly empty space
    sigma_bias_init: float = 0.0
    # False drops the view direction from the color branch (Lambertian scenes)
    view_dependent: bool = True

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not self.widths or any(w <= 0 for w in self.widths):
            raise ValueError("hidden widths must be positive")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {sorted(HEADS)}")
        if self.density and self.in_dim != 3:
            raise ValueError("a density branch needs 3D positions")

    @property
    def n_out(self) -> int:
        return HEADS[self.head]

    @property
    def is_classifier(self) -> bool:
        return self.head == "classifier24"

    def layer_shapes(self) -> list[tuple[str, tuple]]:
        """(name, shape) of every parameter in declaration order; the color head is last."""
        shapes = []
        fan_in = encoded_dim(self.in_dim, self.pos_freqs, self.include_input)
        for i, w in enumerate(self.widths):
            shapes += [(f"trunk{i}.w", (fan_in, w)), (f"trunk{i}.b", (w,))]
            fan_in = w
        if self.density:
            w = self.widths[-1]
            half = max(w // 2, 1)
            dir_dim = encoded_dim(3, self.dir_freqs, self.include_input) if self.view_dependent else 0
            shapes += [
                ("sigma.w", (w, 1)), ("sigma.b", (1,)),
                ("feature.w", (w, w)), ("feature.b", (w,)),
                ("view.w", (w + dir_dim, half)), ("view.b", (half,)),
            ]
            fan_in = half
        shapes += [("color.w", (fan_in, self.n_out)), ("color.b", (self.n_out,))]
        return shapes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "MlpSpec":
        return cls(**d)


@dataclass
class FieldModel:
    spec: MlpSpec
    seed: int
    params: dict = field(default_factory=dict)

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "FieldModel":
        return FieldModel(self.spec, self.seed, {k: v.copy() for k, v in self.params.items()})

    def bind(self, graph: Graph) -> dict:
        """Parameters as leaves of ``graph``, keyed by name."""
        return {k: graph.leaf(v) for k, v in self.params.items()}

    def constants(self) -> dict:
        return {k: Tensor(v) for k, v in self.params.items()}

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.params.values()])


def init_model(spec: MlpSpec, seed: int) -> FieldModel:
    """Glorot-uniform weights, zero biases (except the density bias, see ``sigma_bias_init``).

    Parameters are drawn in declaration order with the color head last, so two
    specs that differ only in head type share the trunk for the same seed.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in spec.layer_shapes():
        if name.endswith(".b"):
            params[name] = np.full(shape, spec.sigma_bias_init if name == "sigma.b" else 0.0, dtype=np.float64)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return FieldModel(spec, int(seed), params)


class FieldOutput(NamedTuple):
    color: Tensor  # (n, 3) in (0, 1)
    bits: Optional[Tensor]  # (n, 3, 8) bit probabilities, classifier head only


def _dense(p, name, x):
    return x @ p[name + ".w"] + p[name + ".b"]


def _trunk(p, spec: MlpSpec, x):
    h = Tensor(x)
    for i in range(len(spec.widths)):
        h = relu(_dense(p, f"trunk{i}", h))
    return h


def _color_head(p, spec: MlpSpec, h) -> FieldOutput:
    logits = _dense(p, "color", h)
    probs = sigmoid(logits)
    if not spec.is_classifier:
        return FieldOutput(probs, None)
    bits = reshape(probs, (-1, 3, N_BITS))
    return FieldOutput(probability_decode(bits), bits)


def _check_head(model: FieldModel, head: Optional[str]):
    if head is not None and head != model.spec.head:
        raise ValueError(f"requested {head} output but model has a {model.spec.head} head")


def eval_image_field(model: FieldModel, coords, params: Optional[dict] = None, head: Optional[str] = None) -> FieldOutput:
    """Colors at 2D points in [0, 1]^2.

    ``params`` defaults to the model's own arrays as constants; pass the
    result of :meth:`FieldModel.bind` to differentiate.
    """
    spec = model.spec
    _check_head(model, head)
    if spec.density or spec.in_dim != 2:
        raise ValueError("not an image-field model")
    coords = np.asarray(coords, dtype=np.float64)
    p = params if params is not None else model.constants()
    x = positional_encode(coords / spec.pos_scale, spec.pos_freqs, spec.include_input)
    return _color_head(p, spec, _trunk(p, spec, x))


def eval_radiance_field(model: FieldModel, positions, directions, params: Optional[dict] = None,
                        head: Optional[str] = None, dir_repeat: int = 1):
    """(density >= 0 of shape (n,), FieldOutput) at 3D points seen along unit directions.

    With ``dir_repeat`` = k each direction applies to k consecutive positions,
    so rays can pass one direction for all of their samples.
    """
    spec = model.spec
    _check_head(model, head)
    if not spec.density:
        raise ValueError("not a radiance-field model")
    positions = np.asarray(positions, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    if np.any(np.abs(np.linalg.norm(directions, axis=-1) - 1.0) > 1e-6):
        raise ValueError("view directions must be unit length")
    p = params if params is not None else model.constants()
    x = positional_encode(positions / spec.pos_scale, spec.pos_freqs, spec.include_input)
    h = _trunk(p, spec, x)
    sigma = reshape(softplus(_dense(p, "sigma", h)), (-1,))
    if len(directions) * dir_repeat != len(positions):
        raise ValueError(f"{len(positions)} positions but {len(directions) * dir_repeat} directions")
    feat = _dense(p, "feature", h)
    if spec.view_dependent:
        d = positional_encode(directions, spec.dir_freqs, spec.include_input)
        if dir_repeat != 1:
            d = np.repeat(d, dir_repeat, axis=0)
        feat = concat([feat, Tensor(d)], axis=-1)
    v = relu(_dense(p, "view", feat))
    return sigma, _color_head(p, spec, v)


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(path, model: FieldModel, iteration: int = 0) -> None:
    """Magic line, u64 LE header length, JSON header, then LE float64 parameters."""
    header = {
        "spec": model.spec.to_dict(),
        "seed": model.seed,
        "iteration": int(iteration),
        "params": [[k, list(v.shape)] for k, v in model.params.items()],
    }
    head = json.dumps(header, sort_keys=True).encode()
    blob = model.flat().astype("<f8").tobytes()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        f.write(blob)


def load_checkpoint(path) -> tuple[FieldModel, int]:
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(CKPT_MAGIC):
        raise CheckpointFormatError(f"{path}: not a checkpoint file")
    pos = len(CKPT_MAGIC)
    try:
        (n,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        header = json.loads(raw[pos:pos + n])
        pos += n
        values = np.frombuffer(raw, dtype="<f8", offset=pos)
        spec = MlpSpec.from_dict(header["spec"])
    except (struct.error, ValueError, KeyError, TypeError) as e:
        raise CheckpointFormatError(f"{path}: corrupt header ({e})") from None
    params = {}
    off = 0
    for name, shape in header["params"]:
        size = int(np.prod(shape))
        if off + size > values.size:
            raise CheckpointFormatError(f"{path}: truncated parameter blob")
        params[name] = values[off:off + size].reshape(shape).astype(np.float64)
        off += size
    if off != values.size:
        raise CheckpointFormatError(f"{path}: trailing bytes after parameters")
    return FieldModel(spec, header["seed"], params), header["iteration"]
