"""Config-driven experiment harness: fit, regression-vs-classification comparison, lambda sweeps.

A config is a plain JSON object::

    {
      "task": "image2d" | "scene3d",
      "data": {...},            # see build_dataset
      "model": {...},           # MlpSpec fields, all optional
      "train": {...},           # TrainConfig fields, all optional
      "corruption": {"noise_std": 0.0, "keep_fraction": 1.0, "seed": 0},
      "eval": {"n_samples": 64},
      "output": "runs/example"
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np

from .datasets import (
    ImageDataset,
    SceneSpec,
    circle_rig,
    image_task,
    inject_noise,
    load_dataset,
    read_ppm,
    save_dataset,
    scene_dataset,
    sparsify,
    sphere_rig,
    synthetic_image,
    two_sphere_scene,
    write_ppm,
)
from .fields import HEADS, MlpSpec, init_model, save_checkpoint
from .training import TRAIN_MODES, Evaluation, LogRecord, TrainConfig, evaluate, render_view, train

TASKS = ("image2d", "scene3d")
REQUIRED = ("task", "data", "output")


class ConfigError(ValueError):
    pass


@dataclass
class Corruption:
    noise_std: float = 0.0
    keep_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise_std <= 1.0:
            raise ValueError("noise_std must lie in [0, 1]")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError("keep_fraction must lie in (0, 1]")


@dataclass
class ExperimentConfig:
    task: str
    data: dict
    output: str
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    corruption: Corruption = field(default_factory=Corruption)
    eval_samples: int = 64

    def model_spec(self, head: Optional[str] = None) -> MlpSpec:
        base = {"in_dim": 2} if self.task == "image2d" else {"in_dim": 3, "density": True}
        spec = {**base, **self.model}
        if "widths" in spec:
            spec["widths"] = tuple(spec["widths"])
        spec["head"] = head or spec.get("head") or TrainConfig.default_head(self.train.mode)
        return MlpSpec(**spec)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "data": self.data,
            "output": self.output,
            "model": self.model,
            "train": self.train.to_dict(),
            "corruption": vars(self.corruption).copy(),
            "eval": {"n_samples": self.eval_samples},
        }


def _section(raw: dict, key: str, cls):
    sub = raw.get(key, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"'{key}' must be an object")
    known = {f.name for f in fields(cls)}
    extra = sorted(set(sub) - known - {"lambda"})
    if extra:
        raise ConfigError(f"unknown key(s) in '{key}': {', '.join(extra)}")
    sub = dict(sub)
    if "lambda" in sub:
        sub["lam"] = sub.pop("lambda")
    try:
        return cls(**sub)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid '{key}': {e}") from None


def parse_config(raw: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Validate a config object; relative paths resolve against ``base_dir``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key '{key}'")
    if raw["task"] not in TASKS:
        raise ConfigError(f"'task' must be one of {TASKS}, got {raw['task']!r}")
    if not isinstance(raw["data"], dict):
        raise ConfigError("'data' must be an object")
    base = Path(base_dir) if base_dir is not None else Path(".")
    data = dict(raw["data"])
    for k in ("image", "dataset"):
        if k in data:
            data[k] = str(base / data[k])
    cfg = ExperimentConfig(
        task=raw["task"],
        data=data,
        output=str(base / raw["output"]),
        model=dict(raw.get("model", {})),
        train=_section(raw, "train", TrainConfig),
        corruption=_section(raw, "corruption", Corruption),
        eval_samples=int(raw.get("eval", {}).get("n_samples", 64)),
    )
    try:
        spec = cfg.model_spec()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid 'model': {e}") from None
    if spec.head not in HEADS:
        raise ConfigError(f"unknown head {spec.head!r}")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    return parse_config(raw, path.parent)


# -- data -------------------------------------------------------------------


def build_dataset(cfg: ExperimentConfig) -> ImageDataset:
    """Dataset for ``cfg`` with its corruption applied.

    ``data`` takes one of:
      {"dataset": dir}                     a directory written by make-data
      {"image": path.ppm}                  (image2d) fit a single image
      {"synthetic": {"size": 64, "seed": 0}}  (image2d) built-in test image
      {"scene": "two_spheres" | SceneSpec, "views": 20, "width": 32, "height": 32,
       "focal": 1.2 * width, "rig": "ring" | "sphere", "radius": 4.0, "elevation": 0.5,
       "near": auto, "far": auto, "background": [r, g, b], "oracle_samples": 512}
                                           (scene3d; elevation is ring-only)
    """
    d = cfg.data
    if "dataset" in d:
        ds = load_dataset(d["dataset"])
        if ds.is_image_task != (cfg.task == "image2d"):
            raise ConfigError(f"dataset {d['dataset']} does not hold a {cfg.task} task")
    elif cfg.task == "image2d":
        if "image" in d:
            img = read_ppm(d["image"])
        elif "synthetic" in d:
            s = d["synthetic"] or {}
            img = synthetic_image(int(s.get("size", 64)), int(s.get("seed", 0)))
        else:
            raise ConfigError("image2d 'data' needs one of 'dataset', 'image', 'synthetic'")
        ds = image_task(img)
    else:
        if "scene" not in d:
            raise ConfigError("scene3d 'data' needs 'dataset' or 'scene'")
        scene = two_sphere_scene() if d["scene"] == "two_spheres" else SceneSpec.from_dict(d["scene"])
        if "background" in d:
            bg = d["background"]
            if not (isinstance(bg, list) and len(bg) == 3 and all(0 <= float(c) <= 1 for c in bg)):
                raise ConfigError(f"data.background must be three values in [0, 1], got {bg!r}")
            scene = replace(scene, background=tuple(float(c) for c in bg))
        focal = d.get("focal")
        focal = None if focal is None else float(focal)
        n, radius = int(d.get("views", 20)), float(d.get("radius", 4.0))
        width = int(d.get("width", 32))
        height = int(d.get("height", width))
        rig = d.get("rig", "ring")
        if rig == "ring":
            cams = circle_rig(n, radius, float(d.get("elevation", 0.5)), width, height, focal)
        elif rig == "sphere":
            cams = sphere_rig(n, radius, width, height, focal)
        else:
            raise ConfigError(f"data.rig must be 'ring' or 'sphere', got {rig!r}")
        try:
            ds = scene_dataset(scene, cams, int(d.get("oracle_samples", 512)), d.get("near"), d.get("far"))
        except ValueError as e:
            raise ConfigError(f"data: {e}") from None
        ds = replace(ds, meta={**ds.meta, "scene": scene.to_dict()})
    c = cfg.corruption
    if c.keep_fraction < 1.0:
        ds = sparsify(ds, c.keep_fraction, c.seed)
    if c.noise_std > 0:
        ds = inject_noise(ds, c.noise_std, c.seed)
    return ds


def make_data(cfg: ExperimentConfig) -> Path:
    """Write the corrupted dataset of ``cfg`` to its output directory."""
    ds = build_dataset(cfg)
    return save_dataset(ds, cfg.output, {"corruption": vars(cfg.corruption).copy()})


# -- runs ---------------------------------------------------------------------


class FitResult(NamedTuple):
    model: object
    logs: list
    evaluation: Evaluation
    config: ExperimentConfig


def _finite(x: float):
    return x if math.isfinite(x) else None


def metrics_dict(res: FitResult, view_ids, split: str) -> dict:
    """Deterministic summary of a run (no wall-clock values)."""
    ev = res.evaluation
    t = res.config.train
    last = res.logs[-1]
    return {
        "mode": t.mode,
        "head": res.model.spec.head,
        "lambda": t.lam,
        "seed": t.seed,
        "iterations": t.iterations,
        "split": split,
        "psnr": ev.psnr,
        "ssim": ev.ssim,
        "views": [{"view": i, "psnr": v.psnr, "ssim": v.ssim, "pixels": v.pixels}
                  for i, v in zip(view_ids, ev.views)],
        "final": {"train_psnr": last.train_psnr, "test_psnr": _finite(last.test_psnr),
                  "mse": last.mse, "cls": last.cls, "total": last.total},
    }


def fit(cfg: ExperimentConfig, ds: Optional[ImageDataset] = None, head: Optional[str] = None,
        out: Optional[Path] = None, on_record: Optional[Callable[[LogRecord], None]] = None) -> FitResult:
    """Train and evaluate one model; write artifacts to ``out`` when given.

    The model is initialized from ``train.seed`` so that runs differing only in
    head share their trunk weights.
    """
    ds = build_dataset(cfg) if ds is None else ds
    model = init_model(cfg.model_spec(head), cfg.train.seed)
    log_file = None
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        log_file = open(out / "log.jsonl", "w")

    def record(rec: LogRecord):
        if log_file is not None:
            log_file.write(rec.to_json() + "\n")
            log_file.flush()
        if on_record is not None:
            on_record(rec)

    try:
        model, logs = train(model, ds, cfg.train, record)
    finally:
        if log_file is not None:
            log_file.close()
    split = "test" if ds.indices("test") else "train"
    ev = evaluate(model, ds, split, cfg.eval_samples)
    res = FitResult(model, logs, ev, cfg)
    if out is not None:
        save_checkpoint(out / "model.ckpt", model, cfg.train.iterations)
        for i in ds.indices(split):
            write_ppm(out / f"test_{i}.ppm", np.clip(render_view(model, ds, i, cfg.eval_samples), 0.0, 1.0))
        write_json(out / "metrics.json", metrics_dict(res, ds.indices(split), split))
    return res


def _nfc_mode(cfg: ExperimentConfig) -> str:
    return cfg.train.mode if cfg.train.mode != "nfr" else "nfc-channelwise"


def compare(cfg: ExperimentConfig, out: Optional[Path] = None) -> dict:
    """NFR and NFC on the same data, seed and trunk initialization.

    The regression row always uses a 3-logit head. The classification row uses
    the configured head, or the mode's default head when none is configured.
    """
    ds = build_dataset(cfg)
    out = Path(out) if out is not None else None
    reg_cfg = replace(cfg, train=replace(cfg.train, mode="nfr"))
    cls_cfg = replace(cfg, train=replace(cfg.train, mode=_nfc_mode(cfg)))
    head = cfg.model.get("head") or TrainConfig.default_head(cls_cfg.train.mode)
    reg = fit(reg_cfg, ds, "regressor3", out / "regression" if out else None)
    cla = fit(cls_cfg, ds, head, out / "classification" if out else None)
    table = comparison_table(reg.evaluation, cla.evaluation)
    table["gap"] = {
        "Regression": reg.logs[-1].train_psnr - reg.logs[-1].test_psnr,
        "Classification": cla.logs[-1].train_psnr - cla.logs[-1].test_psnr,
    }
    if out is not None:
        write_json(out / "compare.json", table)
        (out / "compare.txt").write_text(format_table(table))
    return table


def comparison_table(reg: Evaluation, cla: Evaluation) -> dict:
    rows = {"Regression": {"PSNR": reg.psnr, "SSIM": reg.ssim},
            "Classification": {"PSNR": cla.psnr, "SSIM": cla.ssim}}
    best = {}
    for col in ("PSNR", "SSIM"):
        a, b = rows["Regression"][col], rows["Classification"][col]
        best[col] = "tie" if a == b else ("Regression" if a > b else "Classification")
    return {"rows": rows, "best": best}


def format_table(table: dict) -> str:
    lines = [f"{'':16s}{'PSNR':>10s}{'SSIM':>10s}"]
    for name, row in table["rows"].items():
        cells = []
        for col, fmt in (("PSNR", "{:.2f}"), ("SSIM", "{:.4f}")):
            mark = "*" if table["best"][col] == name else " "
            cells.append(f"{fmt.format(row[col]) + mark:>10s}")
        lines.append(f"{name:16s}" + "".join(cells))
    lines.append("* better value per column")
    return "\n".join(lines) + "\n"


def sweep_lambda(cfg: ExperimentConfig, lambdas, out: Optional[Path] = None) -> dict:
    """One NFC run per lambda (ascending) plus an NFR baseline, all on the same data and seed."""
    lambdas = sorted(float(x) for x in lambdas)
    if not lambdas or any(not (x > 0 and math.isfinite(x)) for x in lambdas):
        raise ConfigError("lambdas must be finite and > 0")
    ds = build_dataset(cfg)
    out = Path(out) if out is not None else None
    base = fit(replace(cfg, train=replace(cfg.train, mode="nfr")), ds, "regressor3",
               out / "baseline" if out else None)
    entries = []
    for lam in lambdas:
        c = replace(cfg, train=replace(cfg.train, mode=_nfc_mode(cfg), lam=lam))
        head = cfg.model.get("head") or TrainConfig.default_head(c.train.mode)
        r = fit(c, ds, head, out / f"lambda_{lam:g}" if out else None)
        entries.append({"lambda": lam, "psnr": r.evaluation.psnr, "ssim": r.evaluation.ssim})
    result = {"baseline": {"psnr": base.evaluation.psnr, "ssim": base.evaluation.ssim}, "entries": entries}
    if out is not None:
        write_json(out / "sweep.json", result)
        (out / "sweep.txt").write_text(format_sweep(result))
    return result


def format_sweep(result: dict, width: int = 40) -> str:
    vals = [e["psnr"] for e in result["entries"]] + [result["baseline"]["psnr"]]
    lo, hi = min(vals) - 0.5, max(vals) + 0.5
    bar = lambda v: "#" * max(1, round((v - lo) / (hi - lo) * width))  # noqa: E731
    lines = [f"{'lambda':>10s} {'PSNR':>8s} {'SSIM':>7s}"]
    for e in result["entries"]:
        lines.append(f"{e['lambda']:>10g} {e['psnr']:8.2f} {e['ssim']:7.4f} {bar(e['psnr'])}")
    b = result["baseline"]
    lines.append(f"{'NFR':>10s} {b['psnr']:8.2f} {b['ssim']:7.4f} {bar(b['psnr'])}")
    return "\n".join(lines) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n")


__all__ = [
    "TASKS", "TRAIN_MODES", "ConfigError", "Corruption", "ExperimentConfig", "parse_config",
    "load_config", "build_dataset", "make_data", "fit", "FitResult", "compare", "sweep_lambda",
    "comparison_table", "format_table", "format_sweep", "metrics_dict", "write_json",
]
