"""Command-line front end: ``nfc fit|compare|sweep-lambda|make-data|render``.

Exit codes: 0 success, 2 config error, 3 numerical abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .datasets import PPMFormatError, write_ppm
from .experiments import ConfigError, compare, fit, format_table, load_config, make_data, sweep_lambda
from .fields import CheckpointFormatError, eval_image_field, load_checkpoint
from .rendering import Camera, render_image
from .training import NumericalError, pixel_coords

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _cmd_fit(args) -> int:
    cfg = load_config(args.config)
    res = fit(cfg, out=Path(cfg.output))
    print(f"{cfg.train.mode}: test PSNR {res.evaluation.psnr:.2f} dB, SSIM {res.evaluation.ssim:.4f} -> {cfg.output}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = load_config(args.config)
    table = compare(cfg, Path(cfg.output))
    print(format_table(table), end="")
    if args.json:
        print(json.dumps(table, sort_keys=True))
    return EXIT_OK


def _parse_lambdas(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--lambdas must be a comma-separated list of numbers, got {text!r}") from None


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    sweep_lambda(cfg, _parse_lambdas(args.lambdas), Path(cfg.output))
    print((Path(cfg.output) / "sweep.txt").read_text(), end="")
    return EXIT_OK


def _cmd_make_data(args) -> int:
    cfg = load_config(args.spec)
    path = make_data(cfg)
    manifest = json.loads(path.read_text())
    roles = [v["role"] for v in manifest["views"]]
    print(f"wrote {len(roles)} views ({roles.count('train')} train, {roles.count('test')} test) to {path.parent}")
    return EXIT_OK


def _cmd_render(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    try:
        cam = json.loads(Path(args.camera).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{args.camera}: not valid JSON ({e})") from None
    if model.spec.density:
        try:
            camera = Camera.from_dict(cam)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid camera: {e}") from None
        bg = tuple(cam.get("background", (0.0, 0.0, 0.0)))
        img = render_image(model, camera, args.samples, bg, cam.get("near", 2.0), cam.get("far", 6.0))
    else:
        if "width" not in cam or "height" not in cam:
            raise ConfigError("image-field render needs 'width' and 'height'")
        h, w = int(cam["height"]), int(cam["width"])
        img = eval_image_field(model, pixel_coords(h, w)).color.data.reshape(h, w, 3)
    write_ppm(args.out, np.clip(img, 0.0, 1.0))
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nfc", description="Neural field regression vs classification experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fit", help="train and evaluate one model")
    s.add_argument("config")
    s.set_defaults(func=_cmd_fit)

    s = sub.add_parser("compare", help="regression vs classification on identical data and seed")
    s.add_argument("config")
    s.add_argument("--json", action="store_true", help="also print the table as JSON")
    s.set_defaults(func=_cmd_compare)

    s = sub.add_parser("sweep-lambda", help="one classification run per lambda plus a regression baseline")
    s.add_argument("config")
    s.add_argument("--lambdas", default="0.1,1,10,100")
    s.set_defaults(func=_cmd_sweep)

    s = sub.add_parser("make-data", help="write a dataset directory (PPM views + manifest)")
    s.add_argument("spec")
    s.set_defaults(func=_cmd_make_data)

    s = sub.add_parser("render", help="render a checkpoint from a camera file")
    s.add_argument("checkpoint")
    s.add_argument("camera")
    s.add_argument("--out", default="render.ppm")
    s.add_argument("--samples", type=int, default=64)
    s.set_defaults(func=_cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, PPMFormatError, CheckpointFormatError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
