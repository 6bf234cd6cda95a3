"""``leafwet`` command line: simulate, reconstruct, fuse, train, eval, crossval, synth.

Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 numeric error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import formats
from .config import RunConfig, dump_config, load_config
from .data import apply_eval_condition, make_sample, synth_dataset
from .errors import (ConfigError, DataError, DomainError, NumericError, StateError,
                     StratificationError)
from .fusion import cam, cnn_forward, mask_fuse
from .model import gray_world, predict
from .recon import depth_stack, normalize01
from .scene import RawDataCube, Scene, phase_compensate, read_scene, simulate_scan, wind_perturb
from .training import evaluate, format_summary, kfold_cv, summarize, train

log = logging.getLogger("leafwet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _run_config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _cube_from(path, run: RunConfig, compensated=False):
    data = formats.read_tensor(path)
    if data.dtype != np.complex128:
        raise DataError(f"{path}: raw cube must be c128, got {data.dtype}")
    try:
        return RawDataCube(data, run.dataset.geometry, run.dataset.radar, compensated)
    except (ConfigError, DomainError) as e:
        raise DataError(f"{path}: {e}") from None


def cmd_simulate(args):
    run = _run_config(args)
    path = args.scene or run.scene_file
    if path is None:
        raise UsageError("simulate needs --scene or [scene] scene_file in the config")
    scene = read_scene(path) if Path(path).exists() else _missing(path)
    raw = simulate_scan(scene, run.dataset.geometry, run.dataset.radar)
    if args.wind:
        raw = wind_perturb(raw, args.wind, args.seed)
    formats.write_tensor(raw.data, args.out)
    print(f"wrote {args.out}: cube {raw.data.shape} from {len(scene)} scatterers")


def _missing(path):
    raise DataError(f"{path}: no such file")


def cmd_reconstruct(args):
    run = _run_config(args)
    ds = run.dataset
    raw = _cube_from(args.cube, run)
    if not args.compensated:
        raw = phase_compensate(raw)
    z_min = ds.z_min if args.z_min is None else args.z_min
    z_max = ds.z_max if args.z_max is None else args.z_max
    step = ds.slice_step if args.step is None else args.step
    stack = depth_stack(raw, z_min, z_max, step)
    out = Path(args.out)
    formats.write_tensor(stack.array, out / "stack.hyt")
    formats.write_tensor(stack.depths, out / "depths.hyt")
    for i, s in enumerate(stack.slices):
        formats.write_pgm(normalize01(s.pixels), out / f"slice_{i:03d}.pgm")
    print(f"wrote {len(stack)} slices to {out}")


def cmd_fuse(args):
    params = formats.load_checkpoint(args.checkpoint)
    stack = formats.read_tensor(args.stack)
    if stack.ndim != 3:
        raise DataError(f"{args.stack}: expected a [S, H, W] stack")
    rgb = formats.read_ppm(args.rgb)
    if rgb.shape[1:] != stack.shape[1:]:
        raise DataError(f"camera image {rgb.shape[1:]} does not match SAR grid {stack.shape[1:]}")
    sar = np.stack([normalize01(s) for s in stack])
    cfg = params.config
    alpha = float(params["alpha"])
    fused = np.stack([mask_fuse(s, gray_world(rgb), alpha) for s in sar])
    out = Path(args.out)
    formats.write_tensor(fused, out / "fused.hyt")
    head = params["cls.w"]
    for i, f in enumerate(fused):
        formats.write_pgm(cam(cnn_forward(f, params), head), out / f"cam_{i:03d}.pgm")
    prob = float(predict(params, sar[None], rgb[None])[0])
    print(json.dumps(dict(p_wet=prob, label="wet" if prob > 0.5 else "dry", modality=cfg.modality)))


def _dataset(args, run):
    if getattr(args, "data", None):
        samples, _ = formats.load_dataset(args.data)
        return samples
    return synth_dataset(cfg=run.dataset)


def cmd_synth(args):
    run = _run_config(args)
    cfg = run.dataset
    n = cfg.n if args.n is None else args.n
    seed = cfg.seed if args.seed is None else args.seed
    samples = synth_dataset(n, cfg, seed)
    formats.save_dataset(samples, args.out, cfg)
    if args.images:
        for i, s in enumerate(samples):
            formats.write_ppm(s.rgb, Path(args.out) / f"s{i:04d}" / "rgb.ppm")
    print(f"wrote {len(samples)} samples to {args.out}")


def cmd_train(args):
    run = _run_config(args)
    samples = _dataset(args, run)
    params, history = train(samples, run.train, run.model)
    formats.save_checkpoint(params, args.out, extra=dict(config=dump_config(run)))
    formats.write_csv(history, Path(args.out) / "history.csv", ["phase", "epoch", "loss", "accuracy"])
    last = history[-1] if history else {}
    print(json.dumps(dict(checkpoint=str(args.out), epochs=len(history),
                          final_loss=last.get("loss"), final_accuracy=last.get("accuracy"))))


def cmd_eval(args):
    params = formats.load_checkpoint(args.checkpoint)
    samples, _ = formats.load_dataset(args.data)
    if args.blackout or args.wind:
        samples = apply_eval_condition(samples, rgb_blackout=args.blackout, wind_mm=args.wind, seed=args.seed)
    m = evaluate(params, samples)
    row = dict(m, blackout=bool(args.blackout), wind_mm=float(args.wind))
    formats.write_csv([row], args.out, ["accuracy", "tp", "tn", "fp", "fn", "n", "blackout", "wind_mm"])
    print(json.dumps(row))


def cmd_crossval(args):
    run = _run_config(args)
    samples = _dataset(args, run)
    k = run.cv.k if args.k is None else args.k
    repeats = run.cv.repeats if args.repeats is None else args.repeats
    rows, summary = kfold_cv(samples, k, repeats, run.cv.seed, run.train, run.model)
    formats.write_csv(rows, args.out, ["repeat", "fold", "accuracy", "tp", "tn", "fp", "fn", "n"])
    print(format_summary(summary))
    print(json.dumps(summary))


def build_parser():
    p = _Parser(prog="leafwet", description="Wet/dry leaf classification from simulated SAR and RGB.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)

    def add(name, fn, help, config=True):
        sp = sub.add_parser(name, help=help)
        if config:
            sp.add_argument("--config", help="run configuration file (defaults built in)")
        sp.set_defaults(fn=fn)
        return sp

    sp = add("simulate", cmd_simulate, "scene file -> raw cube")
    sp.add_argument("--scene")
    sp.add_argument("--out", required=True)
    sp.add_argument("--wind", type=float, default=0.0, help="range jitter amplitude, mm")
    sp.add_argument("--seed", type=int, default=0)

    sp = add("reconstruct", cmd_reconstruct, "raw cube -> depth stack + PGM slices")
    sp.add_argument("--cube", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--z-min", type=float)
    sp.add_argument("--z-max", type=float)
    sp.add_argument("--step", type=float)
    sp.add_argument("--compensated", action="store_true", help="cube is already phase compensated")

    sp = add("fuse", cmd_fuse, "depth stack + camera image -> fused tensors, CAMs, prediction", config=False)
    sp.add_argument("--stack", required=True)
    sp.add_argument("--rgb", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "train a model -> checkpoint directory")
    sp.add_argument("--data", help="dataset directory (synthesized from the config if omitted)")
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, "checkpoint + dataset -> metrics CSV", config=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--blackout", action="store_true", help="zero the camera images")
    sp.add_argument("--wind", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("crossval", cmd_crossval, "repeated stratified k-fold -> fold metrics CSV")
    sp.add_argument("--data")
    sp.add_argument("--out", required=True)
    sp.add_argument("--k", type=int)
    sp.add_argument("--repeats", type=int)

    sp = add("synth", cmd_synth, "synthetic dataset directory")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--images", action="store_true", help="also write each camera image as PPM")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.cmd is None:
            raise UsageError("a subcommand is required (see --help)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        args.fn(args)
        return EXIT_OK
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError, StateError, StratificationError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
