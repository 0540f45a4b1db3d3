"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, pipeline
from .config import PROFILES, load_run_config
from .containers import (
    read_array,
    read_image,
    read_mask,
    read_sinogram,
    write_array,
    write_image,
    write_mask,
    write_sinogram,
)
from .learned import TrainingError, load_checkpoint, save_checkpoint, train
from .learned.checkpoint import CheckpointError
from .projector import Sinogram, apply_mask
from .recon import fbp, segment_metal
from .render import auto_window, render
from .scene import (
    PlacementError,
    SceneSpec,
    build_material_table,
    insert_metals,
    load_material_table,
    sample_scene,
    save_material_table,
)

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("ctmar")


def _table(args):
    return load_material_table(args.materials) if getattr(args, "materials", None) else build_material_table()


def _dump(obj, path=None):
    text = json.dumps(obj, indent=1, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def cmd_gen_materials(args, cfg):
    save_material_table(build_material_table(), args.out)


def cmd_gen_dataset(args, cfg):
    m = pipeline.gen_dataset(
        args.n_scenes,
        args.out,
        cfg,
        args.seed,
        max_metals=args.max_metals if args.max_metals is not None else cfg.max_metals,
        flips=args.flips,
        threads=args.threads,
        table=_table(args),
    )
    log.info("wrote %d entries to %s", len(m.entries), args.out)


def cmd_simulate(args, cfg):
    table = _table(args)
    if args.scene:
        scene = SceneSpec.from_dict(json.loads(Path(args.scene).read_text()))
    else:
        seeds = pipeline.scene_seeds(args.seed, 0)
        scene = sample_scene(cfg.scene_config(), seeds[1], table)
        if args.metals:
            scene = insert_metals(scene, args.metals, seeds[3], cfg.metal_config(), table)
    scan = pipeline.simulate_scene(scene, cfg, args.seed, table, args.threads)
    write_sinogram(args.out, scan.measurement)
    if args.scene_out:
        _dump(scene.to_dict(), args.scene_out)
    if args.metal_mask_out:
        write_mask(args.metal_mask_out, scan.metal_mask)


def cmd_fbp(args, cfg):
    sino = read_sinogram(args.sinogram)
    geometry = sino.geometry or cfg.geometry
    write_image(args.out, fbp(sino, geometry, cfg.fbp_config(), args.threads))


def cmd_segment(args, cfg):
    image = read_image(args.image)
    write_mask(args.out, segment_metal(image, args.threshold, args.erode, args.dilate))


def _generator(path):
    gen, _, _ = load_checkpoint(path) if path else (None, None, None)
    return gen


def cmd_mar(args, cfg):
    sino = read_sinogram(args.sinogram)
    oracle = read_mask(args.oracle_mask) if args.oracle_mask else None
    reference = read_sinogram(args.reference) if args.reference else None
    res = pipeline.run_mar(sino, args.method, cfg, _generator(args.checkpoint), oracle, reference, args.threads)
    write_image(args.out, res.recon)
    if args.out_sinogram:
        write_sinogram(args.out_sinogram, res.completed)
    if args.out_mask:
        write_mask(args.out_mask, res.sinogram_mask, cfg.geometry)
    if res.metrics:
        _dump(res.metrics)


def cmd_train(args, cfg):
    data = pipeline.load_dataset(args.dataset, cfg.network_shape)
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.l2_reduction:
        overrides["l2_reduction"] = args.l2_reduction
    if args.adv_variant:
        overrides["g_adv_variant"] = args.adv_variant
    schedule = cfg.schedule(args.seed, **overrides)
    res = train(data.x, data.y, data.mask, schedule, cfg.generator_spec(), cfg.discriminator_spec())
    save_checkpoint(args.out, res.generator, res.discriminator, schedule, res.iterations)
    if args.log:
        res.log.write_csv(args.log)


def cmd_infer(args, cfg):
    sino = read_sinogram(args.sinogram)
    mask = read_mask(args.mask)
    gen = _generator(args.checkpoint)
    values = pipeline.learned_completer(gen)(apply_mask(sino, mask).values, mask)
    write_sinogram(args.out, Sinogram(values, sino.unit, sino.geometry))


def _load_any(path):
    with open(path, "rb") as f:
        head = f.read(8)
    if head.startswith(b"SINO1\n"):
        return read_sinogram(path).values
    if head.startswith(b"MASK1\n"):
        return read_mask(path).astype(np.float32)
    return read_array(path)[0]


def cmd_metrics(args, cfg):
    ref, test = _load_any(args.reference), _load_any(args.test)
    out = {"mse": analysis.mse(ref, test), "psnr": analysis.psnr(ref, test)}
    if min(ref.shape) >= 11 and ref.max() > ref.min():
        out["ssim"] = analysis.ssim(ref, test)
    if args.mask:
        out["masked_mse"] = analysis.masked_mse(ref, test, read_mask(args.mask))
    _dump(out, args.out)


def cmd_attention(args, cfg):
    sino = read_sinogram(args.sinogram)
    mask = read_mask(args.mask)
    ref = read_sinogram(args.reference)
    gen = _generator(args.checkpoint)
    complete = pipeline.completer_for(args.method, gen, gen.input_hw if gen else None)
    acfg = analysis.AttentionConfig(args.patch, args.stride, args.seed, not args.whole)
    amap = analysis.attention_map(complete, apply_mask(sino, mask).values, mask, ref.values, acfg, args.threads)
    write_array(
        args.out,
        amap.values,
        kind="attention_log10_mse",
        patch=args.patch,
        stride=args.stride,
        seed=args.seed,
        baseline=amap.baseline,
    )
    if args.png:
        render(amap.values, auto_window(amap.values), args.png)


def cmd_render(args, cfg):
    values = _load_any(args.input)
    window = tuple(args.window) if args.window else auto_window(values)
    render(values, window, args.out)


def build_parser():
    p = argparse.ArgumentParser(prog="ctmar", description="CT metal artifact reduction toolkit")
    p.add_argument("--config", help="JSON file of run-config overrides")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-materials", help="write the built-in material table")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_materials)

    s = sub.add_parser("gen-dataset", help="simulate training pairs")
    s.add_argument("n_scenes", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--max-metals", type=int)
    s.add_argument("--flips", action="store_true")
    s.add_argument("--materials")
    s.set_defaults(func=cmd_gen_dataset)

    s = sub.add_parser("simulate", help="measure one scene")
    s.add_argument("--scene", help="scene JSON; sampled from --seed when omitted")
    s.add_argument("--metals", type=int, default=0, help="metals to insert into a sampled scene")
    s.add_argument("--out", required=True)
    s.add_argument("--scene-out")
    s.add_argument("--metal-mask-out")
    s.add_argument("--materials")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fbp", help="reconstruct a sinogram")
    s.add_argument("sinogram")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fbp)

    s = sub.add_parser("segment", help="threshold-and-morphology metal segmentation")
    s.add_argument("image")
    s.add_argument("--out", required=True)
    s.add_argument("--threshold", type=float, default=4000.0)
    s.add_argument("--erode", type=int, default=2)
    s.add_argument("--dilate", type=int, default=4)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("mar", help="run metal artifact reduction end to end")
    s.add_argument("sinogram")
    s.add_argument("--method", choices=pipeline.METHODS, default="li")
    s.add_argument("--checkpoint")
    s.add_argument("--oracle-mask")
    s.add_argument("--reference", help="metal-free sinogram for error metrics")
    s.add_argument("--out", required=True)
    s.add_argument("--out-sinogram")
    s.add_argument("--out-mask")
    s.set_defaults(func=cmd_mar)

    s = sub.add_parser("train", help="train the CGAN on a dataset")
    s.add_argument("dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--log", help="loss log CSV")
    s.add_argument("--epochs", type=int)
    s.add_argument("--l2-reduction", choices=("sum", "mean"))
    s.add_argument("--adv-variant", choices=("non_saturating", "minimax_literal"))
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="complete a masked sinogram with a checkpoint")
    s.add_argument("sinogram")
    s.add_argument("mask")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("metrics", help="MSE / PSNR / SSIM between two containers")
    s.add_argument("reference")
    s.add_argument("test")
    s.add_argument("--mask")
    s.add_argument("--out")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("attention", help="occlusion attention map")
    s.add_argument("sinogram")
    s.add_argument("mask")
    s.add_argument("reference")
    s.add_argument("--method", choices=("li", "wnn", "learned"), default="li")
    s.add_argument("--checkpoint")
    s.add_argument("--patch", type=int, default=11)
    s.add_argument("--stride", type=int, default=6)
    s.add_argument("--whole", action="store_true", help="score the whole sinogram, not just masked bins")
    s.add_argument("--out", required=True)
    s.add_argument("--png")
    s.set_defaults(func=cmd_attention)

    s = sub.add_parser("render", help="render a container to PNG/PGM")
    s.add_argument("input")
    s.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_run_config(args.profile, args.config)
        args.func(args, cfg)
    except (TrainingError, FloatingPointError) as e:
        print(f"error: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, TypeError, PlacementError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
