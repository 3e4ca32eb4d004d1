"""Command-line surface: fuse, eval, render, synth, inspect, plan.

Exit codes: 0 success, 2 input/validation error, 3 internal error. Every
failure writes one JSON object per line to stderr, so batch drivers can
parse outcomes without scraping prose.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fusion, metrics, palette, synth, tiling
from .errors import EngineError, FormatError, TruncatedError, ValidationError
from .interchange import (
    ClassTable,
    LabelMap,
    read_bundle_file,
    read_label_map_file,
    write_bundle_file,
    write_label_map_file,
)

log = logging.getLogger("ovfuse")


def _emit_error(kind: str, message: str, **context) -> None:
    obj = {"error": kind, "message": message}
    if context:
        obj["context"] = context
    print(json.dumps(obj), file=sys.stderr)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{what} not found: {path}")
    return p


def _load_config(args) -> fusion.FusionConfig:
    if getattr(args, "config", None):
        config = fusion.FusionConfig.from_file(_require_file(args.config, "config file"))
    else:
        config = fusion.FusionConfig()
    if args.tau is not None:
        config.tau = args.tau
    if args.instance_conf_threshold is not None:
        config.instance_conf_threshold = args.instance_conf_threshold
    if args.no_presence:
        config.presence_gating = False
    return fusion.FusionConfig(
        tau=config.tau,
        instance_conf_threshold=config.instance_conf_threshold,
        presence_gating=config.presence_gating,
    )


def _is_sov3(path: Path) -> bool:
    with open(path, "rb") as f:
        return f.read(4) == b"SOV3"


def _fuse_manifest(manifest_path: Path, classes, config, threads: int) -> LabelMap:
    manifest = tiling.read_tile_manifest(manifest_path)
    grid = manifest.grid
    paths = manifest.resolved_paths(manifest_path)

    def tile_bundles():
        for window, path in zip(grid.tiles, paths):
            bundle = read_bundle_file(_require_file(str(path), "tile bundle"))
            x0, y0, x1, y1 = window
            if (bundle.height, bundle.width) != (y1 - y0, x1 - x0):
                raise ValidationError(
                    f"bundle {path} is {bundle.height}x{bundle.width}, window {window} "
                    f"needs {y1 - y0}x{x1 - x0}"
                )
            yield bundle

    if grid.overlap == 0:
        tiles = (
            fusion.run_pipeline(b, classes, config, threads=threads) for b in tile_bundles()
        )
        return tiling.stitch_labels(grid, tiles)
    stacks = (
        fusion.category_maps(b, classes, config, threads=threads) for b in tile_bundles()
    )
    canvases = tiling.stitch_probs(grid, stacks)
    return fusion.label_argmax(canvases, classes, config.tau)


def _fuse_single(bundle_path: Path, classes, config, args) -> LabelMap:
    bundle = read_bundle_file(bundle_path)
    tile_size = args.tile_size or 0
    if tile_size and (bundle.height > tile_size or bundle.width > tile_size):
        grid = tiling.plan_tiles(bundle.height, bundle.width, tile_size, args.overlap)
        if grid.overlap == 0:
            tiles = (
                fusion.run_pipeline(
                    tiling.crop_bundle(bundle, win), classes, config, threads=args.threads
                )
                for win in grid.tiles
            )
            return tiling.stitch_labels(grid, tiles)
        stacks = (
            fusion.category_maps(
                tiling.crop_bundle(bundle, win), classes, config, threads=args.threads
            )
            for win in grid.tiles
        )
        canvases = tiling.stitch_probs(grid, stacks)
        return fusion.label_argmax(canvases, classes, config.tau)
    return fusion.run_pipeline(bundle, classes, config, threads=args.threads)


def cmd_fuse(args) -> int:
    classes = ClassTable.from_file(_require_file(args.classes, "class table"))
    config = _load_config(args)
    input_path = _require_file(args.input, "input")
    if _is_sov3(input_path):
        labels = _fuse_single(input_path, classes, config, args)
    else:
        labels = _fuse_manifest(input_path, classes, config, args.threads)
    write_label_map_file(labels, args.output)
    log.info("wrote %s (%dx%d)", args.output, labels.height, labels.width)
    return 0


def cmd_eval(args) -> int:
    classes = ClassTable.from_file(_require_file(args.classes, "class table"))
    if len(args.pred) != len(args.truth):
        raise ValidationError(
            f"{len(args.pred)} predictions vs {len(args.truth)} truth rasters"
        )
    cm = metrics.ConfusionMatrix(len(classes.names))
    for pred_path, truth_path in zip(args.pred, args.truth):
        pred = read_label_map_file(_require_file(pred_path, "prediction"))
        truth = read_label_map_file(_require_file(truth_path, "truth"))
        metrics.accumulate(cm, pred, truth)
    rep = metrics.report(cm, classes)
    if args.foreground is not None:
        if args.foreground not in classes.names:
            raise ValidationError(f"foreground class {args.foreground!r} not in class table")
        idx = classes.names.index(args.foreground)
        iou = rep["classes"][idx]["iou"]
        print(f"{args.foreground} IoU: {'-' if iou is None else f'{iou:.4f}'}")
    else:
        print(metrics.format_report(rep))
    if args.json:
        Path(args.json).write_text(metrics.report_json(rep) + "\n", encoding="utf-8")
    return 0


def cmd_render(args) -> int:
    classes = ClassTable.from_file(_require_file(args.classes, "class table"))
    labels = read_label_map_file(_require_file(args.input, "label map"))
    pal = None
    if args.palette:
        pal = palette.load_palette_file(_require_file(args.palette, "palette"), classes)
    image = palette.render_labels(labels, classes, pal, ignore_color=args.ignore_color)
    image.save(args.output)
    return 0


def cmd_synth(args) -> int:
    if args.spec:
        spec = synth.SynthSpec.from_json(
            _require_file(args.spec, "synth spec").read_text(encoding="utf-8")
        )
        if args.seed is not None:
            spec.seed = args.seed
    else:
        if args.seed is None:
            raise ValidationError("either --spec or --seed is required")
        spec = synth.SynthSpec(
            seed=args.seed,
            height=args.height,
            width=args.width,
            category_count=args.categories,
            prompts_per_category=args.prompts,
            max_instances=args.max_instances,
            stuff_fraction=args.stuff_fraction,
            noise_level=args.noise_level,
            distractor_count=args.distractors,
        )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle, truth, classes = synth.generate(spec)
    write_bundle_file(bundle, out / "bundle.sov3")
    write_label_map_file(truth, out / "truth.lbl")
    classes.to_file(out / "classes.json")

    from .reference import reference_pipeline  # deferred: pulls in the JIT

    config = fusion.FusionConfig()
    expected = reference_pipeline(bundle, classes, config)
    write_label_map_file(expected, out / "expected.lbl")
    digests = {
        name: synth.sha256_file(out / name)
        for name in ("bundle.sov3", "truth.lbl", "classes.json", "expected.lbl")
    }
    synth.write_fixture_manifest(out / "fixture.json", spec, config, digests)
    print(json.dumps({"out_dir": str(out), "digests": digests}, indent=2))
    return 0


def cmd_inspect(args) -> int:
    bundle = read_bundle_file(_require_file(args.input, "bundle"))
    warnings = 0  # the strict reader rejects anything questionable
    lines = [
        f"image_id: {bundle.image_id}",
        f"size: {bundle.height}x{bundle.width}",
        f"categories: {len(bundle.categories)}",
    ]
    for cat in bundle.categories:
        for prompt in cat.prompts:
            n_inst = len(prompt.instances)
            sem = "yes" if prompt.semantic_map is not None else "no"
            rng_audit = ""
            if prompt.semantic_map is not None:
                rng_audit = (
                    f" sem-range=[{float(prompt.semantic_map.min()):.4f},"
                    f" {float(prompt.semantic_map.max()):.4f}]"
                )
            confs = [i.confidence for i in prompt.instances]
            conf_audit = (
                f" conf-range=[{min(confs):.4f}, {max(confs):.4f}]" if confs else ""
            )
            lines.append(
                f"  {cat.name} / {prompt.prompt_text!r}: presence={prompt.presence:.4f} "
                f"semantic={sem} instances={n_inst}{rng_audit}{conf_audit}"
            )
    lines.append(f"validation warnings: {warnings}")
    print("\n".join(lines))
    return 0


def cmd_plan(args) -> int:
    grid = tiling.plan_tiles(args.height, args.width, args.tile_size, args.overlap)
    names = tuple(f"{args.bundle_prefix}{i:05d}.sov3" for i in range(len(grid.tiles)))
    tiling.write_tile_manifest(tiling.TileManifest(grid, names), args.output)
    print(json.dumps({"tiles": len(grid.tiles), "manifest": args.output}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ovfuse",
        description="Open-vocabulary segmentation fusion engine over serialized head outputs",
    )
    parser.add_argument("--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="fuse a bundle or tile manifest into a label map")
    p.add_argument("-i", "--input", required=True, help="SOV3 bundle or tile manifest JSON")
    p.add_argument("-c", "--classes", required=True, help="class table JSON")
    p.add_argument("-o", "--output", required=True, help="output label raster path")
    p.add_argument("--config", help="fusion config JSON")
    p.add_argument("--tau", type=float, default=None, help="background threshold")
    p.add_argument(
        "--instance-conf-threshold", type=float, default=None,
        help="decoder confidence prefilter",
    )
    p.add_argument("--no-presence", action="store_true", help="disable presence gating")
    p.add_argument(
        "--tile-size", type=int, default=0,
        help="tile oversized bundles internally (0 = never)",
    )
    p.add_argument("--overlap", type=int, default=0, help="tile overlap in pixels")
    p.add_argument("--threads", type=int, default=1, help="worker threads (>= 1)")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="confusion-matrix metrics for prediction vs truth")
    p.add_argument("--pred", nargs="+", required=True, help="prediction label raster(s)")
    p.add_argument("--truth", nargs="+", required=True, help="ground-truth label raster(s)")
    p.add_argument("-c", "--classes", required=True, help="class table JSON")
    p.add_argument("--foreground", help="report only this class's IoU")
    p.add_argument("--json", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render a label map to an image")
    p.add_argument("-i", "--input", required=True, help="label raster")
    p.add_argument("-c", "--classes", required=True, help="class table JSON")
    p.add_argument("-o", "--output", required=True, help="output image path (.png)")
    p.add_argument("--palette", help="palette JSON (class name -> [r,g,b])")
    p.add_argument(
        "--ignore-color", choices=("transparent", "black"), default="transparent",
        help="how to paint ignore pixels",
    )
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("synth", help="write a synthetic fixture set")
    p.add_argument("--spec", help="SynthSpec JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--categories", type=int, default=4)
    p.add_argument("--prompts", type=int, default=1)
    p.add_argument("--max-instances", type=int, default=4)
    p.add_argument("--stuff-fraction", type=float, default=0.5)
    p.add_argument("--noise-level", type=float, default=0.1)
    p.add_argument("--distractors", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="print a bundle's header and value audit")
    p.add_argument("-i", "--input", required=True, help="SOV3 bundle")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("plan", help="write a tile manifest for a raster geometry")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--tile-size", type=int, default=tiling.DEFAULT_TILE_SIZE)
    p.add_argument("--overlap", type=int, default=0)
    p.add_argument("--bundle-prefix", default="tiles/tile_")
    p.add_argument("-o", "--output", required=True, help="manifest JSON path")
    p.set_defaults(func=cmd_plan)

    return parser


_ERROR_KINDS = (
    (TruncatedError, "truncated"),
    (FormatError, "format"),
    (ValidationError, "validation"),
    (EngineError, "engine"),
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except EngineError as e:
        for cls, kind in _ERROR_KINDS:
            if isinstance(e, cls):
                _emit_error(kind, str(e))
                return 2
        return 2  # unreachable; EngineError is the last entry
    except FileNotFoundError as e:
        _emit_error("missing-file", str(e))
        return 2
    except json.JSONDecodeError as e:
        _emit_error("format", f"invalid JSON: {e}")
        return 2
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports, not raises
        _emit_error("internal", f"{type(e).__name__}: {e}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
