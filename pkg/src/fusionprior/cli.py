"""Command-line entry point: fuse, fuse-stack, decision-map, metrics.

Exit codes: 0 success, 2 input error, 3 shape error, 4 numeric divergence.
"""

import argparse
import csv
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import flatten_config, load_config
from .errors import DegenerateInputError, NumericDivergenceError, ShapeError
from .image_core import laplacian_map, load_image, luma_plane, save_image
from .metrics import evaluate_report, write_report_csv
from .trainer import TRACE_FIELDS, decision_map_for, fuse_pair, fuse_stack

log = logging.getLogger("fusionprior")

EXIT_OK, EXIT_INPUT, EXIT_SHAPE, EXIT_NUMERIC = 0, 2, 3, 4
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class InputError(Exception):
    pass


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def read_image(path):
    try:
        return load_image(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from None


def output_paths(out):
    out = Path(out)
    stem = out.with_suffix("")
    return {
        "fused": out,
        "decision_map": Path(f"{stem}_map.png"),
        "loss": Path(f"{stem}_loss.csv"),
        "manifest": Path(f"{stem}_manifest.txt"),
        "timing": Path(f"{stem}_timing.txt"),
    }


def resolve_config(args):
    overrides = {}
    if args.scale is not None:
        overrides["scale"] = str(args.scale)
    if args.iters is not None:
        overrides["iterations"] = str(args.iters)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.reblur is not None:
        overrides["reblur"] = args.reblur
    if args.embedding is not None:
        overrides["embedding"] = args.embedding
    try:
        return load_config(args.config, overrides)
    except OSError as exc:
        raise InputError(f"cannot read config {args.config}: {exc}") from None


def mean_laplacian_energy(img):
    return float(np.mean(np.abs(laplacian_map(luma_plane(img)))))


def write_loss_csv(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for it, *values in trace:
            writer.writerow([it] + [repr(v) for v in values])


def write_manifest(path, command, cfg, inputs, outputs):
    """Key-value manifest; no timings so that reruns are byte-identical."""
    lines = [
        "# fusionprior run manifest",
        f"version = {__version__}",
        f"command = {command}",
        f"seed = {cfg.seed}",
    ]
    for k, p in enumerate(inputs):
        lines.append(f"input.{k} = {Path(p).name} sha256:{sha256_file(p)}")
    for key, p in outputs.items():
        if key != "manifest":
            lines.append(f"output.{key} = {Path(p).name}")
    lines += [f"config.{key} = {value}" for key, value in flatten_config(cfg)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_outputs(args, cfg, result, inputs):
    paths = output_paths(args.out)
    paths["fused"].parent.mkdir(parents=True, exist_ok=True)
    save_image(paths["fused"], result.fused)
    save_image(paths["decision_map"], result.decision_map)
    write_loss_csv(paths["loss"], result.loss_trace)
    write_manifest(paths["manifest"], args.command, cfg, inputs, paths)
    paths["timing"].write_text(f"wall_time_seconds = {result.wall_time:.3f}\n", encoding="utf-8")
    log.info("wrote %s (%.1fs)", paths["fused"], result.wall_time)


def cmd_fuse(args):
    cfg = resolve_config(args)
    fore_path, back_path = args.fore, args.back
    i_fore, i_back = read_image(fore_path), read_image(back_path)
    if args.auto_roles and mean_laplacian_energy(i_back) > mean_laplacian_energy(i_fore):
        log.info("auto-roles: swapping foreground and background inputs")
        i_fore, i_back = i_back, i_fore
        fore_path, back_path = back_path, fore_path
    result = fuse_pair(i_fore, i_back, cfg)
    write_outputs(args, cfg, result, [fore_path, back_path])
    return EXIT_OK


def cmd_fuse_stack(args):
    if len(args.inputs) < 2:
        raise InputError(f"fuse-stack needs at least 2 inputs, got {len(args.inputs)}")
    cfg = resolve_config(args)
    stack = [read_image(p) for p in args.inputs]
    result = fuse_stack(stack, cfg)
    write_outputs(args, cfg, result, args.inputs)
    return EXIT_OK


def cmd_decision_map(args):
    cfg = resolve_config(args)
    m, _ = decision_map_for(read_image(args.fore), read_image(args.back), cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_image(args.out, m)
    return EXIT_OK


def _image_files(path):
    path = Path(path)
    if path.is_file():
        return {path.name: path}
    if not path.is_dir():
        raise InputError(f"no such file or directory: {path}")
    return {p.name: p for p in sorted(path.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def cmd_metrics(args):
    gt_files = _image_files(args.gt)
    test_files = _image_files(args.test)
    if Path(args.gt).is_file() and Path(args.test).is_file():
        pairs = [(Path(args.test).stem, Path(args.gt), Path(args.test))]
    else:
        orphans = sorted(set(gt_files) ^ set(test_files))
        if orphans:
            raise InputError("unpaired files: " + ", ".join(orphans))
        pairs = [(Path(n).stem, gt_files[n], test_files[n]) for n in sorted(gt_files)]
    if not pairs:
        raise InputError("no images to evaluate")
    reports = [evaluate_report(read_image(g), read_image(t), ident) for ident, g, t in pairs]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(args.out, reports)
    return EXIT_OK


def _add_common(p):
    p.add_argument("--out", required=True, help="output PNG; sidecar files share its stem")
    p.add_argument("--scale", type=int, choices=(1, 2, 4))
    p.add_argument("--reblur", help="focus-measure parameters k_g,k_d,k_e,t,f")
    p.add_argument("--iters", type=int, help="optimization iterations")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--embedding", choices=("on", "off"), help="learned decision-map refinement")
    p.add_argument("--auto-roles", action="store_true",
                   help="swap inputs when --back has more Laplacian energy than --fore")


def build_parser():
    parser = argparse.ArgumentParser(prog="fusionprior", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="fuse and super-resolve a focus pair")
    p.add_argument("--fore", required=True, help="foreground-focused image")
    p.add_argument("--back", required=True, help="background-focused image")
    _add_common(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("fuse-stack", help="fuse a focal stack given in focal order")
    p.add_argument("--inputs", nargs="+", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_fuse_stack)

    p = sub.add_parser("decision-map", help="write the foreground decision map only")
    p.add_argument("--fore", required=True)
    p.add_argument("--back", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_decision_map)

    p = sub.add_parser("metrics", help="MG/EI/IE/MGA report against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth image or directory")
    p.add_argument("--test", required=True, help="test image or directory (paired by file name)")
    p.add_argument("--out", required=True, help="CSV report path")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except NumericDivergenceError as exc:
        print(f"error: numeric divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, DegenerateInputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
