"""Command line entry point: ``depthcoeff <subcommand> [options]``.

Every subcommand accepts the shared options (seed, grid, t, output
directory). When ``--out-dir`` is given, the parsed configuration is written
there as ``manifest.txt`` (key=value lines) next to the outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import UnidentifiedImageError

from . import analysis, depthio, losses, metrics, scene, toymodel
from .dc import BinGrid, decode_image, encode_image
from .depthio import atomic_write_text
from .errors import ConfigurationError, DepthCoeffError, FormatError

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_IO = 3

# toy experiments use a small grid that spans the synthetic scene depths
TOY_GRID = (0.0, 16.0, 16)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _signal(text: str) -> list[Optional[float]]:
    try:
        return [None if v.strip() == "" else float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated depths (empty = missing), got {text!r}")


def _grid(args, default=(0.0, 80.0, 80)) -> BinGrid:
    d_min = default[0] if args.d_min is None else args.d_min
    d_max = default[1] if args.d_max is None else args.d_max
    n_bins = default[2] if args.n_bins is None else args.n_bins
    return BinGrid(d_min, d_max, n_bins)


def _out_dir(args) -> Optional[Path]:
    if args.out_dir is None:
        return None
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(args, out_dir: Path) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    lines = [f"{k}={','.join(map(str, v)) if isinstance(v, list) else v}" for k, v in sorted(cfg.items())]
    atomic_write_text(out_dir / "manifest.txt", "\n".join(lines) + "\n")


def _emit(text: str, args, name: str) -> None:
    """Print ``text`` and, with ``--out-dir``, also save it as ``name`` there."""
    sys.stdout.write(text)
    out = _out_dir(args)
    if out is not None:
        atomic_write_text(out / name, text)


def _camera(args) -> depthio.Camera:
    return depthio.Camera(args.fx, args.fy, args.cx, args.cy, args.width, args.height)


# -- subcommands ----------------------------------------------------------------

def cmd_encode(args) -> None:
    grid = _grid(args)
    depth = depthio.read_depth_png16(args.depth)
    dc = encode_image(depth, grid, clamp=args.clamp)
    # second record carries the grid so decode needs no extra flags
    depthio.write_tensors(args.out, [dc, np.array([grid.d_min, grid.d_max, grid.n_bins], dtype=np.float64)])


def cmd_decode(args) -> None:
    arrs = depthio.read_tensors(args.dc)
    if len(arrs) == 2:
        d_min, d_max, n_bins = arrs[1].tolist()
        grid = BinGrid(d_min, d_max, int(n_bins))
    elif len(arrs) == 1:
        grid = _grid(args)
    else:
        raise FormatError(f"{args.dc}: expected a DC tensor and optional grid record")
    dc = arrs[0]
    if dc.ndim != 3 or dc.shape[-1] != grid.n_bins:
        raise FormatError(f"{args.dc}: DC tensor shape {dc.shape} does not match a {grid.n_bins}-bin grid")
    depthio.write_depth_png16(decode_image(dc, grid, args.mode), args.out)


def cmd_eval(args) -> None:
    rep = metrics.evaluate(
        depthio.read_depth_png16(args.pred),
        depthio.read_depth_png16(args.gt),
        t=args.t,
        delta_thresholds=args.thresholds or metrics.DEFAULT_DELTA_THRESHOLDS,
    )
    _emit(rep.to_csv(), args, "metrics.csv")
    if args.table:
        print(rep.to_table(), file=sys.stderr)


def cmd_subsample(args) -> None:
    pts = depthio.read_points_csv(args.points)
    if args.estimate_rings:
        pts = depthio.estimate_rings_from_elevation(pts, args.estimate_rings)
    sub = depthio.subsample_rows(pts, every=args.every, rings=args.rings)
    depthio.write_points_csv(sub, args.out)
    print(f"kept {len(sub)} of {len(pts)} points", file=sys.stderr)


def cmd_project(args) -> None:
    depth, dropped = depthio.project_to_depth_image(depthio.read_points_csv(args.points), _camera(args))
    if args.crop_top:
        depth = depthio.crop_top(depth, args.crop_top)
    depthio.write_depth_png16(depth, args.out)
    print(f"dropped {dropped} points", file=sys.stderr)


def cmd_synth(args) -> None:
    out = _out_dir(args)
    if out is None:
        raise ConfigurationError("synth needs --out-dir")
    grid = _grid(args, TOY_GRID)
    if args.scene:
        spec = scene.SceneSpec.load(args.scene)
    else:
        spec = scene.random_scene_spec(np.random.default_rng(args.seed), size=args.size)
    gt = scene.render(spec, grid)
    if args.pattern == "uniform":
        count = args.count if args.count is not None else gt.size // 10
        pattern = scene.SamplePattern("uniform", count=count, seed=args.seed)
    else:
        pattern = scene.SamplePattern(args.pattern, k=args.k, seed=args.seed)
    sparse = scene.sample(gt, pattern)
    atomic_write_text(out / "scene.cfg", spec.to_text())
    depthio.write_depth_png16(gt, out / "gt.png")
    depthio.write_depth_png16(sparse, out / "sparse.png")
    analysis.write_pgm(out / "guide.pgm", scene.render_guide(spec, args.guide_blur))
    analysis.write_pgm(out / "edges.pgm", scene.discontinuity_mask(gt, args.t).astype(np.float64))


def cmd_demo_ambiguity(args) -> None:
    ls = losses.two_point_loss_landscape(args.d1, args.d2, args.loss, t=args.t, samples=args.samples)
    text = "d,loss\n" + "".join(f"{d!r},{v!r}\n" for d, v in ls.rows())
    _emit(text, args, "landscape.csv")
    print(f"argmin d={ls.argmin!r}", file=sys.stderr)


def cmd_demo_conv1d(args) -> None:
    sparse_out, dc_out = analysis.demo_conv1d(args.signal, args.kernel, _grid(args, (0.0, 10.0, 10)))
    _emit(analysis.conv1d_csv(args.signal, sparse_out, dc_out), args, "conv1d.csv")


def cmd_bev(args) -> None:
    depth = depthio.read_depth_png16(args.depth)
    bev = analysis.bev_project(depth, _camera(args), (args.x_min, args.x_max), (args.z_min, args.z_max), args.cell)
    _emit(bev.to_csv(), args, "bev.csv")
    out = _out_dir(args)
    if out is not None:
        # far range at the top of the image, as in a top-down plot
        analysis.write_pgm(out / "bev.pgm", bev.counts[::-1])
    print(f"{int(bev.counts.sum())} pixels binned, {bev.n_out_of_range} out of range", file=sys.stderr)


def _toy_config(args, **kw) -> toymodel.TrainConfig:
    return toymodel.TrainConfig(
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        optimizer=args.optimizer,
        dtype=args.dtype,
        **kw,
    )


def _toy_data(args, grid):
    train_set = scene.make_dataset(args.n_train, args.seed, grid, size=args.size)
    eval_set = scene.make_dataset(args.n_eval, args.seed + 1000, grid, size=args.size)
    return train_set, eval_set


def cmd_train_toy(args) -> None:
    grid = _grid(args, TOY_GRID)
    cfg = _toy_config(args, input_mode=args.input, loss_mode=args.loss)
    train_set, eval_set = _toy_data(args, grid)
    log = (lambda e, v: print(f"epoch {e}: loss {v:.6g}", file=sys.stderr)) if args.verbose else None
    result = toymodel.train(cfg, train_set, grid, log=log)
    xs = np.stack([toymodel.make_input(s, cfg, grid) for s in eval_set])
    pred = toymodel.predict_depth(result.params, xs, cfg, grid)
    gt = np.stack([s.gt for s in eval_set])
    rep = metrics.evaluate(pred, gt, t=args.t)
    _emit(rep.to_csv(), args, "metrics.csv")
    out = _out_dir(args)
    if out is not None:
        depthio.write_tensors(out / "params.bin", toymodel.params_to_list(result.params))
        curve = "epoch,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(result.curve))
        atomic_write_text(out / "curve.csv", curve)


def cmd_ablate(args) -> None:
    grid = _grid(args, TOY_GRID)
    train_set, eval_set = _toy_data(args, grid)
    log = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    rows = toymodel.run_ablation(train_set, eval_set, grid, t=args.t, base=_toy_config(args),
                                 window=args.window, log=log)
    _emit(toymodel.ablation_csv(rows), args, "ablation.csv")


# -- parser -----------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("shared options")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--d-min", type=float, default=None, help="grid start in meters")
    g.add_argument("--d-max", type=float, default=None, help="grid end in meters")
    g.add_argument("--n-bins", type=int, default=None, help="number of depth bins")
    g.add_argument("--t", type=float, default=metrics.OUTDOOR_T, help="error threshold in meters")
    g.add_argument("--out-dir", default=None, help="directory for outputs and manifest.txt")
    return p


def _camera_args(p) -> None:
    for name in ("fx", "fy", "cx", "cy"):
        p.add_argument(f"--{name}", type=float, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)


def _toy_args(p, epochs: int) -> None:
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    p.add_argument("--n-train", type=int, default=64)
    p.add_argument("--n-eval", type=int, default=16)
    p.add_argument("--size", type=int, default=32, help="scene height and width in pixels")
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="depthcoeff", description="Depth Coefficients toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    p = add("encode", cmd_encode, "Encode a 16-bit PNG depth image into a DC tensor file.")
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clamp", action="store_true", help="snap out-of-range depths onto the grid")

    p = add("decode", cmd_decode, "Decode a DC tensor file into a 16-bit PNG depth image.")
    p.add_argument("--dc", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("3coeff", "all"), default="3coeff")

    p = add("eval", cmd_eval, "Evaluate a predicted depth PNG against ground truth; CSV on stdout.")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--thresholds", type=_floats, default=None, help="delta thresholds, e.g. 1.25,1.5625")
    p.add_argument("--table", action="store_true", help="also print a readable table to stderr")

    p = add("subsample", cmd_subsample, "Keep every k-th Lidar ring (or an explicit ring set) of a point CSV.")
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True)
    keep = p.add_mutually_exclusive_group(required=True)
    keep.add_argument("--every", type=int)
    keep.add_argument("--rings", type=_ints)
    p.add_argument("--estimate-rings", type=int, default=None, metavar="R",
                   help="assign R rings from elevation angle first")

    p = add("project", cmd_project, "Project camera-frame points from a CSV into a depth PNG.")
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True)
    _camera_args(p)
    p.add_argument("--crop-top", type=int, default=0)

    p = add("synth", cmd_synth, "Render a synthetic scene with sparse samples into --out-dir.")
    p.add_argument("--scene", default=None, help="scene config file; random scene when omitted")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--pattern", choices=("uniform", "rows", "grid"), default="uniform")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--guide-blur", type=int, default=1)

    p = add("demo-ambiguity", cmd_demo_ambiguity, "Loss landscape for two equally likely depths; CSV d,loss.")
    p.add_argument("--d1", type=float, required=True)
    p.add_argument("--d2", type=float, required=True)
    p.add_argument("--loss", choices=losses.PENALTIES, default="mse")
    p.add_argument("--samples", type=int, default=601)

    p = add("demo-conv1d", cmd_demo_conv1d, "Filter a 1-D depth slice along the sparse and DC paths.")
    p.add_argument("--signal", type=_signal, default="2,2,,6,6", help="comma-separated depths, empty = missing")
    p.add_argument("--kernel", type=_floats, default=[1.0, 1.0, 1.0])

    p = add("bev", cmd_bev, "Bird's-eye-view pixel counts of a depth PNG.")
    p.add_argument("--depth", required=True)
    _camera_args(p)
    p.add_argument("--x-min", type=float, default=-20.0)
    p.add_argument("--x-max", type=float, default=20.0)
    p.add_argument("--z-min", type=float, default=0.0)
    p.add_argument("--z-max", type=float, default=80.0)
    p.add_argument("--cell", type=float, default=0.5)

    p = add("train-toy", cmd_train_toy, "Train the toy network on synthetic scenes; eval metrics CSV.")
    p.add_argument("--input", choices=("sp", "dc"), default="dc")
    p.add_argument("--loss", choices=("mse", "ce"), default="ce")
    _toy_args(p, 200)

    p = add("ablate", cmd_ablate, "Four-way input/loss ablation on synthetic scenes; CSV report.")
    p.add_argument("--window", type=int, default=2, help="mixed-pixel window radius")
    _toy_args(p, 200)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        out = _out_dir(args)
        if out is not None:
            write_manifest(args, out)
        args.func(args)
    except DepthCoeffError as exc:
        print(f"depthcoeff {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except UnidentifiedImageError as exc:
        print(f"depthcoeff {args.command}: FormatError: {exc}", file=sys.stderr)
        return FormatError.exit_code
    except OSError as exc:
        print(f"depthcoeff {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
