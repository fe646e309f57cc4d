"""Command-line interface: ``gpdepth {complete,eval,sample,sweep,synth}``.

Every command writes only inside ``--out-dir`` and leaves a ``manifest.json``
there with all resolved parameters. Exit codes: 0 success, 1 compute
failure, 2 usage or input error. Failures print a single JSON line to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .config import load_config, merge
from .depthmap import (KITTI_DIVISOR, DepthMap, build_training_set, load_depth_png, load_sparse,
                       save_depth_png, save_sparse, write_sparse_csv)
from .errors import GpDepthError, InputError
from .gp_exact import exact_posterior_mean_only
from .kernels import GpHyperparams
from .metrics import evaluate, sweep_report
from .sampling import RATIOS, SamplingSpec, apply_sampling, format_ratio, parse_ratio
from .ski import DEFAULT_DENSITY, DEPTH_FLOOR, CgSettings, complete_depth, output_grid
from .synth import SceneParams, make_scene

log = logging.getLogger("gpdepth")

MANIFEST_SCHEMA = 1
THREADS_ENV = "GPDEPTH_THREADS"
# fixed so renders are comparable across runs
RENDER_RANGE_M = (0.0, 80.0)

HP_DEFAULTS = {f: getattr(GpHyperparams(), f) for f in
               ("length_scale", "sigma_dl", "sigma_meas", "output_scale", "nu", "structure")}
SOLVER_DEFAULTS = {"inducing_density": DEFAULT_DENSITY, "interp": "linear", "cg_tol": 1e-4,
                   "cg_max_iters": 1000, "precond": "jacobi", "solver": "ski"}
MISC_DEFAULTS = {"seed": 0, "scale_divisor": KITTI_DIVISOR}


@dataclass
class RunConfig:
    subcommand: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    out_dir: str = "out"
    hyperparams: Optional[GpHyperparams] = None
    cg: Optional[CgSettings] = None
    solver: dict = field(default_factory=dict)
    sampling: dict = field(default_factory=dict)
    seed: int = 0
    scale_divisor: float = KITTI_DIVISOR
    log_level: str = "warn"
    extra: dict = field(default_factory=dict)


# --- helpers -----------------------------------------------------------------

def n_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _require_file(path, what):
    if path is None:
        raise InputError(f"missing --{what}")
    if not os.path.isfile(path):
        raise InputError(f"{what} file not found: {path}")
    return path


def _out_path(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.out_dir, name)


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_manifest(cfg: RunConfig) -> str:
    doc = {
        "schema_version": MANIFEST_SCHEMA,
        "tool": "gpdepth",
        "version": __version__,
        "command": cfg.subcommand,
        "config": _jsonable({k: v for k, v in asdict(cfg).items() if k != "subcommand"}),
    }
    path = _out_path(cfg, "manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")
    return path


def render_depth(depth_map: DepthMap, path) -> None:
    """False-color PNG with a fixed turbo colormap: near is blue, far is red."""
    from matplotlib import colormaps
    from PIL import Image

    lo, hi = RENDER_RANGE_M
    t = np.clip((depth_map.values - lo) / (hi - lo), 0.0, 1.0)
    rgb = (colormaps["turbo"](t)[..., :3] * 255).round().astype(np.uint8)
    rgb[~depth_map.valid] = 0
    Image.fromarray(rgb).save(path, format="PNG")


def _resolve(args, file_cfg):
    flags = {k: getattr(args, k, None) for k in
             list(HP_DEFAULTS) + list(SOLVER_DEFAULTS) + list(MISC_DEFAULTS)}
    hp = GpHyperparams(**merge(file_cfg, flags, HP_DEFAULTS))
    solver = merge(file_cfg, flags, SOLVER_DEFAULTS)
    misc = merge(file_cfg, flags, MISC_DEFAULTS)
    cg = CgSettings(rel_tolerance=float(solver["cg_tol"]), max_iters=int(solver["cg_max_iters"]),
                    preconditioner=solver["precond"])
    return hp, cg, solver, misc


def _base_config(args, name) -> RunConfig:
    file_cfg = load_config(args.config) if getattr(args, "config", None) else {}
    hp, cg, solver, misc = _resolve(args, file_cfg)
    if solver["solver"] not in ("ski", "exact"):
        raise InputError(f"solver must be ski or exact, got {solver['solver']!r}")
    return RunConfig(subcommand=name, out_dir=args.out_dir, hyperparams=hp, cg=cg,
                     solver={k: solver[k] for k in ("inducing_density", "interp", "solver")},
                     seed=int(misc["seed"]), scale_divisor=float(misc["scale_divisor"]),
                     log_level=args.log)


def run_completion(dense, sparse_points, cfg: RunConfig, out_size=None):
    """Complete ``dense`` with the configured solver; returns ``(map, info dict)``."""
    if cfg.solver["solver"] == "exact":
        out_size = out_size or (dense.width, dense.height)
        train = build_training_set(dense, sparse_points, cfg.hyperparams)
        test = output_grid((dense.width, dense.height), out_size)
        mean = exact_posterior_mean_only(train, test, cfg.hyperparams.kernel,
                                         structure=cfg.hyperparams.structure)
        values = np.maximum(mean.reshape(out_size[1], out_size[0]), DEPTH_FLOOR)
        return DepthMap(values, np.ones_like(values, bool)), {"solver": "exact", "n_train": len(train)}
    out, info = complete_depth(dense, sparse_points, cfg.hyperparams, out_size, cfg.cg,
                               density=float(cfg.solver["inducing_density"]),
                               order=cfg.solver["interp"], return_info=True)
    return out, {"solver": "ski", "cg_iterations": info.iterations,
                 "cg_rel_residual": info.rel_residual, "cg_converged": info.converged}


# --- subcommands -------------------------------------------------------------

def cmd_complete(args) -> int:
    cfg = _base_config(args, "complete")
    dense_path = _require_file(args.dense, "dense")
    sparse_path = _require_file(args.sparse, "sparse")
    os.makedirs(cfg.out_dir, exist_ok=True)
    dense = load_depth_png(dense_path, cfg.scale_divisor)
    sparse_points = load_sparse(sparse_path, (dense.width, dense.height), cfg.scale_divisor)
    out_size = (args.out_width or dense.width, args.out_height or dense.height)
    cfg.inputs = {"dense": dense_path, "sparse": sparse_path}
    out, info = run_completion(dense, sparse_points, cfg, out_size)
    refined = _out_path(cfg, "refined.png")
    save_depth_png(out, refined, cfg.scale_divisor)
    cfg.outputs = {"refined": refined}
    if args.render:
        cfg.outputs["render"] = _out_path(cfg, "refined_color.png")
        render_depth(out, cfg.outputs["render"])
    cfg.extra = {"out_size": list(out_size), "n_sparse": len(sparse_points), **info}
    write_manifest(cfg)
    log.info("wrote %s", refined)
    return 0


def cmd_eval(args) -> int:
    cfg = _base_config(args, "eval")
    pred_path = _require_file(args.pred, "pred")
    gt_path = _require_file(args.gt, "gt")
    pred = load_depth_png(pred_path, cfg.scale_divisor)
    gt = load_depth_png(gt_path, cfg.scale_divisor)
    report = evaluate(pred, gt)
    log.info("evaluated at %dx%d", gt.width, gt.height)
    doc = {"resolution": [gt.width, gt.height], **report.as_dict()}
    text = json.dumps(doc, sort_keys=True)
    print(text)
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(_out_path(cfg, "metrics.json"), "w", encoding="utf-8") as f:
        f.write(text + "\n")
    cfg.inputs = {"pred": pred_path, "gt": gt_path}
    cfg.outputs = {"metrics": _out_path(cfg, "metrics.json")}
    write_manifest(cfg)
    return 0


def _sampling_spec(mode, ratio, n_points, seed, side) -> SamplingSpec:
    if mode == "random":
        if n_points is None:
            raise InputError("--n-points is required for random sampling")
        return SamplingSpec("random_n", n_points=n_points, seed=seed)
    if ratio is None:
        raise InputError(f"--ratio is required for {mode} sampling")
    return SamplingSpec(mode, ratio=parse_ratio(ratio), seed=seed, side=side)


def _frame_from(args, scale_divisor):
    if args.like:
        ref = load_depth_png(_require_file(args.like, "like"), scale_divisor)
        return ref.width, ref.height
    if args.width and args.height:
        return args.width, args.height
    return None


def cmd_sample(args) -> int:
    cfg = _base_config(args, "sample")
    src = _require_file(args.input, "input")
    spec = _sampling_spec(args.mode, args.ratio, args.n_points, cfg.seed, args.side)
    os.makedirs(cfg.out_dir, exist_ok=True)
    if spec.mode == "random_n":
        source = load_depth_png(src, cfg.scale_divisor)
    else:
        source = load_sparse(src, _frame_from(args, cfg.scale_divisor), cfg.scale_divisor)
    points = apply_sampling(source, spec)
    out = _out_path(cfg, f"sparse.{args.format}")
    save_sparse(points, out, cfg.scale_divisor)
    cfg.inputs = {"input": src}
    cfg.outputs = {"sparse": out}
    cfg.sampling = asdict(spec)
    cfg.extra = {"n_points": len(points)}
    write_manifest(cfg)
    return 0


def sweep_grid(modes, ratios, n_points_list, seed):
    """Ordered sampling cells; ratio 1 appears once regardless of mode."""
    cells = []
    if any(m != "random" for m in modes) and 1.0 in ratios:
        cells.append(SamplingSpec("uniform", ratio=1.0, seed=seed))
    for mode in modes:
        if mode == "random":
            cells.extend(SamplingSpec("random_n", n_points=n, seed=seed) for n in n_points_list)
            continue
        cells.extend(SamplingSpec(mode, ratio=r, seed=seed) for r in ratios if r != 1.0)
    return cells


def cmd_sweep(args) -> int:
    cfg = _base_config(args, "sweep")
    dense_path = _require_file(args.dense, "dense")
    gt_path = _require_file(args.gt, "gt")
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in ("uniform", "horizontal", "vertical", "random")]
    if bad:
        raise InputError(f"unknown sweep modes {bad}")
    sparse_path = None
    if any(m != "random" for m in modes):
        sparse_path = _require_file(args.sparse, "sparse")
    ratios = [parse_ratio(r) for r in args.ratios.split(",")] if args.ratios else list(RATIOS)
    n_points_list = [int(n) for n in args.n_points.split(",")] if args.n_points else []
    os.makedirs(cfg.out_dir, exist_ok=True)

    dense = load_depth_png(dense_path, cfg.scale_divisor)
    gt = load_depth_png(gt_path, cfg.scale_divisor)
    frame = (dense.width, dense.height)
    full = load_sparse(sparse_path, frame, cfg.scale_divisor) if sparse_path else None
    cells = sweep_grid(modes, ratios, n_points_list, cfg.seed)

    def run_cell(spec):
        try:
            source = gt if spec.mode == "random_n" else full
            points = apply_sampling(source, spec)
            out, _ = run_completion(dense, points, cfg, (gt.width, gt.height))
            return evaluate(out, gt), None
        except GpDepthError as exc:
            return None, str(exc)

    with ThreadPoolExecutor(max_workers=n_threads()) as pool:
        outcomes = list(pool.map(run_cell, cells))
    results = [(None, evaluate(dense, gt))]
    errors = {}
    for spec, (report, err) in zip(cells, outcomes):
        results.append((spec, report))
        if err is not None:
            label = f"{spec.mode}:{spec.ratio if spec.ratio is not None else spec.n_points}"
            errors[label] = err
            log.error("sweep cell %s failed: %s", label, err)
    csv_path = _out_path(cfg, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        f.write(sweep_report(results))
    log.info("evaluated at %dx%d", gt.width, gt.height)
    cfg.inputs = {"dense": dense_path, "sparse": sparse_path, "gt": gt_path}
    cfg.outputs = {"sweep": csv_path}
    cfg.sampling = {"modes": modes, "ratios": [format_ratio(r) for r in ratios],
                    "n_points": n_points_list}
    cfg.extra = {"resolution": [gt.width, gt.height], "failed_cells": errors}
    write_manifest(cfg)
    return 1 if errors else 0


def cmd_synth(args) -> int:
    cfg = _base_config(args, "synth")
    params = SceneParams(width=args.width, height=args.height, noise_std=args.noise_std,
                         blur_sigma=args.blur, scan_lines=args.scan_lines, col_step=args.col_step,
                         seed=cfg.seed, scale_divisor=cfg.scale_divisor)
    os.makedirs(cfg.out_dir, exist_ok=True)
    gt, dense, sparse_points = make_scene(params)
    cfg.outputs = {name: _out_path(cfg, name) for name in ("gt.png", "dense.png", "sparse.csv")}
    save_depth_png(gt, cfg.outputs["gt.png"], cfg.scale_divisor)
    save_depth_png(dense, cfg.outputs["dense.png"], cfg.scale_divisor)
    write_sparse_csv(sparse_points, cfg.outputs["sparse.csv"])
    cfg.extra = {"scene": asdict(params), "n_sparse": len(sparse_points)}
    write_manifest(cfg)
    return 0


# --- parser ------------------------------------------------------------------

def _shared(parser, out_default="out"):
    parser.add_argument("--config", help="TOML file with parameter values")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--scale-divisor", type=float, default=None,
                        help="raw PNG value per meter (default 256)")
    parser.add_argument("--out-dir", default=out_default)
    parser.add_argument("--log", choices=("error", "warn", "info", "debug"), default="warn")


def _gp_flags(parser):
    g = parser.add_argument_group("GP hyperparameters")
    g.add_argument("--length-scale", type=float)
    g.add_argument("--sigma-dl", type=float, help="dense-input noise std (m)")
    g.add_argument("--sigma-meas", type=float, help="sparse-measurement noise std (m)")
    g.add_argument("--output-scale", type=float, help="kernel variance (m^2)")
    g.add_argument("--nu", type=float, choices=(0.5, 1.5, 2.5))
    g.add_argument("--structure", choices=("product", "isotropic"))
    s = parser.add_argument_group("solver")
    s.add_argument("--solver", choices=("ski", "exact"))
    s.add_argument("--inducing-density", type=float)
    s.add_argument("--interp", choices=("linear", "cubic"))
    s.add_argument("--cg-tol", type=float)
    s.add_argument("--cg-max-iters", type=int)
    s.add_argument("--precond", choices=("none", "jacobi"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpdepth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gpdepth {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("complete", help="refine a dense depth map with sparse measurements")
    p.add_argument("--dense", help="16-bit PNG dense depth")
    p.add_argument("--sparse", help="sparse points, .csv (u,v,depth_m) or 16-bit PNG")
    p.add_argument("--out-width", type=int)
    p.add_argument("--out-height", type=int)
    p.add_argument("--render", action="store_true", help="also write a false-color PNG")
    _shared(p)
    _gp_flags(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("eval", help="compute metrics of a prediction against ground truth")
    p.add_argument("--pred")
    p.add_argument("--gt")
    _shared(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="subsample sparse measurements")
    p.add_argument("--input", help="sparse .csv/.png, or a depth PNG for --mode random")
    p.add_argument("--mode", choices=("uniform", "horizontal", "vertical", "random"), required=True)
    p.add_argument("--ratio", help="1, 1/2, ..., 1/64")
    p.add_argument("--n-points", type=int)
    p.add_argument("--side", choices=("low", "high"),
                   help="biased band to keep (default: bottom rows / left columns)")
    p.add_argument("--like", help="depth PNG giving the frame size of a CSV input")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--format", choices=("csv", "png"), default="csv")
    _shared(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sweep", help="sample, complete and evaluate over a sparsity grid")
    p.add_argument("--dense")
    p.add_argument("--sparse")
    p.add_argument("--gt")
    p.add_argument("--modes", default="uniform,horizontal,vertical")
    p.add_argument("--ratios", help="comma-separated, default 1,1/2,...,1/64")
    p.add_argument("--n-points", help="comma-separated point counts for the random mode")
    _shared(p)
    _gp_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic gt/dense/sparse triple")
    p.add_argument("--width", type=int, default=200)
    p.add_argument("--height", type=int, default=150)
    p.add_argument("--noise-std", type=float, default=0.5)
    p.add_argument("--blur", type=float, default=0.0)
    p.add_argument("--scan-lines", type=int, default=64)
    p.add_argument("--col-step", type=int, default=2)
    _shared(p)
    p.set_defaults(func=cmd_synth)
    return parser


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit": code}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = {"warn": "WARNING"}.get(args.log, args.log.upper())
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=n_threads()):
            return args.func(args)
    except GpDepthError as exc:
        return _fail(type(exc).__name__, str(exc), exc.exit_code)
    except OSError as exc:
        return _fail(type(exc).__name__, str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
