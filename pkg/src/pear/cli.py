"""Command-line surface.

Subcommands cover the full loop: generate synthetic data, resample
between grids, train, evaluate, roll out forecasts, and export rasters,
plus small introspection helpers (grid info, mask dump, params count).
The seed resolves as: PEAR_SEED env var, then an explicit flag, then a
config-file value, then 0.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .forecast import evaluate_forecasts, rollout
from .grid import GridSpec, ring_census
from .metrics import ClimatologyTable
from .model import ModelConfig, PearModel
from .resample import LatLonGrid, hpx_to_latlon, latlon_to_hpx, write_grid_csv, write_pgm
from .state import SURFACE_VARS, UPPER_VARS
from .stf import read_states, read_stf, write_states, write_stf
from .synthetic import gen_synthetic, make_pairs
from .training import TrainConfig, load_model_from_checkpoint, train


def _resolve_seed(flag_value, file_value=None):
    env = os.environ.get("PEAR_SEED")
    if env is not None:
        return int(env)
    if flag_value is not None:
        return flag_value
    if file_value is not None:
        return int(file_value)
    return 0


def _cmd_gen_data(args):
    spec = GridSpec.from_nside(args.nside)
    seed = _resolve_seed(args.seed)
    states, days = gen_synthetic(
        seed, spec, args.steps, omega=args.omega, noise_sigma=args.noise,
        year_length=args.year_length, start_day=args.start_day,
    )
    meta = {
        "kind": "synthetic",
        "seed": seed,
        "omega": args.omega,
        "noise_sigma": args.noise,
        "year_length": args.year_length,
        "surface_vars": list(SURFACE_VARS),
        "upper_vars": list(UPPER_VARS),
        "units": "dimensionless",
    }
    write_states(args.out, states, days, meta)
    print(f"wrote {len(states)} states at n_side={args.nside} to {args.out}")
    return 0


def _cmd_resample(args):
    arrays, header = read_stf(getattr(args, "in"))
    if "values" not in arrays:
        raise SystemExit("input must hold a lat-lon 'values' array")
    grid = LatLonGrid(arrays["values"])
    spec = GridSpec.from_nside(args.nside)
    field = latlon_to_hpx(grid, spec)
    meta = dict(header.get("meta", {}))
    meta.update({"grid": "healpix", "n_side": args.nside, "ordering": "nested"})
    write_stf(args.out, {"field": field}, meta)
    print(f"resampled {grid.n_lat}x{grid.n_lon} -> {spec.n_pix} pixels: {args.out}")
    return 0


def _cmd_project(args):
    arrays, header = read_stf(getattr(args, "in"))
    if "surface" in arrays:
        n_side = int(header.get("meta", {}).get("n_side", 0))
        spec = GridSpec.from_nside(n_side)
        if args.var in SURFACE_VARS:
            field = arrays["surface"][args.time, :, SURFACE_VARS.index(args.var)]
        elif args.var in UPPER_VARS:
            field = arrays["upper"][args.time, :, args.level, UPPER_VARS.index(args.var)]
        else:
            raise SystemExit(f"unknown variable {args.var!r}")
    elif "field" in arrays:
        spec = GridSpec.from_nside(int(header["meta"]["n_side"]))
        field = arrays["field"][:, args.channel]
    else:
        raise SystemExit("input holds neither a state sequence nor a field")
    grid = hpx_to_latlon(field, spec, args.nlat, args.nlon)
    if args.out.endswith(".pgm"):
        write_pgm(args.out, grid.values[:, :, 0])
    else:
        write_grid_csv(args.out, grid, names=[args.var])
    print(f"projected to {args.nlat}x{args.nlon}: {args.out}")
    return 0


def _cmd_train(args):
    file_cfg = {}
    if args.config:
        with open(args.config) as f:
            file_cfg = json.load(f)
    fields = ("steps", "lr", "weight_decay", "batch_size", "grad_accum",
              "checkpoint_every", "precision")
    merged = {k: file_cfg[k] for k in file_cfg if k != "seed"}
    for name in fields:
        flag = getattr(args, name)
        if flag is not None:
            merged[name] = flag
    if args.cosine:
        merged["cosine_schedule"] = True
    merged["seed"] = _resolve_seed(args.seed, file_cfg.get("seed"))
    if "steps" not in merged:
        raise SystemExit("steps must come from --steps or the config file")
    config = TrainConfig(**merged)

    states, _, _ = read_states(args.data)
    pairs = make_pairs(states)
    model = PearModel(
        ModelConfig(n_side=int(np.sqrt(states[0].n_pix // 12))),
        np.random.default_rng(config.seed),
    )
    result = train(model, pairs, config, run_dir=args.run_dir,
                   resume_from=args.resume)
    print(f"step {result.step}: loss {result.losses[-1]:.6f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def _load_eval_inputs(args):
    model, norm, _ = load_model_from_checkpoint(args.ckpt)
    states, days, _ = read_states(args.data)
    clim_source = getattr(args, "clim_data", None) or args.data
    clim_states, clim_days, _ = read_states(clim_source)
    clim = ClimatologyTable.from_states(clim_states, clim_days)
    return model, norm, states, days, clim


def _cmd_eval(args):
    model, norm, states, days, clim = _load_eval_inputs(args)
    report = evaluate_forecasts(model, norm, make_pairs(states), days[1:], clim)
    report.to_csv(args.out)
    print(f"evaluated {len(states) - 1} pairs: {args.out}")
    return 0


def _cmd_rollout(args):
    model, norm, states, days, clim = _load_eval_inputs(args)
    start = args.start
    horizon = len(states) - start - 1
    n_steps = min(args.steps, horizon)
    if n_steps < 1:
        raise SystemExit("not enough trailing states to verify any lead")
    _, report = rollout(
        model, norm, states[start],
        truth=states[start + 1: start + 1 + n_steps],
        days=days[start + 1: start + 1 + n_steps],
        clim=clim, n_steps=n_steps,
    )
    report.to_csv(args.out)
    flag = " (truncated)" if report.truncated else ""
    print(f"rolled out {n_steps} days{flag}: {args.out}")
    return 0


def _cmd_grid_info(args):
    spec = GridSpec.from_nside(args.nside)
    census = ring_census(spec)
    print(f"n_side        {spec.n_side}")
    print(f"division k    {spec.k}")
    print(f"n_pix         {spec.n_pix}")
    print(f"pixel_area    {spec.pixel_area:.6e} sr")
    print(f"mean spacing  {math.degrees(math.sqrt(spec.pixel_area)):.4f} deg")
    print(f"rings         {census.size}")
    return 0


def _cmd_mask_dump(args):
    from .windows import build_masks, make_layout

    config = ModelConfig(n_side=args.nside)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    for label, spec in (("fine", config.patch_spec), ("coarse", config.coarse_spec)):
        layout = make_layout(spec, config.token_depth, config.w_hp, config.w_d,
                             shifted=True)
        masks = build_masks(layout)
        blocked = int((masks < 0).sum())
        print(f"{label}: {layout.n_windows} windows of {layout.window_voxels} voxels, "
              f"{blocked} masked pairs")
        if args.out:
            np.save(os.path.join(args.out, f"mask_{label}.npy"), masks)
    if args.out:
        print(f"masks saved under {args.out}")
    return 0


def _cmd_params_count(args):
    config = ModelConfig(n_side=args.nside)
    model = PearModel(config, np.random.default_rng(0))
    print(model.parameter_count())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pear",
                                     description="Spherical weather model tooling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic state sequence")
    p.add_argument("--out", required=True)
    p.add_argument("--nside", type=int, default=8)
    p.add_argument("--steps", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--omega", type=float, default=0.25)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--year-length", type=int, default=365,
                   help="days per cycle; short cycles give eval a usable "
                        "climatology")
    p.add_argument("--start-day", type=int, default=1)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("resample", help="lat-lon file onto the sphere grid")
    p.add_argument("--in", required=True)
    p.add_argument("--nside", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_resample)

    p = sub.add_parser("project", help="raster export of one variable")
    p.add_argument("--in", required=True)
    p.add_argument("--var", default="t2m")
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--time", type=int, default=0)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--nlat", type=int, default=61)
    p.add_argument("--nlon", type=int, default=120)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("train", help="fit the model on a state sequence")
    p.add_argument("--data", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--resume", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None, dest="weight_decay")
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--grad-accum", type=int, default=None, dest="grad_accum")
    p.add_argument("--checkpoint-every", type=int, default=None, dest="checkpoint_every")
    p.add_argument("--precision", choices=("f32", "f64"), default=None)
    p.add_argument("--cosine", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="one-day metrics over a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--clim-data", default=None, dest="clim_data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("rollout", help="iterated multi-day forecast metrics")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--clim-data", default=None, dest="clim_data")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rollout)

    p = sub.add_parser("grid", help="grid introspection")
    grid_sub = p.add_subparsers(dest="grid_command", required=True)
    g = grid_sub.add_parser("info", help="resolution summary")
    g.add_argument("--nside", type=int, required=True)
    g.set_defaults(func=_cmd_grid_info)

    p = sub.add_parser("mask", help="attention mask introspection")
    mask_sub = p.add_subparsers(dest="mask_command", required=True)
    m = mask_sub.add_parser("dump", help="window and seam-mask summary")
    m.add_argument("--nside", type=int, required=True)
    m.add_argument("--out", default=None)
    m.set_defaults(func=_cmd_mask_dump)

    p = sub.add_parser("params", help="model parameter introspection")
    params_sub = p.add_subparsers(dest="params_command", required=True)
    q = params_sub.add_parser("count", help="trainable parameter count")
    q.add_argument("--nside", type=int, required=True)
    q.set_defaults(func=_cmd_params_count)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
