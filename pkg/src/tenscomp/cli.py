"""Command-line entry point: ``tenscomp <subcommand> [flags]``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 solver
divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import geodata, harness
from .admm import DivergenceError
from .harness import ConfigError, ExperimentConfig

log = logging.getLogger("tenscomp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

BEST_PARAMS = "best_params.json"
ELLIPSOIDS = "ellipsoids.json"


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON experiment config; flags override it")
    p.add_argument("--data", help="ASCII property file (SPE10 porosity layout)")
    p.add_argument("--synthetic", help='synthetic field spec as JSON, e.g. \'{"kind":"grf","dims":[30,40,20]}\'')
    p.add_argument("--wells", type=_ints, help="comma-separated well counts")
    p.add_argument("--seeds", type=int, help="runs per well count")
    p.add_argument("--base-seed", type=int)
    p.add_argument("--method", help="tensor_plain, tensor_smoothed, kriging or all (comma-separated)")
    p.add_argument("--rho", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float, help="default 0.1 * rho")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--crop", type=_ints, help="crop to i,j,k cells (well counts scale with lateral area)")
    p.add_argument("--desk", action="store_true", help=f"crop to {harness.DESK_CROP} unless --crop is given")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_config(args, default_method=None) -> ExperimentConfig:
    d = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if args.data:
        d["data"], d["synthetic"] = args.data, None
    if args.synthetic:
        try:
            d["synthetic"], d["data"] = json.loads(args.synthetic), None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--synthetic is not valid JSON: {exc}") from exc
    for flag, key in (("wells", "wells"), ("seeds", "seeds"), ("base_seed", "base_seed"),
                      ("out", "out"), ("workers", "workers"), ("crop", "crop")):
        if getattr(args, flag) is not None:
            d[key] = getattr(args, flag)
    if args.desk and "crop" not in d:
        d["crop"] = list(harness.DESK_CROP)
    if args.method:
        d["methods"] = args.method.split(",")
    elif default_method and "methods" not in d:
        d["methods"] = [default_method]
    admm_over = dict(d.get("admm", {"alpha": 0.01, "rho": 0.1}))
    for flag, key in (("rho", "rho"), ("alpha", "alpha"), ("beta", "beta"),
                      ("max_iters", "max_iters"), ("tol", "rel_tol")):
        if getattr(args, flag) is not None:
            admm_over[key] = getattr(args, flag)
    if args.rho is not None and args.beta is None:
        admm_over.pop("beta", None)
    d["admm"] = admm_over
    if d.get("data") is None and d.get("synthetic") is None:
        raise ConfigError("no dataset: pass --data, --synthetic or a config file")
    cfg = ExperimentConfig.from_dict(d)
    cfg.admm_params(cfg.wells[0])  # validate early
    return cfg


def _load_cached(cfg: ExperimentConfig):
    out = Path(cfg.out)
    if not cfg.admm_per_wells and (out / BEST_PARAMS).exists():
        cfg.admm_per_wells = {int(k): v for k, v in json.loads((out / BEST_PARAMS).read_text()).items()}
        log.info("using tuned ADMM parameters from %s", out / BEST_PARAMS)
    if not cfg.ellipsoid_per_wells and (out / ELLIPSOIDS).exists():
        cfg.ellipsoid_per_wells = {int(k): v for k, v in json.loads((out / ELLIPSOIDS).read_text()).items()}
        log.info("using tuned search ellipsoids from %s", out / ELLIPSOIDS)


def cmd_single(args, method):
    cfg = build_config(args, default_method=method)
    if len(cfg.methods) != 1:
        raise ConfigError("single-run commands take exactly one method")
    method = cfg.methods[0]
    _load_cached(cfg)
    ds = harness.load_dataset(cfg)
    harness._validate_wells(cfg, ds)
    wells = cfg.wells[0]
    ctx = harness._Context(cfg, ds)
    res, trace, rec = harness.run_job(ctx, method, wells, 0, keep=True)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    plan, _ = geodata.sample_wells(ds.dims, ds.effective_wells(wells, cfg.scale_wells), res.seed)
    plan.to_csv(out / "wells.csv")
    if rec is not None:
        geodata.save_field(out / f"{method}.txt", rec, ds.cell_ft)
    if trace is not None:
        trace.to_csv(out / f"{method}_trace.csv")
    if method == "kriging":
        report = {"variogram": ctx.model.to_dict(), "ellipsoid": ctx.ellipsoid(wells).to_dict()}
        (out / "variogram.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps({k: v for k, v in asdict(res).items()}))
    if res.error.startswith("diverged"):
        return EXIT_DIVERGED
    if res.error:
        return EXIT_DATA
    return EXIT_OK


def cmd_benchmark(args):
    cfg = build_config(args)
    _load_cached(cfg)
    ds = harness.load_dataset(cfg)
    results, traces, fields_ = harness.run_experiment(cfg, ds)
    summary = harness.render_report(results, cfg, ds, traces, fields_)
    for row in summary:
        print(f"{row['method']:16s} wells={row['wells']:5d}  RSE {row['mean_rse']:.4f} ± {row['std_rse']:.4f}"
              f"  ({row['n_failed']} failed)")
    if all(not r.ok for r in results) and any(r.error.startswith("diverged") for r in results):
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_gridsearch(args):
    cfg = build_config(args, default_method="tensor_smoothed")
    method = cfg.methods[0]
    if method == "kriging":
        raise ConfigError("gridsearch tunes the tensor methods; use tune-ellipsoid for kriging")
    spec = harness.GridSearchSpec(
        rho=args.rho_grid or list(harness.DEFAULT_RHO_GRID),
        alpha=args.alpha_grid or list(harness.DEFAULT_ALPHA_GRID),
        beta_ratio=args.beta_ratio,
        seeds=args.selection_runs or [0],
    )
    ds = harness.load_dataset(cfg)
    harness._validate_wells(cfg, ds)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = json.loads((out / BEST_PARAMS).read_text()) if (out / BEST_PARAMS).exists() else {}
    for wells in cfg.wells:
        best, rows = harness.grid_search(spec, cfg, wells, ds, method)
        harness.write_grid(out / f"gridsearch_w{wells}.csv", rows)
        cache[str(wells)] = asdict(best)
        print(f"wells={wells}: alpha={best.alpha} rho={best.rho} beta={best.beta}")
    (out / BEST_PARAMS).write_text(json.dumps(cache, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_tune_ellipsoid(args):
    cfg = build_config(args, default_method="kriging")
    ds = harness.load_dataset(cfg)
    harness._validate_wells(cfg, ds)
    model = harness.kriging_model(cfg, ds)
    radii_grid = [tuple(s * r for r in model.ranges) for s in args.radius_scales]
    stage1_wells = args.stage1_wells
    chosen, stage1, stage2 = harness.tune_ellipsoid(
        cfg, radii_grid, args.azimuths, args.refine, stage1_wells, args.selection_runs or [0], ds
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / ELLIPSOIDS).write_text(
        json.dumps({str(w): e.to_dict() for w, e in chosen.items()}, indent=2) + "\n"
    )
    (out / "tune_ellipsoid.json").write_text(json.dumps({"stage1": stage1, "stage2": stage2}, indent=2) + "\n")
    for w, e in chosen.items():
        print(f"wells={w}: radii={e.radii} azimuth={e.azimuth}")
    return EXIT_OK


def cmd_render(args):
    panels = None
    if args.panels:
        panels = [tuple(int(v) for v in p.split(":")) for p in args.panels.split(",")]
    written = harness.render_panels(args.out, panels)
    for p in written:
        print(p)
    return EXIT_OK


def make_parser():
    parser = argparse.ArgumentParser(prog="tenscomp", description="Tensor completion and kriging for sparse-well property fields.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("reconstruct", "single tensor-completion run"),
                        ("krige", "single ordinary-kriging run"),
                        ("benchmark", "multi-seed comparison table"),
                        ("gridsearch", "ADMM (rho, alpha) grid search per well count"),
                        ("tune-ellipsoid", "two-stage kriging search-ellipsoid tuning")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "gridsearch":
            p.add_argument("--rho-grid", type=_floats)
            p.add_argument("--alpha-grid", type=_floats)
            p.add_argument("--beta-ratio", type=float, default=0.1)
            p.add_argument("--selection-runs", type=_ints, help="run indices scored per grid cell")
        if name == "tune-ellipsoid":
            p.add_argument("--radius-scales", type=_floats, default=[0.5, 1.0, 2.0],
                           help="candidate radii as multiples of the fitted variogram ranges")
            p.add_argument("--azimuths", type=_floats, default=[0.0, 45.0, 90.0, 135.0])
            p.add_argument("--refine", type=_floats, help="stage-2 azimuth candidates")
            p.add_argument("--stage1-wells", type=int, default=500)
            p.add_argument("--selection-runs", type=_ints)
    p = sub.add_parser("render", help="cross-section panels from a benchmark output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--panels", help="comma-separated z:wells pairs, e.g. 12:500,27:500")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "reconstruct": lambda a: cmd_single(a, "tensor_smoothed"),
        "krige": lambda a: cmd_single(a, "kriging"),
        "benchmark": cmd_benchmark,
        "gridsearch": cmd_gridsearch,
        "tune-ellipsoid": cmd_tune_ellipsoid,
        "render": cmd_render,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (geodata.DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
