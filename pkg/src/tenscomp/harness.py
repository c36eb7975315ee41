"""Batch experiments: multi-seed reconstruction runs, grid searches and reports.

Run ``k`` of a batch draws its wells with seed ``base_seed + k`` for every
method and well count (paired design), so results do not depend on execution
order or on the number of workers.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import admm, geodata, synthetic
from .kriging import SearchEllipsoid, ordinary_krige
from .tensor import rse
from .variogram import VariogramModel, fit_anisotropic_from_grid

log = logging.getLogger(__name__)

METHODS = ("tensor_plain", "tensor_smoothed", "kriging")
STANDARD_WELLS = (100, 300, 500, 700)
DEFAULT_RHO_GRID = (0.1, 0.5, 0.9, 1.001, 1.01, 1.1)
DEFAULT_ALPHA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1.1)
PANEL_SLICES = (12, 27, 50, 75)
DESK_CROP = (60, 110, 40)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    data: Optional[str] = None
    synthetic: Optional[dict] = None
    crop: Optional[list] = None
    crop_origin: list = field(default_factory=lambda: [0, 0, 0])
    scale_wells: bool = True
    cell_ft: Optional[list] = None
    wells: list = field(default_factory=lambda: list(STANDARD_WELLS))
    seeds: int = 50
    base_seed: int = 0
    methods: list = field(default_factory=lambda: ["tensor_smoothed", "kriging"])
    admm: dict = field(default_factory=lambda: {"alpha": 0.01, "rho": 0.1})
    admm_per_wells: dict = field(default_factory=dict)
    normalize: bool = True
    variogram: Optional[dict] = None
    variogram_kind: str = "spherical"
    ellipsoid: Optional[dict] = None
    ellipsoid_per_wells: dict = field(default_factory=dict)
    max_neighbors: int = 16
    panels: list = field(default_factory=list)
    save_traces: bool = True
    out: str = "out"
    workers: int = 1

    def __post_init__(self):
        methods = []
        for m in self.methods:
            methods.extend(METHODS if m == "all" else [m])
        self.methods = list(dict.fromkeys(methods))
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {METHODS} or 'all'")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not self.wells:
            raise ConfigError("at least one well count is required")
        if int(self.seeds) < 1:
            raise ConfigError("at least one seed is required")
        if (self.data is None) == (self.synthetic is None):
            raise ConfigError("exactly one of 'data' and 'synthetic' must be given")
        self.wells = [int(w) for w in self.wells]
        # JSON object keys are strings
        self.admm_per_wells = {int(k): v for k, v in self.admm_per_wells.items()}
        self.ellipsoid_per_wells = {int(k): v for k, v in self.ellipsoid_per_wells.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    def admm_params(self, n_wells: int) -> admm.AdmmParams:
        p = dict(self.admm)
        p.update(self.admm_per_wells.get(int(n_wells), {}))
        try:
            return admm.AdmmParams(**p)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad ADMM parameters {p}: {exc}") from exc


@dataclass
class Dataset:
    truth: np.ndarray
    cell_ft: tuple
    lateral_full: int  # lateral cell count before cropping

    @property
    def dims(self):
        return self.truth.shape

    def effective_wells(self, n_wells: int, scale: bool) -> int:
        lateral = self.dims[0] * self.dims[1]
        if scale and lateral != self.lateral_full:
            return max(1, int(round(n_wells * lateral / self.lateral_full)))
        return int(n_wells)


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.data is not None:
        path = Path(config.data)
        meta = geodata.read_manifest(path) if path.exists() else None
        truth = geodata.load_field(path)
        cell = tuple(meta["cell_ft"]) if meta and "cell_ft" in meta else geodata.SPE10_CELL_FT
    else:
        try:
            truth = synthetic.make_field(config.synthetic)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad synthetic field spec: {exc}") from exc
        cell = (1.0, 1.0, 1.0)
    if config.cell_ft is not None:
        cell = tuple(float(c) for c in config.cell_ft)
    lateral_full = truth.shape[0] * truth.shape[1]
    if config.crop is not None:
        try:
            truth = geodata.crop(truth, config.crop, config.crop_origin)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return Dataset(truth=truth, cell_ft=cell, lateral_full=lateral_full)


@dataclass
class RunResult:
    method: str
    n_wells: int
    run: int
    seed: int
    rse: float
    iterations: int = 0
    wall_time: float = 0.0
    fallback_cells: int = 0
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error and math.isfinite(self.rse)


def run_seed(config: ExperimentConfig, run: int) -> int:
    return int(config.base_seed) + int(run)


def reconstruct_tensor(truth, mask, params: admm.AdmmParams, smoothed: bool, normalize: bool = True):
    """Complete ``truth`` from its observed cells, with optional z-scoring."""
    y = np.where(mask, truth, 0.0)
    norm = None
    if normalize:
        y, norm = geodata.normalize(y, mask)
        y = np.where(mask, y, 0.0)
    solve = admm.complete_smoothed if smoothed else admm.complete_plain
    rec, trace = solve(y, mask, params)
    if norm is not None:
        rec = geodata.denormalize(rec, norm)
    # exact observed values, bypassing the normalization round trip
    return np.where(mask, truth, rec), trace


def default_ellipsoid(model: VariogramModel, max_neighbors: int = 16) -> SearchEllipsoid:
    return SearchEllipsoid(
        radii=model.ranges, azimuth=model.azimuth, dip=model.dip, max_neighbors=max_neighbors
    )


def reconstruct_kriging(truth, mask, model: VariogramModel, ellipsoid: SearchEllipsoid, cell_ft):
    pos = np.argwhere(mask)
    vals = truth[mask]
    return ordinary_krige(pos, vals, truth.shape, model, ellipsoid, cell_ft)


class _Context:
    """Everything a worker needs, computed once per batch."""

    def __init__(self, config: ExperimentConfig, dataset: Dataset):
        self.config = config
        self.dataset = dataset
        self.model = None
        if "kriging" in config.methods:
            self.model = kriging_model(config, dataset)

    def ellipsoid(self, n_wells: int) -> SearchEllipsoid:
        d = self.config.ellipsoid_per_wells.get(int(n_wells), self.config.ellipsoid)
        if d is None:
            return default_ellipsoid(self.model, self.config.max_neighbors)
        return SearchEllipsoid.from_dict(d)


def kriging_model(config: ExperimentConfig, dataset: Dataset) -> VariogramModel:
    """Variogram from the config, or fitted to the full ground truth."""
    if config.variogram is not None:
        return VariogramModel.from_dict(config.variogram)
    return fit_anisotropic_from_grid(dataset.truth, config.variogram_kind, dataset.cell_ft)


def run_job(ctx: _Context, method: str, n_wells: int, run: int, keep: bool = False):
    """One (method, wells, run) job.  Returns ``(RunResult, trace, field)``;
    failures are captured in ``RunResult.error``."""
    cfg, ds = ctx.config, ctx.dataset
    seed = run_seed(cfg, run)
    n_eff = ds.effective_wells(n_wells, cfg.scale_wells)
    _, mask = geodata.sample_wells(ds.dims, n_eff, seed)
    res = RunResult(method=method, n_wells=n_wells, run=run, seed=seed, rse=float("nan"))
    trace = None
    rec = None
    t0 = time.perf_counter()
    try:
        if method == "kriging":
            rec, estimated = reconstruct_kriging(ds.truth, mask, ctx.model, ctx.ellipsoid(n_wells), ds.cell_ft)
            res.fallback_cells = int((~estimated).sum())
        else:
            rec, trace = reconstruct_tensor(
                ds.truth, mask, cfg.admm_params(n_wells), method == "tensor_smoothed", cfg.normalize
            )
            res.iterations = len(trace)
        res.rse = rse(rec, ds.truth, mask)
    except admm.DivergenceError as exc:
        res.error = f"diverged: {exc}"
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        res.error = f"{type(exc).__name__}: {exc}"
    res.wall_time = time.perf_counter() - t0
    return res, trace, (rec if keep else None)


_WORKER_CTX = None


def _init_worker(config_dict, truth, cell_ft, lateral_full, model):
    global _WORKER_CTX
    ctx = _Context.__new__(_Context)
    ctx.config = ExperimentConfig.from_dict(config_dict)
    ctx.dataset = Dataset(truth, cell_ft, lateral_full)
    ctx.model = model
    _WORKER_CTX = ctx


def _worker(job):
    return run_job(_WORKER_CTX, *job)


def _validate_wells(config: ExperimentConfig, dataset: Dataset):
    lateral = dataset.dims[0] * dataset.dims[1]
    for w in config.wells:
        n = dataset.effective_wells(w, config.scale_wells)
        if n >= lateral:
            raise ConfigError(f"{w} wells observe every cell: no unobserved cells to score")
        if n < 1:
            raise ConfigError(f"well count must be positive, got {w}")


def run_experiment(config: ExperimentConfig, dataset: Optional[Dataset] = None):
    """Run every (method, wells, run) job.

    Returns ``(results, traces, fields)`` with results sorted by
    (method, wells, run).  ``fields`` holds run-0 reconstructions keyed by
    ``(method, wells)`` for panel rendering.
    """
    dataset = dataset or load_dataset(config)
    _validate_wells(config, dataset)
    ctx = _Context(config, dataset)
    jobs = [
        (m, w, k, k == 0)
        for m in config.methods
        for w in config.wells
        for k in range(int(config.seeds))
    ]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(
            max_workers=int(config.workers),
            initializer=_init_worker,
            initargs=(config.to_dict(), dataset.truth, dataset.cell_ft, dataset.lateral_full, ctx.model),
        ) as pool:
            outputs = list(pool.map(_worker, jobs))
    else:
        outputs = [run_job(ctx, *job) for job in jobs]
    results, traces, fields_ = [], {}, {}
    for (res, trace, rec) in outputs:
        results.append(res)
        if trace is not None:
            traces[(res.method, res.n_wells, res.run)] = trace
        if rec is not None:
            fields_[(res.method, res.n_wells)] = rec
        if res.error:
            log.warning("%s wells=%d run=%d failed: %s", res.method, res.n_wells, res.run, res.error)
    results.sort(key=lambda r: (METHODS.index(r.method), r.n_wells, r.run))
    return results, traces, fields_


def summarize(results, dataset: Dataset = None, config: ExperimentConfig = None):
    """Mean and sample standard deviation of RSE per (method, wells), over
    successful runs only."""
    groups = {}
    for r in results:
        groups.setdefault((r.method, r.n_wells), []).append(r)
    rows = []
    for (method, wells), runs in sorted(groups.items(), key=lambda kv: (METHODS.index(kv[0][0]), kv[0][1])):
        vals = np.array([r.rse for r in runs if r.ok])
        row = {
            "method": method,
            "wells": wells,
            "n_runs": len(runs),
            "n_failed": len(runs) - len(vals),
            "mean_rse": float(vals.mean()) if len(vals) else float("nan"),
            "std_rse": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
        }
        if dataset is not None and config is not None:
            n_eff = dataset.effective_wells(wells, config.scale_wells)
            k = dataset.dims[2]
            row["active_pct"] = 100.0 * n_eff * k / int(np.prod(dataset.dims))
        rows.append(row)
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])
    return path


def write_results(out_dir, results, summary):
    """``summary.csv`` (deterministic), ``runs.csv`` (with timing) and the
    Table-1-style ``table.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    head = ["method", "wells", "mean_rse", "std_rse", "n_runs", "n_failed"]
    if summary and "active_pct" in summary[0]:
        head.insert(2, "active_pct")
    _write_csv(out / "summary.csv", head, summary)
    run_head = ["method", "n_wells", "run", "seed", "rse", "iterations", "fallback_cells", "wall_time", "error"]
    _write_csv(out / "runs.csv", run_head, [asdict(r) for r in results])

    methods = list(dict.fromkeys(r["method"] for r in summary))
    wells = sorted({r["wells"] for r in summary})
    by = {(r["method"], r["wells"]): r for r in summary}
    head = ["wells", "active_pct"] + [f"rse_{m}" for m in methods]
    rows = []
    for w in wells:
        any_row = next(by[(m, w)] for m in methods if (m, w) in by)
        row = {"wells": w, "active_pct": round(any_row.get("active_pct", float("nan")), 1)}
        for m in methods:
            s = by.get((m, w))
            row[f"rse_{m}"] = "" if s is None else f"{s['mean_rse']:.3f}±{s['std_rse']:.4f}"
        rows.append(row)
    _write_csv(out / "table.csv", head, rows)
    return out


def save_fields(out_dir, truth, fields_, masks):
    """Persist run-0 reconstructions and masks for later rendering."""
    fdir = Path(out_dir) / "fields"
    fdir.mkdir(parents=True, exist_ok=True)
    np.save(fdir / "truth.npy", truth)
    for (method, wells), rec in fields_.items():
        np.save(fdir / f"{method}_w{wells}.npy", rec)
    for wells, mask in masks.items():
        np.save(fdir / f"mask_w{wells}.npy", mask)
    return fdir


def panel_slices(dims, requested=PANEL_SLICES):
    return [z for z in requested if 0 <= z < dims[2]]


def render_panels(out_dir, panels=None):
    """Write 4-tile z cross-section panels (truth, kriging, completion, mask)
    from the fields saved by :func:`save_fields`.

    ``panels`` lists ``(z, wells)`` pairs; by default every saved well count at
    the standard slice depths.  Returns the written panel paths.
    """
    out = Path(out_dir)
    fdir = out / "fields"
    if not (fdir / "truth.npy").exists():
        raise FileNotFoundError(f"{fdir}: no saved fields; run a benchmark first")
    truth = np.load(fdir / "truth.npy")
    saved_wells = sorted(int(p.stem[6:]) for p in fdir.glob("mask_w*.npy"))
    if panels is None or len(panels) == 0:
        panels = [(z, w) for w in saved_wells for z in panel_slices(truth.shape)]
    pdir = out / "panels"
    pdir.mkdir(parents=True, exist_ok=True)
    lo, hi = float(truth.min()), float(truth.max())
    written = []
    for z, wells in panels:
        z, wells = int(z), int(wells)
        mask_path = fdir / f"mask_w{wells}.npy"
        if not mask_path.exists():
            log.warning("no saved mask for %d wells; skipping panel", wells)
            continue
        mask = np.load(mask_path)
        completion = None
        for m in ("tensor_smoothed", "tensor_plain"):
            if (fdir / f"{m}_w{wells}.npy").exists():
                completion = np.load(fdir / f"{m}_w{wells}.npy")
                break
        kpath = fdir / f"kriging_w{wells}.npy"
        tiles = {
            "truth": truth,
            "kriging": np.load(kpath) if kpath.exists() else None,
            "completion": completion,
            "mask": mask.astype(float),
        }
        planes, ranges = [], []
        for name, fld in tiles.items():
            if fld is None:
                log.warning("panel z=%d wells=%d: no %s field", z, wells, name)
                continue
            rng = (0.0, 1.0) if name == "mask" else (lo, hi)
            geodata.export_slice_image(fld, "z", z, pdir / f"z{z}_w{wells}_{name}.pgm", rng)
            planes.append(geodata.slice_plane(fld, "z", z))
            ranges.append(rng)
        written.append(geodata.write_panel(pdir / f"z{z}_w{wells}_panel.pgm", planes, ranges))
    return written


def render_report(results, config: ExperimentConfig, dataset: Dataset, traces=None, fields_=None):
    """Write summary/run/table CSVs, convergence traces and panels."""
    if not results:
        raise ValueError("no results to report")
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    summary = summarize(results, dataset, config)
    write_results(out, results, summary)
    if traces and config.save_traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for (method, wells, run), trace in sorted(traces.items()):
            trace.to_csv(tdir / f"{method}_w{wells}_r{run}.csv")
    if fields_:
        masks = {}
        for w in {w for (_, w) in fields_}:
            n_eff = dataset.effective_wells(w, config.scale_wells)
            masks[w] = geodata.sample_wells(dataset.dims, n_eff, run_seed(config, 0))[1]
        save_fields(out, dataset.truth, fields_, masks)
        panels = config.panels or [(z, w) for w in sorted(masks) for z in panel_slices(dataset.dims)]
        render_panels(out, panels)
    return summary


@dataclass
class GridSearchSpec:
    rho: list = field(default_factory=lambda: list(DEFAULT_RHO_GRID))
    alpha: list = field(default_factory=lambda: list(DEFAULT_ALPHA_GRID))
    beta_ratio: float = 0.1
    seeds: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        if not self.rho or not self.alpha or not self.seeds:
            raise ConfigError("grid search needs nonempty rho, alpha and seed lists")


def grid_search(spec: GridSearchSpec, config: ExperimentConfig, n_wells: int, dataset: Optional[Dataset] = None,
                method: str = "tensor_smoothed"):
    """Score every (rho, alpha) pair with ``beta = beta_ratio * rho``.

    Each cell's score is the mean RSE over ``spec.seeds`` (used as run indices).
    Cells where any run fails are marked diverged and excluded.  Ties go to the
    smaller alpha, then the smaller rho.  Returns ``(best_params, rows)``.
    """
    dataset = dataset or load_dataset(config)
    base = config.admm_params(n_wells)
    rows = []
    for rho in spec.rho:
        for alpha in spec.alpha:
            params = admm.AdmmParams(
                alpha=alpha, rho=rho, beta=spec.beta_ratio * rho, max_iters=base.max_iters, rel_tol=base.rel_tol
            )
            cfg = ExperimentConfig.from_dict({
                **config.to_dict(),
                "methods": [method],
                "admm": asdict(params),
                "admm_per_wells": {},
            })
            ctx = _Context(cfg, dataset)
            scores, errors = [], []
            for run in spec.seeds:
                res, _, _ = run_job(ctx, method, n_wells, int(run))
                (scores if res.ok else errors).append(res.rse if res.ok else res.error)
            rows.append({
                "rho": rho,
                "alpha": alpha,
                "beta": spec.beta_ratio * rho,
                "mean_rse": float(np.mean(scores)) if not errors else float("nan"),
                "status": "ok" if not errors else "diverged",
            })
    good = [r for r in rows if r["status"] == "ok"]
    if not good:
        raise admm.DivergenceError(-1, None, f"score in every grid cell ({len(rows)} cells)")
    best = min(good, key=lambda r: (r["mean_rse"], r["alpha"], r["rho"]))
    return (
        admm.AdmmParams(alpha=best["alpha"], rho=best["rho"], beta=best["beta"],
                        max_iters=base.max_iters, rel_tol=base.rel_tol),
        rows,
    )


def write_grid(path, rows):
    return _write_csv(Path(path), ["rho", "alpha", "beta", "mean_rse", "status"], rows)


def _improves(score, best, rtol):
    return math.isfinite(score) and (best is None or score < best - rtol * abs(best))


def tune_ellipsoid(config: ExperimentConfig, radii_grid, azimuth_grid, refine_grid=None,
                   stage1_wells: int = 500, seeds=(0,), dataset: Optional[Dataset] = None,
                   tie_rtol: float = 1e-9):
    """Two-stage search-ellipsoid tuning for kriging.

    Stage 1 scores every (radii, azimuth) pair at ``stage1_wells`` wells.
    Stage 2 keeps the winning radii and, for each configured well count,
    picks the best azimuth from ``refine_grid`` (defaults to
    ``azimuth_grid``).  A later candidate must beat the incumbent by more than
    ``tie_rtol`` (relative) to replace it, so near-ties go to the first.  Returns
    ``({wells: SearchEllipsoid}, stage1_rows, stage2_rows)``.
    """
    dataset = dataset or load_dataset(config)
    cfg = ExperimentConfig.from_dict({**config.to_dict(), "methods": ["kriging"]})
    ctx = _Context(cfg, dataset)
    refine_grid = list(azimuth_grid if refine_grid is None else refine_grid)

    def score(radii, az, wells):
        cfg.ellipsoid_per_wells = {
            int(wells): SearchEllipsoid(radii=tuple(radii), azimuth=az, dip=ctx.model.dip,
                                        max_neighbors=cfg.max_neighbors).to_dict()
        }
        vals = []
        for run in seeds:
            res, _, _ = run_job(ctx, "kriging", wells, int(run))
            if not res.ok:
                return float("nan")
            vals.append(res.rse)
        return float(np.mean(vals))

    stage1 = []
    best = None
    for radii in radii_grid:
        for az in azimuth_grid:
            s = score(radii, az, stage1_wells)
            stage1.append({"radii": list(radii), "azimuth": az, "mean_rse": s})
            if _improves(s, None if best is None else best[0], tie_rtol):
                best = (s, tuple(radii), az)
    if best is None:
        raise ValueError("every stage-1 ellipsoid candidate failed")
    radii = best[1]
    stage2 = []
    chosen = {}
    for wells in config.wells:
        top = None
        for az in refine_grid:
            s = score(radii, az, wells)
            stage2.append({"wells": wells, "azimuth": az, "mean_rse": s})
            if _improves(s, None if top is None else top[0], tie_rtol):
                top = (s, az)
        az = best[2] if top is None else top[1]
        chosen[int(wells)] = SearchEllipsoid(radii=radii, azimuth=az, dip=ctx.model.dip,
                                             max_neighbors=cfg.max_neighbors)
    return chosen, stage1, stage2
