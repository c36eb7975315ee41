"""Acceptance criteria, one test each.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL <detail>`` line before
asserting, so ``pytest -v -s`` (or the tee'd log) gives a readable scorecard.
"""

import json
import os
import time

import numpy as np
import pytest

from tenscomp import cli, geodata, harness, synthetic
from tenscomp.admm import AdmmParams, complete_plain, complete_smoothed
from tenscomp.kriging import SearchEllipsoid, krige_points, krige_weights, ordinary_krige
from tenscomp.linalg import build_difference_operator, path_laplacian, precompute_solver, svt
from tenscomp.tensor import fold, frobenius_norm, project, project_complement, rse, unfold
from tenscomp.variogram import VariogramModel

from oracles import oracle_ok, svt_oracle


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return _report


def test_criterion_1_algebraic_properties(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = {"fold": 0.0, "partition": 0.0, "norm": 0.0, "svt": 0.0, "svt0": 0.0, "solver": 0.0}
    laplacian_exact = True
    for _ in range(40):
        dims = tuple(rng.integers(1, 21, 3))
        x = rng.standard_normal(dims)
        mask = rng.random(dims) < rng.random()
        for n in range(3):
            worst["fold"] = max(worst["fold"], float(np.max(np.abs(fold(unfold(x, n), n, dims) - x))))
            worst["norm"] = max(worst["norm"], abs(np.linalg.norm(unfold(x, n)) - frobenius_norm(x)))
        parts = project(x, mask) + project_complement(x, mask)
        worst["partition"] = max(worst["partition"], float(np.max(np.abs(parts - x))))
    for _ in range(200):
        m, n = rng.integers(1, 9, 2)
        a = rng.standard_normal((m, n))
        tau = rng.uniform(0, 2)
        worst["svt"] = max(worst["svt"], float(np.max(np.abs(svt(a, tau) - svt_oracle(a, tau)))))
        worst["svt0"] = max(worst["svt0"], float(np.max(np.abs(svt(a, 0.0) - a))))
    for n in range(2, 51):
        d = build_difference_operator(n)
        laplacian_exact &= bool(np.array_equal(d.T @ d, path_laplacian(n)))
        beta, rho = rng.uniform(0.01, 2, 2)
        b = rng.standard_normal((n, 7))
        dense = np.linalg.solve(beta * d.T @ d + rho * np.eye(n), b)
        worst["solver"] = max(worst["solver"], float(np.max(np.abs(precompute_solver(d, beta, rho).solve(b) - dense))))
    elapsed = time.perf_counter() - t0
    ok = (
        worst["fold"] == 0.0
        and worst["partition"] == 0.0
        and worst["norm"] <= 1e-10
        and worst["svt"] <= 1e-10
        and worst["svt0"] <= 1e-8
        and laplacian_exact
        and worst["solver"] <= 1e-10
        and elapsed < 30
    )
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    report(1, ok, f"{detail} laplacian_exact={laplacian_exact} time={elapsed:.1f}s")
    assert ok


def test_criterion_2_data_consistency(report):
    rng = np.random.default_rng(2)
    runs, exact = 0, True
    cases = [
        synthetic.rank_one((6, 7, 5), 0),
        synthetic.layered((10, 8, 6)),
        synthetic.gaussian_random_field((9, 9, 4), (2, 2, 1), 3) * 1e3 + 0.1,
    ]
    for y in cases:
        for frac in (0.05, 0.3, 0.9):
            mask = rng.random(y.shape) < frac
            mask.flat[0] = True
            for solver in (complete_plain, complete_smoothed):
                for params in (AdmmParams(alpha=0.01, rho=0.1, max_iters=30), AdmmParams(alpha=1.1, rho=1.1, max_iters=30)):
                    rec, _ = solver(y, mask, params)
                    exact &= bool(np.array_equal(rec[mask], y[mask]))
                    runs += 1
            pos = np.argwhere(mask)
            model = VariogramModel("spherical", sill=1.0, ranges=(5.0, 5.0, 3.0))
            rec, _ = ordinary_krige(pos, y[mask], y.shape, model, SearchEllipsoid(radii=(6.0, 6.0, 4.0)))
            exact &= bool(np.array_equal(rec[mask], y[mask]))
            runs += 1
            for normalize in (True, False):
                rec, _ = harness.reconstruct_tensor(y, mask, AdmmParams(max_iters=10), True, normalize)
                exact &= bool(np.array_equal(rec[mask], y[mask]))
                runs += 1
    report(2, exact, f"{runs} runs, observed cells bit-exact={exact}")
    assert exact


def test_criterion_3_low_rank_recovery(report):
    t0 = time.perf_counter()
    y3 = synthetic.tucker((40, 40, 40), (3, 3, 3), seed=0)
    m3 = np.random.default_rng(0).random(y3.shape) < 0.10
    rec3, tr3 = complete_plain(y3, m3, AdmmParams(alpha=3.0, rho=1.0, max_iters=500))
    e3 = rse(rec3, y3, m3)
    y1 = synthetic.rank_one((10, 10, 10), seed=0)
    m1 = np.random.default_rng(0).random(y1.shape) < 0.5
    rec1, tr1 = complete_plain(y1, m1, AdmmParams(alpha=0.3, rho=1.0, max_iters=300))
    e1 = rse(rec1, y1, m1)
    elapsed = time.perf_counter() - t0
    ok = e3 <= 0.05 and len(tr3) <= 500 and e1 <= 1e-2 and len(tr1) <= 300 and elapsed < 120
    report(3, ok, f"tucker RSE={e3:.4f} ({len(tr3)} it) rank1 RSE={e1:.2e} ({len(tr1)} it) time={elapsed:.0f}s")
    assert e1 <= 1e-2 and len(tr1) <= 300
    assert e3 <= 0.05 and len(tr3) <= 500


def test_criterion_4_smoothing_benefit(report):
    y = synthetic.layered((40, 40, 30))
    params = AdmmParams(alpha=1.0, rho=1.0, max_iters=200)
    pairs = []
    for seed in range(5):
        mask = np.random.default_rng(seed).random(y.shape) < 0.05
        plain, _ = complete_plain(y, mask, params)
        smooth, _ = complete_smoothed(y, mask, params)
        pairs.append((rse(smooth, y, mask), rse(plain, y, mask)))
    wins = sum(s < p for s, p in pairs)
    report(4, wins == 5, f"{wins}/5 seeds; " + " ".join(f"{s:.3f}<{p:.3f}" for s, p in pairs))
    assert wins == 5


def test_criterion_5_kriging_correctness(report):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    pts = rng.integers(0, 40, (300, 3)).astype(float)
    vals = rng.standard_normal(300)
    model = VariogramModel("spherical", nugget=0.1, sill=1.0, ranges=(18.0, 10.0, 5.0), azimuth=35.0)
    ell = SearchEllipsoid(radii=(25.0, 25.0, 12.0), azimuth=35.0, max_neighbors=16)
    targets = rng.integers(0, 40, (1000, 3)).astype(float)
    _, counts, w, _ = krige_points(pts, vals, targets, model, ell, return_weights=True)
    ok_rows = counts >= 1
    sum_err = float(np.max(np.abs(w[ok_rows].sum(axis=1) - 1.0)))

    pred_at, _ = krige_points(pts, vals, pts, model, ell)
    uniq, idx = np.unique(pts, axis=0, return_index=True)
    single = np.array([np.sum(np.all(pts == u, axis=1)) == 1 for u in uniq])
    exact_err = float(np.max(np.abs(pred_at[idx[single]] - vals[idx[single]])))

    sph = VariogramModel("spherical", nugget=0.0, sill=1.0, ranges=(10.0, 10.0, 10.0))
    big = SearchEllipsoid(radii=(1e6, 1e6, 1e6), max_neighbors=64)
    oracle_err = 0.0
    for n in range(1, 11):
        p = rng.uniform(0, 12, (n, 3))
        v = rng.standard_normal(n)
        tgt = rng.uniform(0, 12, 3)
        lam, ref = oracle_ok(p, v, tgt)
        oracle_err = max(oracle_err, float(np.max(np.abs(krige_weights(p, tgt, sph).weights - lam))))
        pred, _ = krige_points(p, v, [tgt], sph, big)
        oracle_err = max(oracle_err, abs(pred[0] - ref))
    c5 = float(sph.covariance(np.array([5.0, 0.0, 0.0])))
    elapsed = time.perf_counter() - t0
    ok = (ok_rows.sum() == 1000 and sum_err <= 1e-8 and exact_err <= 1e-8 and oracle_err <= 1e-8
          and abs(c5 - 0.3125) <= 1e-12 and elapsed < 30)
    report(5, ok, f"weight_sum_err={sum_err:.1e} exactness_err={exact_err:.1e} oracle_err={oracle_err:.1e} "
                  f"C(5)={c5!r} time={elapsed:.1f}s")
    assert ok


def test_criterion_6_active_cell_fractions(report):
    expected = {100: 0.8, 300: 2.3, 500: 3.8, 700: 5.3}
    got = {}
    for wells in harness.STANDARD_WELLS:
        _, mask = geodata.sample_wells(geodata.SPE10_DIMS, wells, seed=0)
        got[wells] = round(geodata.active_cell_fraction(mask), 1)
    ok = got == expected
    report(6, ok, " ".join(f"{w}:{p}%" for w, p in got.items()))
    assert ok


@pytest.mark.spe10
@pytest.mark.slow
def test_criterion_7_spe10_reproduction(report, tmp_path, capsys):
    if not os.environ.get("SPE10_PORO"):
        with capsys.disabled():
            print("\nACCEPTANCE 7 SKIP set SPE10_PORO to the SPE10 porosity file to run the full-scale reproduction")
        pytest.skip("set SPE10_PORO to the SPE10 porosity file")
    published = {100: 0.406, 300: 0.351, 500: 0.330, 700: 0.319}
    cfg = harness.ExperimentConfig(
        data=os.environ["SPE10_PORO"], seeds=10, methods=["tensor_smoothed", "kriging"],
        out=str(tmp_path), workers=int(os.environ.get("SPE10_WORKERS", "1")),
    )
    ds = harness.load_dataset(cfg)
    spec = harness.GridSearchSpec()
    for wells in cfg.wells:
        best, _ = harness.grid_search(spec, cfg, wells, ds)
        cfg.admm_per_wells[wells] = {"alpha": best.alpha, "rho": best.rho, "beta": best.beta}
    results, _, _ = harness.run_experiment(cfg, ds)
    rows = {(r["method"], r["wells"]): r["mean_rse"] for r in harness.summarize(results)}
    tens = [rows[("tensor_smoothed", w)] for w in cfg.wells]
    krig = [rows[("kriging", w)] for w in cfg.wells]
    ok = (
        all(abs(t - published[w]) <= 0.03 for t, w in zip(tens, cfg.wells))
        and all(0.38 <= k <= 0.52 for k in krig)
        and all(t < k for t, k in zip(tens, krig))
        and all(a >= b for a, b in zip(tens, tens[1:]))
        and all(a >= b for a, b in zip(krig, krig[1:]))
    )
    report(7, ok, "tensor=" + ",".join(f"{t:.3f}" for t in tens) + " kriging=" + ",".join(f"{k:.3f}" for k in krig))
    assert ok


def _benchmark(out, capsys):
    syn = json.dumps({"kind": "grf", "dims": [16, 20, 8], "correlation": [2, 3, 1], "seed": 8})
    code = cli.main(["benchmark", "--synthetic", syn, "--wells", "10,30", "--seeds", "3", "--method", "all",
                     "--max-iters", "20", "--workers", "2", "--out", str(out)])
    capsys.readouterr()
    return code


def test_criterion_8_determinism(report, tmp_path, capsys):
    codes = [_benchmark(tmp_path / "a", capsys), _benchmark(tmp_path / "b", capsys)]
    a = (tmp_path / "a" / "summary.csv").read_bytes()
    b = (tmp_path / "b" / "summary.csv").read_bytes()
    ok = codes == [0, 0] and a == b and len(a) > 0
    report(8, ok, f"summary.csv identical={a == b} ({len(a.splitlines())} lines)")
    assert ok


def test_criterion_9_figure_panels(report, tmp_path, capsys):
    out = tmp_path / "fig"
    syn = json.dumps({"kind": "grf", "dims": list(geodata.SPE10_DIMS), "correlation": [4, 8, 2], "seed": 0})
    code = cli.main(["benchmark", "--synthetic", syn, "--wells", "500", "--seeds", "1",
                     "--method", "tensor_smoothed,kriging", "--max-iters", "5", "--out", str(out)])
    assert code == 0
    for p in (out / "panels").glob("*"):
        p.unlink()
    code = cli.main(["render", "--out", str(out)])
    capsys.readouterr()
    problems = []
    for z in harness.PANEL_SLICES:
        for tile in ("truth", "kriging", "completion", "mask"):
            img = geodata.read_pgm(out / "panels" / f"z{z}_w500_{tile}.pgm")
            if img.shape != (60, 220):
                problems.append(f"z{z} {tile} {img.shape}")
        panel = geodata.read_pgm(out / "panels" / f"z{z}_w500_panel.pgm")
        if panel.shape != (60, 4 * 220 + 3 * 4):
            problems.append(f"z{z} panel {panel.shape}")
    ok = code == 0 and not problems
    report(9, ok, f"z={list(harness.PANEL_SLICES)} tiles 220x60 (width x height), 4 per panel; problems={problems}")
    assert ok
