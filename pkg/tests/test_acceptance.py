"""Acceptance criteria 1-10 at their stated tolerances.

Each test records one PASS/FAIL line (shown in the terminal summary) and then
asserts the same verdict, so a failing criterion is a failing test.
"""
import json
import warnings

import numpy as np
import pytest
from scipy import stats

from nogear.cli import main
from nogear.diagnostics import ljung_box, pearson_residuals, pit_histogram
from nogear.estimation import FitOptions, fit_cml
from nogear.harness import ExperimentConfig, run_coverage_experiment, run_forecast_experiment
from nogear.markov import build_matrix
from nogear.model import (
    RngSpec,
    cond_mean,
    cond_var,
    cond_var_recursive,
    forecast_pgf,
    marginal_pmf,
    simulate,
    transition_matrix,
    two_step_pmf,
    validate_params,
)
from nogear.zoo import Family, NginarParams, make_model, nginar_as_nogear
from oracles import COVERAGE_SETS, nginar_transition

# accuracy-study parameter sets, in their (I)..(IV) order
ACCURACY_SETS = [(0.8, 0.2, 0.5), (0.7, 0.3, 0.5), (0.6, 0.4, 0.75), (0.55, 0.45, 0.83)]
ACCURACY_CASE_I = {"prmse": 2.6921, "pmad": 1.4000}
COVERAGE_SET_I_H2_N1000 = 0.9477


def test_criterion_1_two_step_kernel(acceptance):
    worst = 0.0
    for s in COVERAGE_SETS:
        p = validate_params(*s)
        T = transition_matrix(p, 200)
        T2 = T @ T
        for y in range(51):
            for x in range(51):
                worst = max(worst, abs(two_step_pmf(p, y, x, M=200) - T2[y, x]))
    ok = worst <= 1e-8
    assert acceptance(1, ok, f"max |two-step closed form - T^2| = {worst:.2e} (tol 1e-8)")


def test_criterion_2_pgf_duality(acceptance):
    worst = 0.0
    xs = np.arange(401)
    for s in COVERAGE_SETS:
        p = validate_params(*s)
        T = transition_matrix(p, 400)
        powers = {1: T, 2: T @ T}
        for h in (1, 2):
            for y in (0, 2, 5):
                for sv in np.round(np.arange(0.1, 1.0, 0.1), 1):
                    direct = float(powers[h][y] @ sv**xs)
                    worst = max(worst, abs(forecast_pgf(p, y, h, sv) - direct))
    ok = worst <= 1e-8
    assert acceptance(2, ok, f"max |pgf - pmf sum| = {worst:.2e} (tol 1e-8)")


def test_criterion_3_moment_identities(acceptance):
    mean_err = var1_err = decomp_err = rec_err = 0.0
    findings = []
    xs = np.arange(401)
    for s in COVERAGE_SETS:
        p = validate_params(*s)
        rows = build_matrix(make_model(Family.NOGEAR, p).kernel, 400).rows
        for y in (0, 2, 5, 10):
            v = np.zeros(401)
            v[y] = 1.0
            for h in range(1, 6):
                v = v @ rows
                m = float(v @ xs)
                var = float((xs - m) ** 2 @ v)
                mean_err = max(mean_err, abs(m - cond_mean(p, y, h)))
                rec_err = max(rec_err, abs(var - cond_var_recursive(p, y, h)))
                if h == 1:
                    var1_err = max(var1_err, abs(var - cond_var(p, y, 1)))
                    decomp_err = max(decomp_err, abs(var - (y * p.gstar_var + p.sigma2_eps)))
                elif abs(var - cond_var(p, y, h)) > 1e-4:
                    findings.append((s, y, h, cond_var(p, y, h), var))
    for s, y, h, closed, mc in findings:
        print(f"  finding: closed-form variance differs at set={s} y={y} h={h}: {closed:.6f} vs {mc:.6f}")
    first_h = sorted({f[2] for f in findings})
    ok = max(mean_err, var1_err, decomp_err) <= 1e-6
    detail = (f"mean err {mean_err:.1e}, h=1 var err {var1_err:.1e} / decomposition {decomp_err:.1e} "
              f"(tol 1e-6); recursive variance err {rec_err:.1e}; flagged closed-form variance "
              f"mismatches: {len(findings)} at h in {first_h}")
    assert acceptance(3, ok, detail)


def test_criterion_4_stationarity(acceptance, p1):
    x = simulate(p1, 100_000, RngSpec(2024)).values
    mean = float(x.mean())
    d = x - x.mean()
    r1 = float(d[:-1] @ d[1:]) / float(d @ d)
    K = int(x.max())
    emp = np.bincount(x, minlength=K + 1) / x.size
    tv = 0.5 * float(np.abs(emp - marginal_pmf(p1, np.arange(K + 1))).sum()) + 0.5 * p1.theta ** (K + 1)
    ok = abs(mean - 3.0) <= 0.05 and abs(r1 - 2 / 3) <= 0.02 and tv < 0.01
    assert acceptance(4, ok, f"mean {mean:.4f} (3 +- 0.05), acf1 {r1:.4f} (0.6667 +- 0.02), TV {tv:.4f} (< 0.01)")


@pytest.mark.slow
def test_criterion_5_hpp_coverage(acceptance):
    oracle = []
    for i, s in enumerate(COVERAGE_SETS):
        rep = run_coverage_experiment(validate_params(*s), [1000], horizons=(1, 2), replications=10_000,
                                      fit=False, key=(i,))
        oracle.extend((s, c.horizon, c.coverage) for c in rep.cells)
    worst = min(oracle, key=lambda t: t[2])
    rep = run_coverage_experiment(validate_params(*COVERAGE_SETS[0]), [1000], horizons=(2,), replications=500,
                                  fit=True, key=(len(COVERAGE_SETS),))
    fitted = rep.cell(1000, 2).coverage
    ok = worst[2] >= 0.94 and abs(fitted - COVERAGE_SET_I_H2_N1000) <= 0.03
    detail = (f"oracle min coverage {worst[2]:.4f} at set={worst[0]} h={worst[1]} (>= 0.94); "
              f"fitted set I h=2 n=1000 {fitted:.4f} (0.9477 +- 0.03, {rep.cell(1000, 2).failed} failed fits)")
    assert acceptance(5, ok, detail)


def _accuracy_runs(replications):
    out = []
    for a, b, t in ACCURACY_SETS:
        cfg = ExperimentConfig("nogear", {"alpha": a, "beta": b, "theta": t}, ["nogear", "nginar"],
                               n_total=200, horizons=(1,), replications=replications)
        rep = run_forecast_experiment(cfg)
        out.append((rep.cell("nogear", 1), rep.cell("nginar", 1)))
    return out


def _ordering(cells):
    wins = sum(ng.prmse <= gi.prmse for ng, gi in cells)
    pairs = ", ".join(f"{ng.prmse:.4f}/{gi.prmse:.4f}" for ng, gi in cells)
    return wins, pairs


@pytest.mark.slow
def test_criterion_6_accuracy_study(acceptance):
    cells = _accuracy_runs(100)
    ng = cells[0][0]
    lo, hi = 0.8 * ACCURACY_CASE_I["prmse"], 1.2 * ACCURACY_CASE_I["prmse"]
    plo, phi = 0.8 * ACCURACY_CASE_I["pmad"], 1.2 * ACCURACY_CASE_I["pmad"]
    wins, pairs = _ordering(cells)
    ok = lo <= ng.prmse <= hi and plo <= ng.pmad <= phi and wins >= 3
    detail = (f"set (0.8,0.2,0.5) NoGeAR PRMSE {ng.prmse:.4f} (target [{lo:.4f}, {hi:.4f}]), "
              f"PMAD {ng.pmad:.4f} (target [{plo:.4f}, {phi:.4f}]); NoGeAR <= NGINAR in {wins}/4 "
              f"(need >= 3; NoGeAR/NGINAR PRMSE {pairs})")
    assert acceptance(6, ok, detail)


def test_criterion_6_smoke_ordering(acceptance):
    wins, pairs = _ordering(_accuracy_runs(10))
    ok = wins >= 3
    assert acceptance("6-smoke", ok, f"N=10 NoGeAR <= NGINAR in {wins}/4 (need >= 3; PRMSE {pairs})")


def test_criterion_7_nginar_reduction(acceptance):
    ng = NginarParams(0.67, 3.0)
    A = make_model(Family.NGINAR, ng).kernel.matrix(200)
    B = transition_matrix(nginar_as_nogear(ng), 200)
    err = float(np.abs(A - B).max())
    # independent check against the native negative-binomial-thinning law
    native = max(abs(A[y, x] - nginar_transition(0.67, 3.0, y, x)) for y in range(31) for x in range(31))
    ok = err <= 1e-10 and native <= 1e-10
    assert acceptance(7, ok, f"max entrywise difference {err:.2e}; vs native NGINAR law (y, x <= 30) "
                             f"{native:.2e} (tol 1e-10)")


def test_criterion_8_estimation_consistency(acceptance, p1):
    hits = 0
    for r in range(50):
        x = simulate(p1, 1000, RngSpec(8, r)).values
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = fit_cml("nogear", x, FitOptions(seed=r)).params
        hits += abs(est.alpha - 0.6) <= 0.1 and abs(est.beta - 0.4) <= 0.1 and abs(est.theta - 0.75) <= 0.1
    ok = hits >= 45
    assert acceptance(8, ok, f"{hits}/50 replications within +-0.1 on all parameters (need >= 45)")


def test_criterion_9_diagnostics_calibration(acceptance, p1):
    x = simulate(p1, 20_000, RngSpec(9)).values
    pit = pit_histogram(p1, x)
    rvar = float(pearson_residuals(p1, x).var())
    pvals = [ljung_box(pearson_residuals(p1, simulate(p1, 1000, RngSpec(9, 1 + r))), 10)[1] for r in range(200)]
    ks = stats.kstest(pvals, "uniform").pvalue
    pit_dev = float(np.abs(pit - 0.1).max())
    ok = pit_dev <= 0.02 and abs(rvar - 1) <= 0.1 and ks > 0.01
    detail = (f"max |PIT bin - 0.1| {pit_dev:.4f} (<= 0.02), residual variance {rvar:.4f} (1 +- 0.1), "
              f"KS p-value of 200 Ljung-Box p-values {ks:.3f} (> 0.01)")
    assert acceptance(9, ok, detail)


def test_criterion_10_cli_determinism(acceptance, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "exp.json").write_text(json.dumps({
        "generator": {"family": "nogear", "params": {"alpha": 0.6, "beta": 0.4, "theta": 0.75}},
        "fitted_families": ["nogear", "nginar", "ginar", "pinar"],
        "n_total": 60, "replications": 2, "fit_restarts": 1,
    }))
    (tmp_path / "cov.json").write_text(json.dumps({
        "sets": [{"label": "I", "alpha": 0.6, "beta": 0.4, "theta": 0.75}],
        "n_list": [100], "horizons": [1, 2], "replications": 5, "fit_restarts": 1,
    }))
    p = ["--alpha", "0.6", "--beta", "0.4", "--theta", "0.75"]
    commands = [
        (["simulate", *p, "--n", "300", "--seed", "7", "--out", "sim.csv"], ["sim.csv"]),
        (["fit", "--model", "all", "--input", "sim.csv", "--out", "fit.json"], ["fit.json"]),
        (["forecast", "--fit", "fit.json", "--input", "sim.csv", "--h", "1", "2", "3",
          "--out", "fc.json", "--pmf-csv", "pmf.csv"], ["fc.json", "pmf.csv"]),
        (["evaluate", "--config", "exp.json", "--out-dir", "ev"], ["ev/accuracy.json", "ev/accuracy.csv"]),
        (["coverage", "--config", "cov.json", "--out-dir", "cv"], ["cv/coverage.json", "cv/coverage.csv"]),
        (["diagnose", "--input", "sim.csv", "--fit", "fit.json", "--out-dir", "dg"],
         ["dg/diagnostics.json", "dg/pit.csv", "dg/acf.csv", "dg/jumps.csv"]),
    ]
    differing = []
    for argv, outputs in commands:
        runs = []
        for _ in range(2):
            code = main(argv)
            cap = capsys.readouterr()
            runs.append((code, cap.out, cap.err, [(tmp_path / o).read_bytes() for o in outputs]))
        if runs[0][0] != 0 or runs[0] != runs[1]:
            differing.append(argv[0])
    ok = not differing
    detail = f"{len(commands)} commands rerun; differing or failing: {differing or 'none'}"
    assert acceptance(10, ok, detail)
