"""Command-line interface.

Exit codes: 0 ok, 2 usage (bad flags or parameters), 3 input (unreadable or
malformed files), 4 data degeneracy (series carries no information).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import warnings

import numpy as np

from . import __version__, _accel
from .diagnostics import acf, diagnose
from .errors import ConstraintViolation, DegenerateSeries, NogearError, TruncationTooSevere
from .estimation import FitOptions, FitResult, fit_cml
from .harness import ExperimentConfig, model_matrix, run_coverage_experiment, run_forecast_experiment
from .markov import h_step_distribution, hpp_interval, point_forecasts
from .model import CountSeries, RngSpec, validate_params
from .zoo import Family, make_model

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_DEGENERATE = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _usage(msg):
    return CliError(msg, EXIT_USAGE)


def _input(msg):
    return CliError(msg, EXIT_INPUT)


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------

def read_series(path: str) -> CountSeries:
    """Parse a series CSV: one count per line, ``#`` comment lines ignored.

    An optional header row naming a ``count`` column selects that column, so
    ``date,count`` and ``count,date`` layouts both work.
    """
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as e:
        raise _input(f"cannot read {path}: {e.strerror}")
    values = []
    header_seen = False
    col = 0
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        names = [c.strip().lower() for c in row]
        if not values and not header_seen and "count" in names:
            header_seen = True
            col = names.index("count")
            continue
        if col >= len(row):
            raise _input(f"{path}:{lineno}: missing count column")
        cell = row[col].strip()
        try:
            v = int(cell)
        except ValueError:
            raise _input(f"{path}:{lineno}: {cell!r} is not an integer count")
        if v < 0:
            raise _input(f"{path}:{lineno}: negative count {v}")
        values.append(v)
    if not values:
        raise _input(f"{path}: no observations")
    return CountSeries(np.array(values, dtype=np.int64), name=os.path.basename(path))


def read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise _input(f"cannot read {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise _input(f"{path}: invalid JSON ({e})")


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path: str, payload: dict):
    _ensure_parent(path)
    with open(path, "w") as fh:
        json.dump(_clean(payload), fh, indent=2)
        fh.write("\n")


def write_csv(path: str, header, rows, comment: str | None = None):
    _ensure_parent(path)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _manifest_comment(m: dict) -> str:
    return "manifest " + json.dumps(_clean(m), sort_keys=True)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _ensure_parent(path):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


def manifest(args, argv, outputs) -> dict:
    import numba
    import scipy

    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    m = {
        "command": ["nogear", *argv],
        "config": config,
        "seed": config.get("seed"),
        "versions": {
            "nogear": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
        },
        "backend": _accel.BACKEND,
        "outputs": list(outputs),
    }
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        m["source_date_epoch"] = int(epoch)
    return m


# --------------------------------------------------------------------------
# model flags
# --------------------------------------------------------------------------

_FAMILY_FLAGS = {
    Family.NOGEAR: ("alpha", "beta", "theta"),
    Family.NGINAR: ("alpha_ng", "mu"),
    Family.GINAR: ("p", "alpha_thin"),
    Family.PINAR: ("lam", "alpha_thin"),
}


def _add_model_flags(p, required=True):
    p.add_argument("--model", choices=[f.value for f in Family], default="nogear" if required else None)
    for name in ("alpha", "beta", "theta", "alpha_ng", "mu", "p", "alpha_thin", "lam"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=float)


def _model_from_flags(args):
    fam = Family(args.model or "nogear")
    missing = [n for n in _FAMILY_FLAGS[fam] if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise _usage(f"model {fam.value} needs {flags}")
    return make_model(fam, {n: getattr(args, n) for n in _FAMILY_FLAGS[fam]})


def _has_model_flags(args):
    return any(getattr(args, n, None) is not None for ns in _FAMILY_FLAGS.values() for n in ns)


def _summary(x: np.ndarray) -> dict:
    r1 = float(acf(x, 1)[0][0]) if x.size > 1 else float("nan")
    var = float(x.var(ddof=1)) if x.size > 1 else float("nan")
    return {"n": int(x.size), "mean": float(x.mean()), "variance": var, "acf1": r1}


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(args, argv):
    if args.n < 1:
        raise _usage("--n must be >= 1")
    if args.burn_in < 0:
        raise _usage("--burn-in must be >= 0")
    model = _model_from_flags(args)
    series = model.simulate(args.n, RngSpec(args.seed, args.stream), burn_in=args.burn_in)
    x = series.values
    header = _manifest_comment(manifest(args, argv, [args.out] if args.out else []))
    if args.out:
        write_csv(args.out, ["count"], [[int(v)] for v in x], comment=header)
        out = sys.stdout
    else:
        sys.stdout.write(f"# {header}\ncount\n")
        sys.stdout.write("".join(f"{int(v)}\n" for v in x))
        out = sys.stderr
    s = _summary(x)
    print(f"n={s['n']} mean={s['mean']:.6f} variance={s['variance']:.6f} acf1={s['acf1']:.6f}", file=out)
    return EXIT_OK


def _fit_families(choice):
    return list(Family) if choice == "all" else [Family(choice)]


def cmd_fit(args, argv):
    series = read_series(args.input)
    if len(series) < 2:
        raise DegenerateSeries("series must have at least two observations")
    opts = FitOptions(restarts=args.restarts, seed=args.seed)
    fits = []
    for fam in _fit_families(args.model):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = fit_cml(fam, series, opts)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        fits.append(res)
    fits.sort(key=lambda r: r.aic)
    payload = {
        "manifest": manifest(args, argv, [args.out] if args.out else []),
        "series": {"name": series.name, **_summary(series.values)},
        "n_eff_rule": "n - 1 conditional terms",
        "fits": [f.to_dict() for f in fits],
    }
    if args.out:
        write_json(args.out, payload)
    print(f"{'model':<8} {'loglik':>12} {'k':>2} {'AIC':>12} {'BIC':>12} {'AICc':>12}  params")
    for f in fits:
        aicc = f"{f.aicc:12.4f}" if f.aicc is not None else f"{'-':>12}"
        ps = " ".join(f"{k}={v:.4f}" for k, v in f.params.as_dict().items() if isinstance(v, float))
        print(f"{f.family.value:<8} {f.loglik:12.4f} {f.k:>2} {f.aic:12.4f} {f.bic:12.4f} {aicc}  {ps}")
    return EXIT_OK


def _model_from_fit_file(path):
    d = read_json(path)
    try:
        if "fits" in d:
            fits = [FitResult.from_dict(f) for f in d["fits"]]
            best = min(fits, key=lambda f: f.aic)
        else:
            best = FitResult.from_dict(d.get("fit", d))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConstraintViolation):
            raise
        raise _input(f"{path}: not a fit result ({e})")
    return make_model(best.family, best.params)


def cmd_forecast(args, argv):
    if args.fit:
        model = _model_from_fit_file(args.fit)
    elif _has_model_flags(args):
        model = _model_from_flags(args)
    else:
        raise _usage("forecast needs --fit or model parameter flags")
    horizons = sorted(set(args.h))
    if min(horizons) < 1:
        raise _usage("--h must be >= 1")
    if not 0.0 < args.delta < 1.0:
        raise _usage("--delta must lie in (0, 1)")
    if args.M < 1:
        raise _usage("--M must be >= 1")
    if args.origin is not None:
        if args.origin < 0:
            raise _usage("--origin must be >= 0")
        origin = args.origin
    elif args.input:
        origin = int(read_series(args.input).values[-1])
    else:
        raise _usage("forecast needs --input or --origin")
    try:
        tm = model_matrix(model, max(args.M, 2 * origin))
    except TruncationTooSevere as e:
        raise _usage(f"{e}")
    ng = model.nogear_params
    rows, forecasts = [], []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for h in horizons:
            fd = h_step_distribution(tm, origin, h)
            pf = point_forecasts(fd, ng)
            iv = hpp_interval(fd, args.delta)
            probs = fd.probs if args.display_max is None else fd.probs[: args.display_max + 1]
            forecasts.append({
                "horizon": h,
                "mean": pf.mean,
                "mean_rounded": pf.mean_rounded,
                "median": pf.median,
                "mode": pf.mode,
                "hpp": {
                    "lower": iv.lower,
                    "upper": iv.upper,
                    "achieved_coverage": iv.achieved_coverage,
                    "set_coverage": iv.set_coverage,
                    "contiguous": iv.contiguous,
                    "delta": iv.delta,
                },
                "probs": probs.tolist(),
            })
            rows.extend([h, x, float(p)] for x, p in enumerate(fd.probs))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    outputs = [o for o in (args.out, args.pmf_csv) if o]
    man = manifest(args, argv, outputs)
    payload = {
        "manifest": man,
        "family": model.family.value,
        "params": model.params.as_dict(),
        "origin": origin,
        "M": tm.M,
        "forecasts": forecasts,
    }
    if args.out:
        write_json(args.out, payload)
    if args.pmf_csv:
        write_csv(args.pmf_csv, ["horizon", "x", "prob"], rows, comment=_manifest_comment(man))
    print(f"origin={origin} model={model.family.value} M={tm.M}")
    print(f"{'h':>3} {'mean':>10} {'rounded':>8} {'median':>7} {'mode':>5}  HPP({1 - args.delta:.0%})")
    for f in forecasts:
        hp = f["hpp"]
        print(f"{f['horizon']:>3} {f['mean']:10.4f} {f['mean_rounded']:>8} {f['median']:>7} {f['mode']:>5}"
              f"  [{hp['lower']}, {hp['upper']}] cov={hp['achieved_coverage']:.4f}")
    return EXIT_OK


def cmd_evaluate(args, argv):
    try:
        cfg = ExperimentConfig.from_dict(read_json(args.config))
    except (KeyError, TypeError) as e:
        raise _input(f"{args.config}: invalid experiment config ({e})")
    except ConstraintViolation:
        raise
    except ValueError as e:
        raise _input(f"{args.config}: invalid experiment config ({e})")
    if args.n_jobs is not None:
        cfg.n_jobs = args.n_jobs
    report = run_forecast_experiment(cfg)
    jpath = os.path.join(args.out_dir, "accuracy.json")
    cpath = os.path.join(args.out_dir, "accuracy.csv")
    man = manifest(args, argv, [jpath, cpath])
    write_json(jpath, {"manifest": man, **report.to_dict()})
    write_csv(cpath, *report.csv_rows(), comment=_manifest_comment(man))
    failed = sum(c.replications_failed for c in report.cells)
    print(f"{len(report.cells)} cells written to {args.out_dir} ({failed} failed fits excluded)")
    return EXIT_OK


def _coverage_sets(cfg):
    if "sets" in cfg:
        sets = cfg["sets"]
    else:
        sets = [cfg["params"]]
    out = []
    for i, s in enumerate(sets):
        label = str(s.get("label", i + 1))
        out.append((label, validate_params(s["alpha"], s["beta"], s["theta"])))
    return out


def cmd_coverage(args, argv):
    cfg = read_json(args.config)
    try:
        sets = _coverage_sets(cfg)
        n_list = [int(n) for n in cfg["n_list"]]
    except (KeyError, TypeError) as e:
        raise _input(f"{args.config}: invalid coverage config ({e})")
    cells, configs = [], []
    for i, (label, params) in enumerate(sets):
        rep = run_coverage_experiment(
            params,
            n_list,
            horizons=cfg.get("horizons", [1, 2]),
            delta=cfg.get("delta", 0.05),
            replications=int(cfg.get("replications", 100)),
            base_seed=int(cfg.get("base_seed", 0)),
            fit=bool(cfg.get("fit", True)),
            M=int(cfg.get("M", 200)),
            fit_restarts=int(cfg.get("fit_restarts", 2)),
            label=label,
            key=(i,),
            n_jobs=args.n_jobs or int(cfg.get("n_jobs", 1)),
        )
        cells.extend(rep.cells)
        configs.append(rep.config)
    from .harness import CoverageReport

    report = CoverageReport(cells=cells, config={"input": cfg, "runs": configs})
    jpath = os.path.join(args.out_dir, "coverage.json")
    cpath = os.path.join(args.out_dir, "coverage.csv")
    man = manifest(args, argv, [jpath, cpath])
    write_json(jpath, {"manifest": man, **report.to_dict()})
    write_csv(cpath, *report.csv_rows(), comment=_manifest_comment(man))
    print(f"{len(cells)} coverage cells written to {args.out_dir}")
    return EXIT_OK


def cmd_diagnose(args, argv):
    series = read_series(args.input)
    if len(series) < 3:
        raise DegenerateSeries("diagnostics need at least three observations")
    if args.fit:
        model = _model_from_fit_file(args.fit)
        source = "fit file"
    elif _has_model_flags(args):
        model = _model_from_flags(args)
        source = "flags"
    else:
        fam = Family(args.model or "nogear")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fit_cml(fam, series, FitOptions(restarts=args.restarts, seed=args.seed))
        model = make_model(fam, res.params)
        source = "fitted (conditional ML)"
    report = diagnose(model, series, bins=args.bins, max_lag=args.max_lag)
    report.notes["params_source"] = source
    d = args.out_dir
    paths = {k: os.path.join(d, f) for k, f in
             (("json", "diagnostics.json"), ("pit", "pit.csv"), ("acf", "acf.csv"), ("jumps", "jumps.csv"))}
    man = manifest(args, argv, list(paths.values()))
    note = _manifest_comment(man)
    write_json(paths["json"], {"manifest": man, **report.to_dict()})
    edges = np.linspace(0.0, 1.0, args.bins + 1)
    write_csv(paths["pit"], ["lower", "upper", "mass"],
              [[float(edges[i]), float(edges[i + 1]), m] for i, m in enumerate(report.pit_bins)], comment=note)
    write_csv(paths["acf"], ["lag", "acf", "bound"], [list(r) for r in report.residual_acf], comment=note)
    lo, hi = report.jump_limits
    write_csv(paths["jumps"], ["t", "jump", "lower_limit", "upper_limit"],
              [[t + 2, j, lo, hi] for t, j in enumerate(report.jumps)], comment=note)
    print(f"model={report.family} params={report.params} ({source})")
    print("PIT bins: " + " ".join(f"{m:.3f}" for m in report.pit_bins))
    for m, q, p in report.ljung_box:
        print(f"Ljung-Box m={m}: Q={q:.4f} p={p:.4f}")
    print(f"jumps: sigma={report.sigma_j:.4f} violations={len(report.jump_violations)}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(f"{self.prog}: error: {message}", EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nogear", description="Coherent forecasting for NoGeAR(1) and related INAR(1) models.")
    ap.add_argument("--version", action="version", version=f"nogear {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a series to CSV")
    _add_model_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="conditional ML fit with AIC/BIC/AICc")
    p.add_argument("--model", choices=[f.value for f in Family] + ["all"], default="nogear")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="h-step forecast distribution, point forecasts, HPP interval")
    _add_model_flags(p)
    p.add_argument("--fit", help="fit JSON written by 'nogear fit'")
    p.add_argument("--input", help="series CSV; its last value is the origin")
    p.add_argument("--origin", type=int)
    p.add_argument("--h", type=int, nargs="+", default=[1])
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--M", type=int, default=200)
    p.add_argument("--display-max", type=int, help="truncate probs in the JSON to 0..K")
    p.add_argument("--out")
    p.add_argument("--pmf-csv")
    p.set_defaults(func=cmd_forecast)

    for name, fn, helptext in (("evaluate", cmd_evaluate, "forecast-accuracy experiment"),
                               ("coverage", cmd_coverage, "HPP coverage experiment")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--n-jobs", type=int)
        p.set_defaults(func=fn)

    p = sub.add_parser("diagnose", help="residual, PIT, jumps and Ljung-Box diagnostics")
    _add_model_flags(p, required=False)
    p.add_argument("--input", required=True)
    p.add_argument("--fit")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--max-lag", type=int, default=20)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "bins", 2) < 2:
            raise _usage("--bins must be >= 2")
        return args.func(args, argv)
    except CliError as e:
        print(str(e) if e.code == EXIT_USAGE and str(e).startswith("nogear") else f"error: {e}",
              file=sys.stderr)
        return e.code
    except ConstraintViolation as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateSeries as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except NogearError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
