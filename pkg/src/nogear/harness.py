"""Monte Carlo replication harness: forecast-accuracy and HPP-coverage studies."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import LengthMismatch, NogearError, NonConvergenceWarning, TruncationTooSevere
from .estimation import FitOptions, fit_cml
from .markov import build_matrix, hpp_interval, point_forecasts_all
from .model import ModelParams, RngSpec, validate_params
from .zoo import Family, make_model


# --------------------------------------------------------------------------
# accuracy metrics
# --------------------------------------------------------------------------

def _paired(actuals, forecasts):
    a = np.asarray(actuals, dtype=np.float64)
    f = np.asarray(forecasts, dtype=np.float64)
    if a.shape != f.shape:
        raise LengthMismatch(f"{a.size} actuals vs {f.size} forecasts")
    if a.size == 0:
        raise ValueError("need at least one forecast")
    return a, f


def prmse(actuals, mean_forecasts) -> float:
    a, f = _paired(actuals, mean_forecasts)
    return math.sqrt(float(np.mean((a - f) ** 2)))


def pmad(actuals, median_forecasts) -> float:
    a, f = _paired(actuals, median_forecasts)
    return float(np.mean(np.abs(a - f)))


def ptp(actuals, forecasts) -> float:
    a, f = _paired(actuals, forecasts)
    return 100.0 * float(np.mean(a == f))


# --------------------------------------------------------------------------
# forecasting tables from a fitted model
# --------------------------------------------------------------------------

MAX_M = 1600


def model_matrix(model, M: int):
    """Truncated matrix for ``model``, doubling ``M`` until the interior rows hold."""
    while True:
        try:
            return build_matrix(model.kernel, M)
        except TruncationTooSevere:
            if M >= MAX_M:
                raise
            M *= 2


def forecast_table(model, M: int, horizons):
    """Per-origin rounded mean, median, mode for each horizon.

    Returns ``{h: (mean_rounded, median, mode)}`` with arrays indexed by origin.
    """
    tm = model_matrix(model, M)
    out = {}
    P = tm.rows
    Ph = None
    for h in range(1, max(horizons) + 1):
        Ph = P if Ph is None else Ph @ P
        if h in horizons:
            _, rounded, median, mode = point_forecasts_all(Ph)
            out[h] = (rounded, median, mode)
    return out, tm


# --------------------------------------------------------------------------
# forecast-accuracy experiment
# --------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    generator_family: Family
    generator_params: dict
    fitted_families: list
    n_total: int
    train_frac: float = 0.7
    horizons: tuple = (1, 2)
    replications: int = 100
    base_seed: int = 0
    M: int = 200
    fit_restarts: int = 2
    n_jobs: int = 1

    def __post_init__(self):
        self.generator_family = Family(self.generator_family)
        self.fitted_families = [Family(f) for f in self.fitted_families]
        self.horizons = tuple(int(h) for h in self.horizons)
        if not 0.0 < self.train_frac < 1.0:
            raise ValueError("train_frac must lie in (0, 1)")
        if not self.horizons or min(self.horizons) < 1:
            raise ValueError("horizons must be positive")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        make_model(self.generator_family, self.generator_params)

    @property
    def n_train(self) -> int:
        return int(round(self.train_frac * self.n_total))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        gen = d.pop("generator")
        return cls(generator_family=gen["family"], generator_params=gen["params"], **d)

    def to_dict(self) -> dict:
        return {
            "generator": {"family": self.generator_family.value, "params": dict(self.generator_params)},
            "fitted_families": [f.value for f in self.fitted_families],
            "n_total": self.n_total,
            "train_frac": self.train_frac,
            "horizons": list(self.horizons),
            "replications": self.replications,
            "base_seed": self.base_seed,
            "M": self.M,
            "fit_restarts": self.fit_restarts,
            "n_jobs": self.n_jobs,
        }


@dataclass
class AccuracyCell:
    family: str
    horizon: int
    prmse: float
    pmad: float
    ptp_mean: float
    ptp_median: float
    ptp_mode: float
    replications_ok: int
    replications_failed: int


@dataclass
class AccuracyReport:
    cells: list
    config: dict = field(default_factory=dict)

    def cell(self, family, horizon) -> AccuracyCell:
        family = Family(family).value
        for c in self.cells:
            if c.family == family and c.horizon == horizon:
                return c
        raise KeyError((family, horizon))

    def to_dict(self) -> dict:
        return {"config": self.config, "cells": [asdict(c) for c in self.cells]}

    def csv_rows(self):
        header = list(AccuracyCell.__dataclass_fields__)
        return header, [[getattr(c, k) for k in header] for c in self.cells]


def _forecast_replication(args):
    cfg, r = args
    gen = make_model(cfg.generator_family, cfg.generator_params)
    x = gen.simulate(cfg.n_total, RngSpec(cfg.base_seed, r)).values
    n = cfg.n_train
    train, test_idx = x[:n], np.arange(n, cfg.n_total)
    result = {}
    for fam in cfg.fitted_families:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NonConvergenceWarning)
                warnings.simplefilter("ignore", UserWarning)
                fit = fit_cml(fam, train, FitOptions(restarts=cfg.fit_restarts, seed=r))
            if not fit.converged:
                raise NogearError("fit did not converge")
            model = make_model(fam, fit.params)
            table, _ = forecast_table(model, max(cfg.M, 2 * int(x.max())), cfg.horizons)
        except (NogearError, ValueError, FloatingPointError, np.linalg.LinAlgError):
            for h in cfg.horizons:
                result[(fam.value, h)] = None
            continue
        for h in cfg.horizons:
            rounded, median, mode = table[h]
            origins = x[test_idx - h]
            actual = x[test_idx]
            result[(fam.value, h)] = (
                prmse(actual, rounded[origins]),
                pmad(actual, median[origins]),
                ptp(actual, rounded[origins]),
                ptp(actual, median[origins]),
                ptp(actual, mode[origins]),
            )
    return result


def _map(fn, items, n_jobs):
    if n_jobs and n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def run_forecast_experiment(cfg: ExperimentConfig) -> AccuracyReport:
    """Simulate, split, fit each family on the training part, score the test part.

    Metrics are computed per replication over the test points and then
    averaged across replications whose fits succeeded.
    """
    reps = _map(_forecast_replication, [(cfg, r) for r in range(cfg.replications)], cfg.n_jobs)
    cells = []
    for fam in cfg.fitted_families:
        for h in cfg.horizons:
            vals = [rep[(fam.value, h)] for rep in reps if rep[(fam.value, h)] is not None]
            failed = cfg.replications - len(vals)
            if vals:
                cols = list(zip(*vals))
                avg = [math.fsum(c) / len(vals) for c in cols]
            else:
                avg = [float("nan")] * 5
            cells.append(AccuracyCell(fam.value, h, *avg, replications_ok=len(vals), replications_failed=failed))
    return AccuracyReport(cells=cells, config=cfg.to_dict())


# --------------------------------------------------------------------------
# HPP coverage experiment
# --------------------------------------------------------------------------

@dataclass
class CoverageCell:
    label: str
    alpha: float
    beta: float
    theta: float
    n: int
    horizon: int
    coverage: float
    replications: int
    failed: int


@dataclass
class CoverageReport:
    cells: list
    config: dict = field(default_factory=dict)

    def cell(self, n, horizon, label=None) -> CoverageCell:
        for c in self.cells:
            if c.n == n and c.horizon == horizon and (label is None or c.label == label):
                return c
        raise KeyError((label, n, horizon))

    def to_dict(self) -> dict:
        return {"config": self.config, "cells": [asdict(c) for c in self.cells]}

    def csv_rows(self):
        header = list(CoverageCell.__dataclass_fields__)
        return header, [[getattr(c, k) for k in header] for c in self.cells]


class _IntervalCache:
    """HPP intervals for every origin of one model, computed lazily per horizon."""

    def __init__(self, model, M, delta):
        self.tm = model_matrix(model, M)
        self.delta = delta
        self.powers = {}
        self.cache = {}

    def interval(self, y, h):
        key = (y, h)
        if key not in self.cache:
            if h not in self.powers:
                self.powers[h] = self.tm.power(h)
            self.cache[key] = hpp_interval(self.powers[h][y], self.delta)
        return self.cache[key]


def _coverage_replication(args):
    params, n, horizons, delta, seed, key, r, fit, M, restarts, oracle = args
    model = make_model(Family.NOGEAR, params)
    x = model.simulate(n + max(horizons), RngSpec(seed, r).generator(*key, n)).values
    if fit:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = fit_cml(Family.NOGEAR, x[:n], FitOptions(restarts=restarts, seed=r))
            if not res.converged:
                return None
            cache = _IntervalCache(make_model(Family.NOGEAR, res.params), max(M, 2 * int(x.max())), delta)
        except (NogearError, ValueError, FloatingPointError):
            return None
    else:
        cache = oracle
        if x[n - 1] > cache.tm.M:
            cache = _IntervalCache(model, 2 * int(x.max()), delta)
    origin = int(x[n - 1])
    out = {}
    for h in horizons:
        iv = cache.interval(origin, h)
        out[h] = iv.lower <= x[n - 1 + h] <= iv.upper
    return out


def run_coverage_experiment(params: ModelParams, n_list, horizons=(1, 2), delta: float = 0.05,
                            replications: int = 100, base_seed: int = 0, fit: bool = True,
                            M: int = 200, fit_restarts: int = 2, label: str = "",
                            key: tuple = (), n_jobs: int = 1) -> CoverageReport:
    """Empirical coverage of HPP intervals for ``X_{n+h}`` given ``X_n``.

    With ``fit=True`` the interval uses parameters fitted on the first ``n``
    points of each replication; with ``fit=False`` the true parameters are
    used (oracle mode, isolating interval correctness from estimation).
    ``key`` extends the per-replication seed so that several parameter sets
    sharing one ``base_seed`` draw independent paths.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not isinstance(params, ModelParams):
        params = validate_params(**params)
    horizons = tuple(int(h) for h in horizons)
    oracle = None if fit else _IntervalCache(make_model(Family.NOGEAR, params), M, delta)
    cells = []
    for n in n_list:
        args = [(params, int(n), horizons, delta, base_seed, tuple(key), r, fit, M, fit_restarts, oracle)
                for r in range(replications)]
        reps = _map(_coverage_replication, args, n_jobs)
        ok = [rep for rep in reps if rep is not None]
        for h in horizons:
            hits = sum(1 for rep in ok if rep[h])
            cov = hits / len(ok) if ok else float("nan")
            cells.append(CoverageCell(label, params.alpha, params.beta, params.theta, int(n), h,
                                      cov, len(ok), replications - len(ok)))
    config = {
        "params": params.as_dict(),
        "n_list": [int(n) for n in n_list],
        "horizons": list(horizons),
        "delta": delta,
        "replications": replications,
        "base_seed": base_seed,
        "fit": fit,
        "M": M,
        "fit_restarts": fit_restarts,
        "key": list(key),
    }
    return CoverageReport(cells=cells, config=config)
