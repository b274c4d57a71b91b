"""Conditional maximum likelihood fitting and information criteria."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .errors import AiccUndefined, ConstraintViolation, DegenerateSeries, NonConvergenceWarning
from .model import CountSeries, ModelParams, validate_params
from .zoo import AnyParams, Family, GinarParams, NginarParams, PinarParams, make_model

LOG_FLOOR = math.log(1e-300)


@dataclass
class FitOptions:
    restarts: int = 5
    max_iter: int = 2000
    tol: float = 1e-8
    seed: int = 0


@dataclass
class FitResult:
    family: Family
    params: AnyParams
    loglik: float
    k: int
    n_eff: int
    aic: float
    bic: float
    aicc: float | None
    converged: bool
    iterations: int
    starts: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "params": self.params.as_dict(),
            "loglik": self.loglik,
            "k": self.k,
            "n_eff": self.n_eff,
            "aic": self.aic,
            "bic": self.bic,
            "aicc": self.aicc,
            "converged": self.converged,
            "iterations": self.iterations,
            "estimator": "conditional maximum likelihood (Nelder-Mead)",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        from .zoo import coerce_params

        fam = Family(d["family"])
        return cls(
            family=fam,
            params=coerce_params(fam, d["params"]),
            loglik=d["loglik"],
            k=d["k"],
            n_eff=d["n_eff"],
            aic=d["aic"],
            bic=d["bic"],
            aicc=d.get("aicc"),
            converged=d.get("converged", True),
            iterations=d.get("iterations", 0),
        )


def _values(series) -> np.ndarray:
    if isinstance(series, CountSeries):
        return series.values
    return CountSeries(np.asarray(series)).values


def _pair_counts(x: np.ndarray):
    pairs = np.stack([x[:-1], x[1:]], axis=1)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    return uniq[:, 0], uniq[:, 1], counts.astype(np.float64)


def _loglik_from_pairs(kernel, K, prev, curr, counts) -> float:
    T = kernel.matrix(K)
    probs = T[prev, curr]
    with np.errstate(divide="ignore"):
        logs = np.where(probs > 0, np.log(np.where(probs > 0, probs, 1.0)), LOG_FLOOR)
    return float(np.dot(counts, np.maximum(logs, LOG_FLOOR)))


def cond_loglik(family: Family | str, params, series) -> float:
    """``sum_t log P(X_t | X_{t-1})``; zero-probability terms contribute ``log(1e-300)``."""
    x = _values(series)
    if x.size < 2:
        raise ValueError("series must have at least two observations")
    model = make_model(family, params)
    prev, curr, counts = _pair_counts(x)
    return _loglik_from_pairs(model.kernel, int(x.max()), prev, curr, counts)


def information_criteria(loglik: float, k: int, n_eff: int):
    aic = -2.0 * loglik + 2.0 * k
    bic = -2.0 * loglik + k * math.log(n_eff)
    if n_eff <= k + 1:
        raise AiccUndefined(f"AICc needs n_eff > k + 1 (n_eff={n_eff}, k={k})")
    return aic, bic, aic + 2.0 * k * (k + 1) / (n_eff - k - 1)


# --------------------------------------------------------------------------
# unconstrained reparameterisations
# --------------------------------------------------------------------------
# nogear: alpha = s(u0), theta = s(u2), beta = alpha*theta*s(u1)
# nginar: mu = exp(u0), alpha_ng = theta*s(u1) with theta = mu/(1+mu)
# ginar:  p = s(u0), alpha_thin = s(u1)
# pinar:  lam = exp(u0), alpha_thin = s(u1)

_EDGE = 1e-9


def _unpack(family: Family, u) -> AnyParams:
    if family is Family.NOGEAR:
        a, t = float(expit(u[0])), float(expit(u[2]))
        return validate_params(a, a * t * float(expit(u[1])), t)
    if family is Family.NGINAR:
        # alpha_ng <= theta is the NoGeAR beta <= alpha*theta edge; keep off it
        # so rounding in the mapped parameters cannot cross it
        mu = math.exp(u[0])
        return NginarParams(mu / (1 + mu) * min(float(expit(u[1])), 1 - _EDGE), mu)
    if family is Family.GINAR:
        return GinarParams(float(expit(u[0])), float(expit(u[1])))
    return PinarParams(math.exp(u[0]), float(expit(u[1])))


def _pack(family: Family, p: AnyParams) -> np.ndarray:
    lg = lambda v: float(logit(min(max(v, _EDGE), 1 - _EDGE)))
    if family is Family.NOGEAR:
        return np.array([lg(p.alpha), lg(p.beta / (p.alpha * p.theta)), lg(p.theta)])
    if family is Family.NGINAR:
        return np.array([math.log(p.mu), lg(p.alpha_ng * (1 + p.mu) / p.mu)])
    if family is Family.GINAR:
        return np.array([lg(p.p), lg(p.alpha_thin)])
    return np.array([math.log(p.lam), lg(p.alpha_thin)])


def _lag1_acf(x: np.ndarray) -> float:
    d = x - x.mean()
    den = float(d @ d)
    return float(d[:-1] @ d[1:]) / den if den > 0 else 0.0


def initial_values(family: Family, x: np.ndarray) -> list[np.ndarray]:
    """Moment-matched starting points in the unconstrained space."""
    m = max(float(x.mean()), 1e-3)
    theta = m / (1 + m)
    rho = min(max(_lag1_acf(x), 0.05), 0.95)
    starts = []
    if family is Family.NOGEAR:
        for s in (0.25, 0.5, 0.75):
            # omega = (1 - alpha)/(1 - beta) with beta = s*alpha*theta
            alpha = (1 - rho) / (1 - rho * s * theta)
            starts.append(_pack(family, ModelParams(alpha, s * alpha * theta, theta)))
    elif family is Family.NGINAR:
        a = min(rho, 0.95 * theta)
        starts.append(_pack(family, NginarParams(a, m)))
    elif family is Family.GINAR:
        starts.append(_pack(family, GinarParams(theta, rho)))
    else:
        starts.append(_pack(family, PinarParams(m, rho)))
    return starts


def fit_cml(family: Family | str, series, opts: FitOptions | None = None, start=None) -> FitResult:
    """Maximise the conditional likelihood by Nelder-Mead from several starts.

    Starts are the moment-matched points, an optional user ``start`` (family
    parameter record) and ``opts.restarts`` random perturbations of the first
    moment start. Every simplex vertex maps to admissible parameters through
    the reparameterisation, so no penalty is needed.
    """
    family = Family(family)
    opts = opts or FitOptions()
    x = _values(series)
    if x.size < 2:
        raise ValueError("series must have at least two observations")
    if np.all(x == x[0]):
        raise DegenerateSeries("constant series carries no transition information")
    if x.size < 20:
        warnings.warn(f"short series (n={x.size}); estimates may be unreliable", UserWarning)

    prev, curr, counts = _pair_counts(x)
    K = int(x.max())
    k = family.n_params

    def objective(u):
        try:
            kernel = make_model(family, _unpack(family, u)).kernel
        except (ConstraintViolation, OverflowError):
            return 1e300
        return -_loglik_from_pairs(kernel, K, prev, curr, counts)

    starts = initial_values(family, x)
    if start is not None:
        starts.insert(0, _pack(family, start))
    rng = np.random.default_rng(opts.seed)
    base = starts[0]
    for _ in range(opts.restarts):
        starts.append(base + rng.normal(0.0, 1.0, size=k))

    best = None
    total_iter = 0
    for u0 in starts:
        res = minimize(
            objective,
            u0,
            method="Nelder-Mead",
            options={"maxiter": opts.max_iter, "xatol": 1e-6, "fatol": opts.tol, "adaptive": False},
        )
        total_iter += int(res.nit)
        if best is None or res.fun < best.fun:
            best = res

    params = _unpack(family, best.x)
    loglik = -float(best.fun)
    n_eff = x.size - 1
    aic = -2.0 * loglik + 2.0 * k
    bic = -2.0 * loglik + k * math.log(n_eff)
    aicc = aic + 2.0 * k * (k + 1) / (n_eff - k - 1) if n_eff > k + 1 else None
    if not best.success:
        warnings.warn(f"{family.value} fit did not converge: {best.message}", NonConvergenceWarning)
    return FitResult(
        family=family,
        params=params,
        loglik=loglik,
        k=k,
        n_eff=n_eff,
        aic=aic,
        bic=bic,
        aicc=aicc,
        converged=bool(best.success),
        iterations=total_iter,
        starts=[s.tolist() for s in starts],
    )
