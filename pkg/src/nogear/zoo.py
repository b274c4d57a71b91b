"""Comparator INAR(1) families behind one thinning + innovation abstraction.

Every family here has the form ``X_t = (y-fold thinning of X_{t-1}) + eps_t``,
so the one-step kernel is the convolution of a survivor pmf with an
innovation pmf. NGINAR is handled by delegation: it is NoGeAR with
``alpha = 1 - beta = 1/(1 + alpha_ng)`` and ``theta = mu/(1 + mu)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import stats

from . import _accel
from .errors import ConstraintViolation
from .model import (
    CountSeries,
    ModelParams,
    RngSpec,
    gstar_pmf,
    innovation_pmf,
    simulate as simulate_nogear,
    validate_params,
)


class Family(str, enum.Enum):
    NOGEAR = "nogear"
    NGINAR = "nginar"
    GINAR = "ginar"
    PINAR = "pinar"

    @property
    def n_params(self) -> int:
        return 3 if self is Family.NOGEAR else 2


@dataclass(frozen=True)
class NginarParams:
    alpha_ng: float
    mu: float

    def __post_init__(self):
        if not 0.0 < self.alpha_ng < 1.0:
            raise ConstraintViolation(f"0 < alpha_ng < 1 violated (alpha_ng={self.alpha_ng})")
        if not self.mu > 0.0:
            raise ConstraintViolation(f"mu > 0 violated (mu={self.mu})")

    def as_dict(self):
        return {"alpha_ng": self.alpha_ng, "mu": self.mu}


@dataclass(frozen=True)
class GinarParams:
    p: float
    alpha_thin: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ConstraintViolation(f"0 < p < 1 violated (p={self.p})")
        if not 0.0 <= self.alpha_thin < 1.0:
            raise ConstraintViolation(f"0 <= alpha_thin < 1 violated (alpha_thin={self.alpha_thin})")

    def as_dict(self):
        return {"p": self.p, "alpha_thin": self.alpha_thin}


@dataclass(frozen=True)
class PinarParams:
    """``lam`` is the stationary mean unless ``lam_is_innovation_mean`` is set."""

    lam: float
    alpha_thin: float
    lam_is_innovation_mean: bool = False

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ConstraintViolation(f"lambda > 0 violated (lambda={self.lam})")
        if not 0.0 <= self.alpha_thin < 1.0:
            raise ConstraintViolation(f"0 <= alpha_thin < 1 violated (alpha_thin={self.alpha_thin})")

    @property
    def innovation_mean(self) -> float:
        return self.lam if self.lam_is_innovation_mean else self.lam * (1.0 - self.alpha_thin)

    def as_dict(self):
        d = {"lam": self.lam, "alpha_thin": self.alpha_thin}
        if self.lam_is_innovation_mean:
            d["lam_is_innovation_mean"] = True
        return d


AnyParams = Union[ModelParams, NginarParams, GinarParams, PinarParams]


def nginar_as_nogear(np_: NginarParams) -> ModelParams:
    alpha = 1.0 / (1.0 + np_.alpha_ng)
    return validate_params(alpha, 1.0 - alpha, np_.mu / (1.0 + np_.mu))


def binomial_survivor_pmf(alpha_thin: float, y: int, l: int) -> float:
    if l < 0 or l > y:
        return 0.0
    return float(stats.binom.pmf(l, y, alpha_thin))


@dataclass(frozen=True)
class InarKernel:
    """Survivor law of one thinned unit plus innovation law.

    ``unit_pmf(K)`` returns the pmf of a single thinning summand on ``0..K``;
    the survivor pmf of ``y`` units is its ``y``-fold convolution.
    """

    label: str
    unit_pmf: Callable[[int], np.ndarray]
    innovation: Callable[[np.ndarray], np.ndarray]
    unit_mean: float
    unit_var: float
    innov_mean: float
    innov_var: float

    def survivor_matrix(self, K: int) -> np.ndarray:
        return _accel.fold_powers(self.unit_pmf(K), K)

    def survivor_pmf(self, y: int, l: int) -> float:
        K = max(int(y), int(l))
        return float(self.survivor_matrix(K)[y, l])

    def innovation_pmf(self, x):
        out = self.innovation(np.asarray(x, dtype=np.float64))
        return out[()] if np.ndim(out) == 0 else out

    def matrix(self, K: int) -> np.ndarray:
        """Exact one-step probabilities on ``0..K`` (rows not renormalised)."""
        return _accel.convolve_innovation(self.survivor_matrix(K), self.innovation_pmf(np.arange(K + 1)))

    def transition_pmf(self, y: int, x: int) -> float:
        return kernel_transition_pmf(self, y, x)

    def cond_mean(self, y):
        return self.unit_mean * np.asarray(y, dtype=np.float64) + self.innov_mean

    def cond_var(self, y):
        return self.unit_var * np.asarray(y, dtype=np.float64) + self.innov_var


def kernel_transition_pmf(k: InarKernel, y: int, x: int) -> float:
    """``sum_{l=0}^{x} survivor(y, l) * innovation(x - l)``."""
    y, x = int(y), int(x)
    K = max(y, x)
    surv = k.survivor_matrix(K)[y, : x + 1]
    eps = k.innovation_pmf(np.arange(x + 1))[::-1]
    return float(surv @ eps)


def _geom(q, x):
    return (1.0 - q) * q**x


def _nogear_kernel(p: ModelParams, label="NoGeAR") -> InarKernel:
    return InarKernel(
        label=label,
        unit_pmf=lambda K: gstar_pmf(p, np.arange(K + 1)),
        innovation=lambda x: innovation_pmf(p, x),
        unit_mean=p.omega,
        unit_var=p.gstar_var,
        innov_mean=p.mu_eps,
        innov_var=p.sigma2_eps,
    )


def _binomial_unit(a):
    def unit(K):
        u = np.zeros(max(K + 1, 2))
        u[0], u[1] = 1.0 - a, a
        return u[: K + 1]

    return unit


def _ginar_kernel(g: GinarParams) -> InarKernel:
    a, p = g.alpha_thin, g.p
    # zero with prob a, geometric(p) otherwise: keeps the geometric(p) marginal
    m = p / (1 - p)
    s2 = p * (1 + p) / (1 - p) ** 2
    mu = (1 - a) * m
    return InarKernel(
        label="GINAR",
        unit_pmf=_binomial_unit(a),
        innovation=lambda x: a * (x == 0) + (1 - a) * _geom(p, x),
        unit_mean=a,
        unit_var=a * (1 - a),
        innov_mean=mu,
        innov_var=(1 - a) * s2 - mu * mu,
    )


def _pinar_kernel(q: PinarParams) -> InarKernel:
    a, lam_e = q.alpha_thin, q.innovation_mean
    return InarKernel(
        label="PINAR",
        unit_pmf=_binomial_unit(a),
        innovation=lambda x: stats.poisson.pmf(x, lam_e),
        unit_mean=a,
        unit_var=a * (1 - a),
        innov_mean=lam_e,
        innov_var=lam_e,
    )


@dataclass(frozen=True)
class InarModel:
    """A family, its validated parameters, kernel and simulator."""

    family: Family
    params: AnyParams
    kernel: InarKernel

    @property
    def nogear_params(self) -> ModelParams | None:
        if self.family is Family.NOGEAR:
            return self.params
        if self.family is Family.NGINAR:
            return nginar_as_nogear(self.params)
        return None

    def simulate(self, n: int, rng: RngSpec | np.random.Generator, burn_in: int = 0,
                 name: str = "") -> CountSeries:
        ng = self.nogear_params
        if ng is not None:
            return simulate_nogear(ng, n, rng, burn_in=burn_in, name=name)
        gen = rng.generator() if isinstance(rng, RngSpec) else rng
        u0 = gen.random()
        if self.family is Family.GINAR:
            g = self.params
            x0 = int(np.floor(np.log1p(-u0) / np.log(g.p)))
            kw = dict(innov_kind=_accel.INNOV_GEOM_MIX, w=1.0 - g.alpha_thin, q1=g.p, q2=0.0)
        else:
            q = self.params
            if q.lam_is_innovation_mean:
                stat_mean = q.lam / (1.0 - q.alpha_thin)
            else:
                stat_mean = q.lam
            x0 = _poisson_inverse(u0, stat_mean)
            kw = dict(innov_kind=_accel.INNOV_POISSON, lam=q.innovation_mean)
        total = n + int(burn_in)
        path = np.empty(total, dtype=np.int64)
        path[0] = x0
        if total > 1:
            path[1:] = _accel.run_chain(x0, total - 1, gen, _accel.THIN_BINOMIAL,
                                        self.params.alpha_thin, 0.0, **kw)
        return CountSeries(path[int(burn_in):], name=name)


def _poisson_inverse(u, lam):
    k, p = 0, np.exp(-lam)
    F = p
    while u > F and p > 0.0:
        k += 1
        p *= lam / k
        F += p
    return k


def coerce_params(family: Family | str, params) -> AnyParams:
    """Build a family parameter record from a mapping or pass a record through."""
    family = Family(family)
    if not isinstance(params, dict):
        return params
    if family is Family.NOGEAR:
        return validate_params(params["alpha"], params["beta"], params["theta"])
    if family is Family.NGINAR:
        return NginarParams(float(params["alpha_ng"]), float(params["mu"]))
    if family is Family.GINAR:
        return GinarParams(float(params["p"]), float(params["alpha_thin"]))
    return PinarParams(float(params["lam"]), float(params["alpha_thin"]),
                       bool(params.get("lam_is_innovation_mean", False)))


def make_model(family: Family | str, params) -> InarModel:
    family = Family(family)
    params = coerce_params(family, params)
    if family is Family.NOGEAR:
        kernel = _nogear_kernel(params)
    elif family is Family.NGINAR:
        kernel = _nogear_kernel(nginar_as_nogear(params), label="NGINAR")
    elif family is Family.GINAR:
        kernel = _ginar_kernel(params)
    else:
        kernel = _pinar_kernel(params)
    return InarModel(family=family, params=params, kernel=kernel)


def params_as_dict(params: AnyParams) -> dict:
    return params.as_dict()
