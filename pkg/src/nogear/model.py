"""Exact probability laws, moments and simulation for the NoGeAR(1) process.

The process is ``X_t = omega (*) X_{t-1} + eps_t`` where the thinning replaces
each unit of ``X_{t-1}`` by an iid draw of ``G*``::

    P(G* = 0) = alpha,   P(G* = x) = (1 - alpha)(1 - beta) beta^(x-1),  x >= 1

and the innovations are a two-component geometric mixture chosen so that the
stationary marginal is geometric, ``P(X = x) = (1 - theta) theta^x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from . import _accel
from .errors import ConstraintViolation


@dataclass(frozen=True)
class ModelParams:
    """Validated ``(alpha, beta, theta)`` with derived quantities.

    Build through :func:`validate_params`; the constructor itself does not check
    the admissible region.
    """

    alpha: float
    beta: float
    theta: float
    omega: float = field(init=False)
    mix_weight: float = field(init=False)
    mu_eps: float = field(init=False)
    sigma2_eps: float = field(init=False)

    def __post_init__(self):
        a, b, t = self.alpha, self.beta, self.theta
        w = (a * t - b) / (t - b)
        set_ = object.__setattr__
        set_(self, "omega", (1.0 - a) / (1.0 - b))
        set_(self, "mix_weight", w)
        mu, var = _mixture_moments(w, t, b)
        set_(self, "mu_eps", mu)
        set_(self, "sigma2_eps", var)

    @property
    def gstar_mean(self) -> float:
        return self.omega

    @property
    def gstar_var(self) -> float:
        a, b = self.alpha, self.beta
        return (1.0 - a) * (a + b) / (1.0 - b) ** 2

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "theta": self.theta}


def _mixture_moments(w, q1, q2):
    # geometric (1-q) q^x: mean q/(1-q), second moment q(1+q)/(1-q)^2
    m1 = w * q1 / (1 - q1) + (1 - w) * q2 / (1 - q2)
    s1 = w * q1 * (1 + q1) / (1 - q1) ** 2 + (1 - w) * q2 * (1 + q2) / (1 - q2) ** 2
    return m1, s1 - m1 * m1


@dataclass(frozen=True)
class CountSeries:
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 1:
            raise ValueError("series must be one-dimensional")
        if arr.size and (np.any(arr < 0) or not np.all(np.equal(np.mod(arr, 1), 0))):
            raise ValueError("series values must be non-negative integers")
        object.__setattr__(self, "values", arr.astype(np.int64))

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class RngSpec:
    """Seed plus replication stream; equal specs give equal generators."""

    seed: int
    stream: int = 0

    def generator(self, *extra: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), *map(int, extra)))
        return np.random.default_rng(ss)


def validate_params(alpha: float, beta: float, theta: float) -> ModelParams:
    """Check the NoGeAR admissible region and return populated parameters.

    Requires ``0 < beta < alpha < 1``, ``0 < theta < 1`` and ``beta <= alpha*theta``
    (the last keeps the innovation mixture weight inside [0, 1]; together with
    the others it also gives ``beta < theta``).
    """
    alpha, beta, theta = float(alpha), float(beta), float(theta)
    for name, v in (("alpha", alpha), ("beta", beta), ("theta", theta)):
        if not (0.0 < v < 1.0) or math.isnan(v):
            raise ConstraintViolation(f"0 < {name} < 1 violated ({name}={v})")
    if not beta < alpha:
        raise ConstraintViolation(f"beta < alpha violated (alpha={alpha}, beta={beta})")
    if not beta < theta:
        raise ConstraintViolation(f"beta < theta violated (beta={beta}, theta={theta})")
    if beta > alpha * theta:
        raise ConstraintViolation(
            f"beta <= alpha*theta violated (beta={beta}, alpha*theta={alpha * theta})"
        )
    return ModelParams(alpha, beta, theta)


# --------------------------------------------------------------------------
# pmfs
# --------------------------------------------------------------------------

def gstar_pmf(p: ModelParams, x):
    """pmf of one thinning summand ``G*``; vectorised over ``x``."""
    x = np.asarray(x)
    xm = np.maximum(x, 1).astype(np.float64)
    out = np.where(x == 0, p.alpha, (1 - p.alpha) * (1 - p.beta) * p.beta ** (xm - 1))
    return out[()] if out.ndim == 0 else out


def innovation_pmf(p: ModelParams, x):
    x = np.asarray(x, dtype=np.float64)
    w, t, b = p.mix_weight, p.theta, p.beta
    out = w * t**x * (1 - t) + (1 - w) * b**x * (1 - b)
    return out[()] if out.ndim == 0 else out


def innovation_moments(p: ModelParams) -> tuple[float, float]:
    return p.mu_eps, p.sigma2_eps


def marginal_pmf(p: ModelParams | float, x):
    theta = p.theta if isinstance(p, ModelParams) else float(p)
    x = np.asarray(x, dtype=np.float64)
    out = (1 - theta) * theta**x
    return out[()] if out.ndim == 0 else out


def transition_pmf(p: ModelParams, y: int, x: int) -> float:
    """One-step ``P(X_{t+1} = x | X_t = y)`` evaluated case by case.

    Literal evaluation of the closed form with exact integer binomials; slow
    for large arguments. Use :func:`transition_matrix` for bulk work.
    """
    y, x = int(y), int(x)
    a, b, th = p.alpha, p.beta, p.theta
    if x == 0:
        return (1 - a * th) * (a**y if y else 1.0)
    eps = lambda k: float(innovation_pmf(p, k))
    if y == 0:
        return eps(x)
    c = (1 - a) * (1 - b)
    total = a**y * eps(x)
    for m in range(1, x + 1):
        inner = 0.0
        for j in range(1, min(m, y) + 1):
            inner += math.comb(y, j) * math.comb(m - 1, j - 1) * c**j * a ** (y - j) * b ** (m - j)
        total += eps(x - m) * inner
    return total


def thinning_matrix(p: ModelParams, K: int) -> np.ndarray:
    """``S[y, m] = P(sum of y iid G* = m)`` for ``y, m <= K``."""
    return _accel.fold_powers(gstar_pmf(p, np.arange(K + 1)), K)


def transition_matrix(p: ModelParams, K: int) -> np.ndarray:
    """Exact one-step probabilities ``T[y, x]`` for ``y, x <= K`` (no renormalisation)."""
    S = thinning_matrix(p, K)
    return _accel.convolve_innovation(S, innovation_pmf(p, np.arange(K + 1)))


# --------------------------------------------------------------------------
# two-step closed form
# --------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _closed_form_thinning(alpha, beta, M):
    # P(sum of k iid G* = m) from the binomial double sum, k, m <= M
    c = (1 - alpha) * (1 - beta)
    k = np.arange(M + 1)[:, None].astype(np.float64)
    m = np.arange(M + 1)[None, :].astype(np.float64)
    S = np.zeros((M + 1, M + 1))
    la, lb, lc = np.log(alpha), np.log(beta), np.log(c)
    for j in range(1, M + 1):
        ok = (k >= j) & (m >= j)
        kk = np.where(ok, k, j)
        mm = np.where(ok, m, j)
        logt = (
            gammaln(kk + 1) - gammaln(j + 1) - gammaln(kk - j + 1)
            + gammaln(mm) - gammaln(j) - gammaln(mm - j + 1)
            + j * lc + (kk - j) * la + (mm - j) * lb
        )
        S += np.where(ok, np.exp(logt), 0.0)
    S[:, 0] = alpha ** np.arange(M + 1)
    return S


def _two_step_parts(p: ModelParams, M: int):
    S = _closed_form_thinning(p.alpha, p.beta, M)
    eps = innovation_pmf(p, np.arange(M + 1))
    S1 = S.copy()
    S1[:, 0] = 0.0
    # B[k, x] = sum_{m=1}^{x} S[k, m] eps[x - m]   (thinning count k, target x)
    B = np.zeros((M + 1, M + 1))
    for x in range(1, M + 1):
        B[:, x] = S1[:, 1 : x + 1] @ eps[x - 1 :: -1][:x]
    A = float(np.sum(p.alpha ** np.arange(1, M + 1) * eps[1:]))
    return eps, B, A


def two_step_pmf(p: ModelParams, y: int, x: int, M: int = 200) -> float:
    """Two-step transition probability with the infinite sums cut at ``M``.

    With ``one_step(x | k) = alpha^k eps(x) + B(x, k)`` the Chapman-Kolmogorov
    sum splits into four pieces::

        eps(x) alpha^y (1 - alpha*theta + A)
        + eps(x) sum_k alpha^k B(k, y)
        + alpha^y sum_k B(x, k) eps(k)
        + sum_k B(x, k) B(k, y)

    where ``A = sum_{k>=1} alpha^k eps(k)`` and ``B(., 0) = B(0, .) = 0``.
    ``B`` is computed from the binomial double sum, independently of the
    convolution route used by :func:`transition_matrix`.
    """
    y, x = int(y), int(x)
    if y > M or x > M:
        raise ValueError("y and x must not exceed M")
    eps, B, A = _two_step_parts(p, M)
    a = p.alpha
    ks = np.arange(1, M + 1)
    ak = a**ks
    Bky = B[y, 1:] if y else np.zeros(M)  # B(k, y): count y, target k
    Bxk = B[1:, x]  # B(x, k): count k, target x
    head = eps[x] * a**y * (1 - a * p.theta + A)
    return float(
        head
        + eps[x] * np.dot(ak, Bky)
        + a**y * np.dot(Bxk, eps[1:])
        + np.dot(Bxk, Bky)
    )


def two_step_matrix(p: ModelParams, size: int, M: int = 200) -> np.ndarray:
    """Closed-form two-step probabilities for ``y, x <= size`` (vectorised)."""
    eps, B, A = _two_step_parts(p, M)
    a = p.alpha
    ys = np.arange(size + 1)
    ay = a**ys
    ak = a ** np.arange(1, M + 1)
    Bky = B[ys, 1:]  # (y, k)
    Bky[0] = 0.0
    Bxk = B[1:, : size + 1]  # (k, x)
    e = eps[: size + 1]
    out = np.outer(ay, e) * (1 - a * p.theta + A)
    out += np.outer(Bky @ ak, e)
    out += np.outer(ay, eps[1:] @ Bxk)
    out += Bky @ Bxk
    return out


# --------------------------------------------------------------------------
# conditional moments
# --------------------------------------------------------------------------

def cond_mean(p: ModelParams, y, h: int):
    w = p.omega
    return w**h * np.asarray(y, dtype=np.float64)[()] + (1 - w**h) / (1 - w) * p.mu_eps


def cond_var(p: ModelParams, y, h: int):
    """h-step conditional variance in the published closed form.

    Agrees with :func:`cond_var_recursive` for ``h <= 2``; from ``h = 3`` on the
    ``mu_eps`` coefficient differs (see the acceptance report).
    """
    w = p.omega
    c = (p.alpha + p.beta) / (1 - p.beta)
    y = np.asarray(y, dtype=np.float64)[()]
    coef_mu = w * (1 - w ** (2 * (h - 1))) / ((1 + w) * (1 - w) ** 2) - w ** (2 * (h - 1)) * (
        1 - w ** (h - 1)
    ) / (1 - w) ** 2
    return c * (w**h * (1 - w**h) / (1 - w) * y + coef_mu * p.mu_eps) + (1 - w ** (2 * h)) / (
        1 - w**2
    ) * p.sigma2_eps


def cond_var_recursive(p: ModelParams, y, h: int):
    """h-step conditional variance by the law of total variance.

    ``V_h = ω² V_{h-1} + Var(G*) E_{h-1} + σ²_ε`` with ``V_0 = 0``, ``E_0 = y``.
    """
    y = np.asarray(y, dtype=np.float64)[()]
    v = 0.0 * y
    for k in range(h):
        e_prev = y if k == 0 else cond_mean(p, y, k)
        v = p.omega**2 * v + p.gstar_var * e_prev + p.sigma2_eps
    return v


# --------------------------------------------------------------------------
# generating functions
# --------------------------------------------------------------------------

def gstar_pgf(p: ModelParams, s):
    return (p.alpha * (1 - s) + (1 - p.beta) * s) / (1 - p.beta * s)


def gstar_pgf_iter(p: ModelParams, s, h: int):
    """h-fold functional iterate of the ``G*`` pgf; ``h = 0`` is the identity."""
    for _ in range(int(h)):
        s = gstar_pgf(p, s)
    return s


def gstar_pgf_closed(p: ModelParams, s, h: int):
    """Closed-form h-fold iterate (kept only to cross-check the iteration)."""
    a, b = p.alpha, p.beta
    if h == 0:
        return s
    C = math.comb
    num = (-1) ** (h + 1) * a**h + sum(
        (-1) ** (i + 1) * a**i * sum(C(h, j) * (-b) ** (h - j - i) for j in range(h - i + 1))
        for i in range(1, h)
    )
    d1 = sum(
        (-a) ** i * sum(C(h, j) * (-b) ** (h - j - i - 1) for j in range(h - i)) for i in range(1, h)
    )
    d2 = sum(C(h, j) * (-b) ** (h - j - 1) for j in range(h))
    return (num * (1 - s) + (1 - b) ** h * s) / (1 + b * (1 - s) * d1 - b * s * d2)


def forecast_pgf(p: ModelParams, y: int, h: int, s):
    """Conditional pgf ``E[s^X_{t+h} | X_t = y]`` in product form."""
    px = lambda z: (1 - p.theta) / (1 - p.theta * z)
    g = gstar_pgf_iter(p, s, h)
    denom = px(g)
    if np.any(np.asarray(denom) == 0):
        raise ZeroDivisionError("marginal pgf vanished at iterated argument")
    return px(s) / denom * g ** int(y)


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------

def simulate(p: ModelParams, n: int, rng: RngSpec | np.random.Generator, burn_in: int = 0,
             name: str = "") -> CountSeries:
    """Simulate ``n`` observations, starting from the stationary marginal.

    The thinning is literal: ``X_{t-1}`` independent ``G*`` draws per step.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = rng.generator() if isinstance(rng, RngSpec) else rng
    x0 = int(np.floor(np.log1p(-gen.random()) / np.log(p.theta)))
    total = n + int(burn_in)
    path = np.empty(total, dtype=np.int64)
    path[0] = x0
    if total > 1:
        path[1:] = _accel.run_chain(
            x0, total - 1, gen, _accel.THIN_GSTAR, p.alpha, p.beta,
            _accel.INNOV_GEOM_MIX, w=p.mix_weight, q1=p.theta, q2=p.beta,
        )
    return CountSeries(path[int(burn_in):], name=name)
