"""Truncated Markov-chain approximation of h-step forecast distributions."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import OriginOutOfRange, TruncationTooSevere, TruncationWarning

TRUNCATION_TOL = 1e-6


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic ``(M+1) x (M+1)`` matrix with per-row truncation loss.

    ``truncation_mass[y]`` is the probability the exact kernel puts above ``M``
    from state ``y`` before renormalisation.
    """

    M: int
    rows: np.ndarray
    truncation_mass: np.ndarray
    renormalized: bool = True

    def __post_init__(self):
        self.rows.setflags(write=False)
        self.truncation_mass.setflags(write=False)

    def power(self, h: int) -> np.ndarray:
        return np.linalg.matrix_power(self.rows, int(h))


@dataclass(frozen=True)
class ForecastDistribution:
    origin: int
    horizon: int
    probs: np.ndarray
    M: int

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)


@dataclass(frozen=True)
class PointForecasts:
    mean: float
    mean_rounded: int
    median: int
    mode: int


@dataclass(frozen=True)
class HppInterval:
    lower: int
    upper: int
    achieved_coverage: float
    delta: float
    set_coverage: float
    contiguous: bool


def build_matrix(kernel, M: int, check: bool = True) -> TransitionMatrix:
    """Truncate a one-step kernel to states ``0..M`` and renormalise rows.

    ``kernel`` is either an object with a ``matrix(K)`` method returning the
    exact ``(K+1) x (K+1)`` probabilities, or a callable ``kernel(y, x)``.

    Raises :class:`TruncationTooSevere` when any interior row (``y <= M // 2``)
    loses more than ``1e-6``. Rows near ``M`` necessarily lose more mass since
    their conditional mean approaches the bound; forecasts from such origins
    emit a :class:`TruncationWarning` instead.
    """
    M = int(M)
    if M < 1:
        raise ValueError("M must be >= 1")
    if hasattr(kernel, "matrix"):
        raw = np.array(kernel.matrix(M), dtype=np.float64)
    else:
        raw = np.array([[kernel(y, x) for x in range(M + 1)] for y in range(M + 1)], dtype=np.float64)
    if np.any(raw < -1e-15):
        raise ValueError("kernel returned negative probabilities")
    raw = np.clip(raw, 0.0, None)
    lost = np.clip(1.0 - raw.sum(axis=1), 0.0, None)
    if check:
        interior = lost[: M // 2 + 1]
        worst = float(interior.max())
        if worst > TRUNCATION_TOL:
            y = int(np.argmax(interior))
            raise TruncationTooSevere(
                f"row {y} loses {worst:.3g} > {TRUNCATION_TOL:g} beyond M={M}; increase M"
            )
    rows = raw / raw.sum(axis=1, keepdims=True)
    return TransitionMatrix(M=M, rows=rows, truncation_mass=lost, renormalized=True)


def h_step_distribution(tm: TransitionMatrix, y: int, h: int) -> ForecastDistribution:
    """Row ``y`` of ``tm^h`` by repeated row-vector products."""
    y, h = int(y), int(h)
    if y < 0 or y > tm.M:
        raise OriginOutOfRange(f"origin {y} outside 0..{tm.M}")
    if h < 1:
        raise ValueError("h must be >= 1")
    if tm.truncation_mass[y] > TRUNCATION_TOL:
        warnings.warn(
            f"origin row {y} lost {tm.truncation_mass[y]:.3g} to truncation at M={tm.M}",
            TruncationWarning,
            stacklevel=2,
        )
    v = tm.rows[y].copy()
    for _ in range(h - 1):
        v = v @ tm.rows
    return ForecastDistribution(origin=y, horizon=h, probs=v, M=tm.M)


def _round_half_up(v):
    return np.floor(np.asarray(v) + 0.5).astype(np.int64)


def point_forecasts(fd: ForecastDistribution, p=None) -> PointForecasts:
    """Mean, rounded mean, median and mode of a forecast distribution.

    If NoGeAR parameters ``p`` are given, the mean of ``probs`` is compared
    with the closed-form conditional mean and a warning is issued when they
    differ by more than ``1e-6``.
    """
    probs = fd.probs
    xs = np.arange(probs.size)
    mean = float(xs @ probs)
    if p is not None:
        from .model import cond_mean

        exact = float(cond_mean(p, fd.origin, fd.horizon))
        if abs(exact - mean) > 1e-6:
            warnings.warn(f"truncated mean {mean:.8g} differs from exact {exact:.8g}", TruncationWarning)
    cdf = np.cumsum(probs)
    median = int(np.searchsorted(cdf, 0.5 - 1e-12, side="left"))
    return PointForecasts(
        mean=mean,
        mean_rounded=int(_round_half_up(mean)),
        median=min(median, probs.size - 1),
        mode=int(np.argmax(probs)),
    )


def point_forecasts_all(P: np.ndarray):
    """Vectorised mean / rounded mean / median / mode for every row of ``P``."""
    xs = np.arange(P.shape[1])
    mean = P @ xs
    cdf = np.cumsum(P, axis=1)
    median = np.argmax(cdf >= 0.5 - 1e-12, axis=1)
    mode = np.argmax(P, axis=1)
    return mean, _round_half_up(mean), median.astype(np.int64), mode.astype(np.int64)


def hpp_interval(fd: ForecastDistribution | np.ndarray, delta: float) -> HppInterval:
    """Highest-predictive-probability interval at level ``1 - delta``.

    States are added in decreasing probability (ties: smaller state first)
    until the accumulated mass reaches ``1 - delta``; the interval is the
    integer hull of that set. ``set_coverage`` is the mass of the set itself,
    ``achieved_coverage`` the mass of the hull.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    probs = fd.probs if isinstance(fd, ForecastDistribution) else np.asarray(fd, dtype=np.float64)
    order = np.lexsort((np.arange(probs.size), -probs))
    cum = np.cumsum(probs[order])
    k = int(np.searchsorted(cum, 1.0 - delta - 1e-12, side="left"))
    k = min(k, probs.size - 1)
    chosen = order[: k + 1]
    lo, hi = int(chosen.min()), int(chosen.max())
    return HppInterval(
        lower=lo,
        upper=hi,
        achieved_coverage=float(probs[lo : hi + 1].sum()),
        delta=float(delta),
        set_coverage=float(cum[k]),
        contiguous=(hi - lo + 1) == chosen.size,
    )

