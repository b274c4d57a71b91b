"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``NOGEAR_DISABLE_NUMBA=1`` (or run without numba installed) to force the
numpy implementations. Both paths implement the same algorithms and consume
uniform buffers identically, so seeded simulations agree across backends.

Kernels
-------
fold_powers(unit, K)
    Row ``y`` holds the pmf of a sum of ``y`` iid copies of ``unit`` on 0..K.
convolve_innovation(S, eps)
    ``T[y, x] = sum_{m<=x} S[y, m] * eps[x - m]``.
simulate_chain(...)
    Thinning-plus-innovation chain driven by a buffer of uniforms.
"""
import os

import numpy as np

THIN_GSTAR = 0
THIN_BINOMIAL = 1
INNOV_GEOM_MIX = 0
INNOV_POISSON = 1

_DISABLE = os.environ.get("NOGEAR_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLE
BACKEND = "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def fold_powers_numpy(unit, K):
    unit = np.asarray(unit, dtype=np.float64)[: K + 1]
    S = np.zeros((K + 1, K + 1))
    S[0, 0] = 1.0
    for y in range(1, K + 1):
        S[y] = np.convolve(S[y - 1], unit)[: K + 1]
    return S


def convolve_innovation_numpy(S, eps):
    K = S.shape[1] - 1
    eps = np.asarray(eps, dtype=np.float64)[: K + 1]
    E = np.zeros((K + 1, K + 1))
    for m in range(K + 1):
        E[m, m:] = eps[: K + 1 - m]
    return S @ E


def _geom_draw(u, q):
    # failures before first success on {0,1,...}, P(k) = (1-q) q^k; u in [0, 1)
    if q <= 0.0:
        return 0
    return int(np.floor(np.log1p(-u) / np.log(q)))


def _poisson_draw(u, lam):
    k = 0
    p = np.exp(-lam)
    F = p
    while u > F and p > 0.0:
        k += 1
        p *= lam / k
        F += p
    return k


def _step_numpy(x, buf, pos, thin_kind, a, b, innov_kind, w, q1, q2, lam):
    u = buf[pos:pos + x]
    if thin_kind == THIN_GSTAR:
        nz = u >= a
        v = (u[nz] - a) / (1.0 - a)
        s = int(nz.sum()) + int(np.floor(np.log1p(-v) / np.log(b)).sum()) if b > 0.0 else int(nz.sum())
    else:
        s = int((u < a).sum())
    u1 = buf[pos + x]
    u2 = buf[pos + x + 1]
    if innov_kind == INNOV_GEOM_MIX:
        e = _geom_draw(u2, q1 if u1 < w else q2)
    else:
        e = _poisson_draw(u2, lam)
    return s + e


def simulate_chain_numpy(out, t, x, buf, thin_kind, a, b, innov_kind, w, q1, q2, lam):
    n = out.shape[0]
    pos = 0
    L = buf.shape[0]
    while t < n and pos + x + 2 <= L:
        nxt = _step_numpy(x, buf, pos, thin_kind, a, b, innov_kind, w, q1, q2, lam)
        pos += x + 2
        x = nxt
        out[t] = x
        t += 1
    return t, x


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def fold_powers_numba(unit, K):
        L = min(unit.shape[0], K + 1)
        S = np.zeros((K + 1, K + 1))
        S[0, 0] = 1.0
        for y in range(1, K + 1):
            for m in range(K + 1):
                acc = 0.0
                lo = m - L + 1
                if lo < 0:
                    lo = 0
                for l in range(lo, m + 1):
                    acc += S[y - 1, l] * unit[m - l]
                S[y, m] = acc
        return S

    @njit(cache=True)
    def convolve_innovation_numba(S, eps):
        R = S.shape[0]
        K = S.shape[1] - 1
        T = np.zeros((R, K + 1))
        for y in range(R):
            for x in range(K + 1):
                acc = 0.0
                for m in range(x + 1):
                    acc += S[y, m] * eps[x - m]
                T[y, x] = acc
        return T

    @njit(cache=True)
    def _geom_draw_nb(u, q):
        if q <= 0.0:
            return 0
        return int(np.floor(np.log1p(-u) / np.log(q)))

    @njit(cache=True)
    def _poisson_draw_nb(u, lam):
        k = 0
        p = np.exp(-lam)
        F = p
        while u > F and p > 0.0:
            k += 1
            p *= lam / k
            F += p
        return k

    @njit(cache=True)
    def simulate_chain_numba(out, t, x, buf, thin_kind, a, b, innov_kind, w, q1, q2, lam):
        n = out.shape[0]
        pos = 0
        L = buf.shape[0]
        logb = np.log(b) if b > 0.0 else 0.0
        while t < n and pos + x + 2 <= L:
            s = 0
            if thin_kind == THIN_GSTAR:
                for i in range(x):
                    u = buf[pos + i]
                    if u >= a:
                        s += 1
                        if b > 0.0:
                            v = (u - a) / (1.0 - a)
                            s += int(np.floor(np.log1p(-v) / logb))
            else:
                for i in range(x):
                    if buf[pos + i] < a:
                        s += 1
            u1 = buf[pos + x]
            u2 = buf[pos + x + 1]
            if innov_kind == INNOV_GEOM_MIX:
                e = _geom_draw_nb(u2, q1 if u1 < w else q2)
            else:
                e = _poisson_draw_nb(u2, lam)
            pos += x + 2
            x = s + e
            out[t] = x
            t += 1
        return t, x


# Above this bound the BLAS-backed numpy matrix kernels outrun the scalar
# numba loops (see benchmarks/bench_kernels.py).
NUMBA_MATRIX_MAX = 64


def fold_powers(unit, K):
    unit = np.ascontiguousarray(unit, dtype=np.float64)
    if USE_NUMBA and K <= NUMBA_MATRIX_MAX:
        return fold_powers_numba(unit, int(K))
    return fold_powers_numpy(unit, int(K))


def convolve_innovation(S, eps):
    S = np.ascontiguousarray(S, dtype=np.float64)
    eps = np.ascontiguousarray(eps, dtype=np.float64)[: S.shape[1]]
    if USE_NUMBA and S.shape[1] <= NUMBA_MATRIX_MAX + 1:
        return convolve_innovation_numba(S, eps)
    return convolve_innovation_numpy(S, eps)


def run_chain(x0, n, rng, thin_kind, a, b, innov_kind, w=1.0, q1=0.0, q2=0.0, lam=0.0,
              chunk=4096, backend=None):
    """Run ``n`` transitions from ``x0``; returns the visited states (int64).

    Uniforms are pulled from ``rng`` in fixed-size chunks; the tail of a chunk
    that cannot hold a full step is discarded. Both backends follow this rule.
    """
    backend = backend or BACKEND
    kern = simulate_chain_numba if backend == "numba" else simulate_chain_numpy
    out = np.empty(n, dtype=np.int64)
    t, x = 0, int(x0)
    while t < n:
        size = max(chunk, x + 2)
        buf = rng.random(size)
        t, x = kern(out, t, x, buf, thin_kind, float(a), float(b), innov_kind,
                    float(w), float(q1), float(q2), float(lam))
        t, x = int(t), int(x)
    return out
