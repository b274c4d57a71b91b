"""Time the numba kernels against their pure-numpy twins.

Run with ``python3 benchmarks/bench_kernels.py``; numba timings exclude the
first (compiling) call.
"""
import argparse
import time

import numpy as np

from nogear import _accel
from nogear.model import gstar_pmf, innovation_pmf, validate_params


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--K", type=int, nargs="+", default=[30, 200],
                    help="truncation bounds for matrix builds")
    ap.add_argument("--n", type=int, default=100_000, help="chain length")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    if not _accel.HAS_NUMBA:
        raise SystemExit("numba is not installed")

    p = validate_params(0.6, 0.4, 0.75)
    w = p.mix_weight

    def chain(backend):
        rng = np.random.default_rng(0)
        return _accel.run_chain(3, args.n, rng, _accel.THIN_GSTAR, p.alpha, p.beta,
                                _accel.INNOV_GEOM_MIX, w, p.theta, p.beta, backend=backend)

    cases = []
    for K in args.K:
        unit = gstar_pmf(p, np.arange(K + 1))
        eps = innovation_pmf(p, np.arange(K + 1))
        S = _accel.fold_powers_numpy(unit, K)
        cases.append((f"fold_powers K={K}", lambda u=unit, K=K: _accel.fold_powers_numpy(u, K),
                      lambda u=unit, K=K: _accel.fold_powers_numba(u, K)))
        cases.append((f"convolve K={K}", lambda S=S, e=eps: _accel.convolve_innovation_numpy(S, e),
                      lambda S=S, e=eps: _accel.convolve_innovation_numba(S, e)))
    cases.append((f"simulate n={args.n}", lambda: chain("numpy"), lambda: chain("numba")))

    assert np.array_equal(chain("numpy"), chain("numba"))
    print(f"repeat={args.repeat} (dispatch uses numba for matrix kernels up to "
          f"K={_accel.NUMBA_MATRIX_MAX})")
    print(f"{'kernel':<26}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, f_np, f_nb in cases:
        f_nb()
        t_np = best_of(f_np, args.repeat)
        t_nb = best_of(f_nb, args.repeat)
        print(f"{name:<26}{t_np:12.5f}{t_nb:12.5f}{t_np / t_nb:10.1f}")


if __name__ == "__main__":
    main()
