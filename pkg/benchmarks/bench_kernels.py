"""Time the numba kernels against their pure-numpy twins.

Usage: python3 benchmarks/bench_kernels.py [--n 10000] [--repeat 20]

Both backends are imported side by side, so the MQREG_DISABLE_NUMBA
flag is irrelevant here. The first numba call (compilation) is excluded.
"""
import argparse
import time

import numpy as np

from mqreg import _kernels as K
from mqreg.ali import expected_psi_sq_ali
from mqreg.fitting import scale_cmad


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    n = args.n
    x = 1 + rng.standard_normal(n)
    X = np.column_stack([np.ones(n), x])
    y = 100 + 4 * x + rng.standard_t(3, n)
    beta0 = np.linalg.lstsq(X, y, rcond=None)[0]
    sigma0 = scale_cmad(y - X @ beta0)
    r = (y - X @ beta0) / sigma0
    cs = np.round(np.arange(0.5, 4.0001, 0.02), 10)

    cases = [
        ("psi_q", lambda: K.psi_q_numpy(r, 0.3, 1.345), lambda: K.psi_q_numba(r, 0.3, 1.345)),
        ("tau grid (176 c)", lambda: K.tau_grid_numpy(r, 0.3, cs), lambda: K.tau_grid_numba(r, 0.3, cs)),
    ]
    for name, code in [("cMAD", K.CMAD), ("ML", K.ML), ("MM", K.MM)]:
        e_mm = expected_psi_sq_ali(0.3, 1.345)
        fit_args = (y, X, 0.3, 1.345, code, beta0, sigma0, e_mm, 1e-12, 1e-8, 200)
        cases.append((f"IRLS {name}", lambda a=fit_args: K.irls_numpy(*a),
                      lambda a=fit_args: K.irls_numba(*a)))

    print(f"n = {n}, best of {args.repeat}")
    print(f"{'kernel':<18}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, f_np, f_nb in cases:
        t_np = best_of(f_np, args.repeat)
        t_nb = best_of(f_nb, args.repeat)
        print(f"{name:<18}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
