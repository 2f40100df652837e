"""Time the interval log-likelihood kernel: compiled loop vs vectorised numpy.

    python benchmarks/bench_kernels.py [--intervals 2000] [--repeat 5]

Both paths get identical precomputed inputs from a simulated panel; the
script also reports the largest absolute disagreement between them.
"""
import argparse
import time

import numpy as np

from levycop import BcppModel, ClaytonLevyCopula, Exponential, Weibull, simulate_panel
from levycop import kernels
from levycop.likelihood import cell_inputs, poisson_means


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--intervals", type=int, default=2000)
    ap.add_argument("--rate", type=float, default=400.0, help="expected jumps per margin per unit time")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    m = BcppModel(args.rate, 0.8 * args.rate, Exponential(1.0), Weibull(1.0, 1.3), ClaytonLevyCopula(1.0))
    horizon = args.intervals / 12.0
    panel = simulate_panel(m, horizon, args.intervals, seed=2024)[0]
    x, y = panel.z[:, 0], panel.z[:, 1]
    k, l = panel.n[:, 0].astype(np.int64), panel.n[:, 1].astype(np.int64)
    mus = poisson_means(m, panel.dt)
    arrs = cell_inputs(m, x, y, k, l)
    print(f"{args.intervals} intervals, mean counts {k.mean():.1f}, {l.mean():.1f}")

    t_np, v_np = best_of(lambda: kernels.cell_loglik_numpy(k, l, *mus, *arrs), args.repeat)
    print(f"numpy : {t_np * 1e3:9.2f} ms")
    if not kernels.HAVE_NUMBA:
        print("numba : not installed")
        return
    kernels.cell_loglik_numba(k[:1], l[:1], *mus, *(a[:1] for a in arrs))  # compile outside the timing
    t_nb, v_nb = best_of(lambda: kernels.cell_loglik_numba(k, l, *mus, *arrs), args.repeat)
    print(f"numba : {t_nb * 1e3:9.2f} ms   speed-up x{t_np / t_nb:.1f}")
    print(f"max |numba - numpy| = {np.max(np.abs(v_nb - v_np)):.3e}")


if __name__ == "__main__":
    main()
