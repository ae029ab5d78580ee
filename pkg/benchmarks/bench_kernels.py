"""Benchmark the numba-compiled kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py
The numpy path is what you get with SPARSEMETA_NO_NUMBA=1.
"""

import time

import numpy as np

from sparsemeta import _kernels
from sparsemeta.data import crins_death
from sparsemeta.model import _prior_args, pack_counts
from sparsemeta.priors import default_priors


def time_call(fn, *args, repeat=5, number=2000):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for _ in range(number):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / number)
    return best


def main():
    r0, n0, r1, n1, lch = pack_counts(crins_death())
    prior = _prior_args(default_priors())
    rng = np.random.default_rng(0)
    pos = rng.normal(0.0, 1.0, 10)
    pos[-1] = -1.0
    mom = rng.normal(0.0, 1.0, 10)
    inv_mass = np.ones(10)
    lp0, _ = _kernels.numpy_backend.logpost_and_grad(pos, r0, n0, r1, n1, lch, *prior)
    h0 = -lp0 + 0.5 * float(mom @ mom)

    backends = [("numpy", _kernels.numpy_backend)]
    if _kernels.numba_backend is not None:
        # trigger compilation outside the timed region
        _kernels.numba_backend.logpost_and_grad(pos, r0, n0, r1, n1, lch, *prior)
        _kernels.numba_backend.trajectory(
            pos, mom, inv_mass, 0.1, 32, h0, 1000.0, r0, n0, r1, n1, lch, *prior
        )
        backends.append(("numba", _kernels.numba_backend))
    else:
        print("numba backend unavailable (SPARSEMETA_NO_NUMBA set or numba missing)")

    results = {}
    for name, backend in backends:
        t_grad = time_call(
            backend.logpost_and_grad, pos, r0, n0, r1, n1, lch, *prior
        )
        t_traj = time_call(
            backend.trajectory,
            pos, mom, inv_mass, 0.1, 32, h0, 1000.0, r0, n0, r1, n1, lch, *prior,
            number=500,
        )
        results[name] = (t_grad, t_traj)
        print(f"{name:>6}: logpost+grad {t_grad * 1e6:8.2f} us   32-step trajectory {t_traj * 1e6:8.2f} us")

    if len(results) == 2:
        g_np, tr_np = results["numpy"]
        g_nb, tr_nb = results["numba"]
        print(f"speedup: logpost+grad {g_np / g_nb:5.1f}x   trajectory {tr_np / tr_nb:5.1f}x")
        a = _kernels.numpy_backend.logpost_and_grad(pos, r0, n0, r1, n1, lch, *prior)
        b = _kernels.numba_backend.logpost_and_grad(pos, r0, n0, r1, n1, lch, *prior)
        print(f"agreement: |dlogp| = {abs(a[0] - b[0]):.2e}, "
              f"max |dgrad| = {np.max(np.abs(a[1] - b[1])):.2e}")


if __name__ == "__main__":
    main()
