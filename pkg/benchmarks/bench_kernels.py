"""Time the numba kernels against their numpy twins, plus one end-to-end fit per backend.

Usage: python3 benchmarks/bench_kernels.py [--repeat 20]

The end-to-end timings run in subprocesses because the backend is chosen
once at import time from TREEPLASSO_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from treeplasso import kernels
from treeplasso._accel import HAVE_NUMBA


def best_of(fn, repeat):
    fn()  # warm-up (JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    N, p, K = 100, 500, 4
    k1 = K + 1
    flat = rng.standard_normal((N, p * k1))
    B = rng.standard_normal((p, k1)) * 0.1
    A = rng.standard_normal((p * k1, k1))
    Minv = np.ascontiguousarray(np.einsum("jab,jcb->jac", A.reshape(p, k1, k1), A.reshape(p, k1, k1)) + np.eye(k1))
    aux = rng.standard_normal((p, k1))
    resid = rng.standard_normal(N)
    R = rng.standard_normal((p * 2 * k1, k1))
    t_rows = np.full(R.shape[0], 0.5)
    x = rng.standard_normal(p * K * 6)
    A3 = rng.standard_normal((p, k1, 24))
    starts = np.array([0, 6, 12, 18, 0, 12, 0], dtype=np.int64)
    ends = np.array([6, 12, 18, 24, 12, 24, 24], dtype=np.int64)
    t_groups = np.full(len(starts), 0.3)
    return {
        "soft_threshold_array": (
            lambda: kernels.soft_threshold_array_numpy(x, 0.5),
            lambda: kernels.soft_threshold_array_numba(x, 0.5),
        ),
        "group_shrink_rows": (
            lambda: kernels.group_shrink_rows_numpy(R, t_rows),
            lambda: kernels.group_shrink_rows_numba(R, t_rows),
        ),
        "block_shrink": (
            lambda: kernels.block_shrink_numpy(A3, starts, ends, t_groups),
            lambda: kernels.block_shrink_numba(A3, starts, ends, t_groups),
        ),
        "pliable_sweep": (
            lambda: kernels.pliable_sweep_numpy(flat, resid.copy(), B.copy(), Minv, aux, float(N)),
            lambda: kernels.pliable_sweep_numba(flat, resid.copy(), B.copy(), Minv, aux, float(N)),
        ),
    }


_FIT_SNIPPET = """
import time
from treeplasso import PathSpec, SimConfig, Standardizer, fit_path, simulate, KERNEL_BACKEND
sim = simulate(SimConfig("single", p=50, seed=0, test_N=0))
d = Standardizer.fit(sim.train).transform(sim.train)
fit_path(d, PathSpec(n_lambda=5))  # warm-up
t0 = time.perf_counter()
fit_path(d, PathSpec(n_lambda=30))
print(KERNEL_BACKEND, time.perf_counter() - t0)
"""


def end_to_end(flag):
    env = dict(os.environ, TREEPLASSO_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", _FIT_SNIPPET], env=env, capture_output=True, text=True, check=True)
    name, secs = out.stdout.split()
    return name, float(secs)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--no-fit", action="store_true", help="skip the end-to-end path timings")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 0
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, (f_np, f_nb) in kernel_cases(rng).items():
        a, b = best_of(f_np, args.repeat), best_of(f_nb, args.repeat)
        print(f"{name:<22}{a * 1e3:>12.3f}{b * 1e3:>12.3f}{a / b:>10.1f}")
    if not args.no_fit:
        res = dict(end_to_end(flag) for flag in ("0", "1"))
        print(f"\nsingle-response path (p=50, 30 lambdas): numpy {res['numpy']:.2f}s, numba {res['numba']:.2f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
