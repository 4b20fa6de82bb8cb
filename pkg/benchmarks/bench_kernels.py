"""Compare the numba kernels with the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``. The first table times each
kernel on a batch of fields; the second times a full 2-D ensemble run in a
fresh interpreter per backend, selected through ``DAMPEDNLS_BACKEND``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dampednls import kernels

END_TO_END = """
import time
import numpy as np
from dampednls import SimParams, build_noise, gaussian, make_grid
from dampednls.analysis import run_ensemble
g = make_grid(2, {n}, 20.0)
nz = build_noise(g, [((0, 0), 0.3), ((1, 0), 0.2), ((0, 1), 0.2)])
p = SimParams(lam=1.0, sigma={sigma}, alpha=-1, dt=1e-3, t_final=0.05, log_every=10)
run_ensemble(g, gaussian(g, 1.0, 1.0).to_physical().values, p, nz, 2, ("mass",))
t0 = time.perf_counter()
run_ensemble(g, gaussian(g, 1.0, 1.0).to_physical().values, p, nz, {paths}, ("mass",))
print(time.perf_counter() - t0)
"""


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(batch, n, repeat):
    rng = np.random.default_rng(0)
    base = rng.standard_normal((batch, n * n)) + 1j * rng.standard_normal((batch, n * n))
    rows = []
    for sigma in (1.0, 0.5, 0.75):
        cases = {
            f"phase_rotate sigma={sigma}": (
                lambda: kernels._phase_rotate_np(base.copy(), 0.01, sigma),
                lambda: kernels._phase_rotate_nb(base.copy(), 0.01, sigma),
            ),
        }
        rows.extend(cases.items())
    rows.append(("max_abs2", (lambda: kernels._max_abs2_np(base), lambda: kernels._max_abs2_nb(base))))
    rows.append(("abs_pow_sum p=4", (lambda: kernels._abs_pow_sum_np(base, 4.0),
                                      lambda: kernels._abs_pow_sum_nb(base, 4.0))))
    print(f"kernels on a ({batch}, {n}x{n}) batch, best of {repeat}")
    print(f"{'kernel':<28}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, (f_np, f_nb) in rows:
        f_nb()  # compile
        a, b = best_of(f_np, repeat), best_of(f_nb, repeat)
        print(f"{name:<28}{1e3 * a:>10.3f}{1e3 * b:>10.3f}{a / b:>9.2f}")


def end_to_end(n, paths, sigma):
    out = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, DAMPEDNLS_BACKEND=backend)
        code = END_TO_END.format(n=n, paths=paths, sigma=sigma)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[backend] = float(res.stdout.strip().splitlines()[-1])
    print(f"\nensemble of {paths} paths, {n}x{n} grid, 50 steps, sigma={sigma}")
    for k, v in out.items():
        print(f"  {k:<6} {v:.3f} s")
    print(f"  speedup {out['numpy'] / out['numba']:.2f}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--paths", type=int, default=32)
    args = ap.parse_args(argv)
    if kernels.BACKEND != "numba":
        sys.exit("numba backend unavailable; unset DAMPEDNLS_BACKEND to benchmark")
    kernel_table(args.batch, args.n, args.repeat)
    for sigma in (1.0, 0.75):
        end_to_end(args.n, args.paths, sigma)


if __name__ == "__main__":
    main()
