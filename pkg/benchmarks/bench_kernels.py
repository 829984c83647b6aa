"""Time the compiled leapfrog kernel against the NumPy fallback.

Usage::

    python benchmarks/bench_kernels.py --p 3.5 --h 0.0009765625 --repeat 3
"""

import argparse
import statistics
import time

import numpy as np

from radwave import GridSpec, InitialDataSpec, evolve_forward
from radwave import kernels


def time_backend(backend, data, spec, p, repeat, store_every):
    times, field = [], None
    for _ in range(repeat):
        start = time.perf_counter()
        field = evolve_forward(data, spec, p, backend=backend, store_every=store_every).field
        times.append(time.perf_counter() - start)
    return statistics.median(times), field


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--p", type=float, default=3.0)
    parser.add_argument("--h", type=float, default=1 / 256)
    parser.add_argument("--t-end", type=float, default=5.5)
    parser.add_argument("--lam", type=float, default=0.9)
    parser.add_argument("--rho", type=float, default=0.25, help="support radius of the bump")
    parser.add_argument("--store-every", type=int, default=16)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    data = InitialDataSpec(10.0, args.rho)
    r_max = float(np.ceil(data.support_radius + args.t_end - 1.0))
    spec = GridSpec(1.0, args.t_end, r_max, args.h, args.lam)
    print(f"grid: {spec.steps} steps x {spec.n_r} nodes, p={args.p}, default backend {kernels.BACKEND}")

    results = {}
    for backend in ("python", "cython"):
        try:
            results[backend] = time_backend(backend, data, spec, args.p, args.repeat, args.store_every)
        except ImportError:
            print(f"{backend:>7}: not available")
            continue
        seconds = results[backend][0]
        rate = spec.steps * spec.n_r / seconds / 1e6
        print(f"{backend:>7}: {seconds:8.3f} s  ({rate:6.1f} M node-updates/s)")

    if len(results) == 2:
        (tp, fp), (tc, fc) = results["python"], results["cython"]
        same = np.array_equal(fp.values, fc.values) and np.array_equal(fp.rates, fc.rates)
        print(f"speedup: {tp / tc:.1f}x, bitwise identical: {same}")


if __name__ == "__main__":
    main()
