#!/usr/bin/env python3
"""Benchmark the solver backends against each other.

Times the compiled kernel, the NumPy fallback, and the generic oracle path
on three structured least-squares workloads (tiny, medium, deblur-scale) and
prints iterations/second plus the speedup over the compiled path. Results
are verified to agree across backends before timing is reported.

Usage: python benchmarks/kernel_benchmark.py [--iters N]
"""

import argparse
import time

import numpy as np

from rbirg.core import make_schedule
from rbirg.imaging import GrayImage, apply_blur, gaussian_kernel, make_deblur_instance
from rbirg.problems import LeastSquaresInstance, least_squares_problem
from rbirg.solver import have_extension, run_rbirg


def tiny_workload():
    inst = LeastSquaresInstance(A=np.array([[1.0, 0.0], [0.0, 0.0]]),
                                b=np.array([1.0, 0.0]))
    return "rank-deficient 2-d (d=2)", least_squares_problem(inst, block_sizes=[1, 1])


def medium_workload():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(30, 20)) / 6.0
    inst = LeastSquaresInstance(A=A, b=A @ rng.normal(size=20))
    return "random 20-d (d=4)", least_squares_problem(inst, num_blocks=4)


def deblur_workload():
    rng = np.random.default_rng(3)
    truth = GrayImage(width=32, height=32, pixels=rng.uniform(size=(32, 32)))
    kernel = gaussian_kernel(5, 1.0)
    blurred = apply_blur(kernel, truth, "replicate")
    _, prob = make_deblur_instance(blurred, kernel, "replicate", num_blocks=16)
    return "deblur 32x32 (n=1024, d=16)", prob


def time_backend(prob, backend, iters):
    sched = make_schedule(0.5, 0.05, delta=0.25, r=0.5)
    start = time.perf_counter()
    trace = run_rbirg(prob, sched, iters, seed=1, checkpoints=[iters],
                      backend=backend)
    elapsed = time.perf_counter() - start
    return elapsed, trace.final.x_bar


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--iters", type=int, default=20_000,
                        help="iterations per run (default 20000)")
    args = parser.parse_args()

    backends = ["numpy", "generic"]
    if have_extension():
        backends.insert(0, "ext")
    else:
        print("note: compiled kernels unavailable; timing NumPy and generic only\n")

    for name, prob in (tiny_workload(), medium_workload(), deblur_workload()):
        print(f"{name}, {args.iters} iterations")
        results = {}
        for backend in backends:
            elapsed, x_bar = time_backend(prob, backend, args.iters)
            results[backend] = (elapsed, x_bar)
        ref = results[backends[0]][1]
        base = results[backends[0]][0]
        for backend in backends:
            elapsed, x_bar = results[backend]
            drift = np.linalg.norm(x_bar - ref) / max(1.0, np.linalg.norm(ref))
            print(f"  {backend:>8}: {elapsed:8.3f}s  "
                  f"{args.iters / elapsed:12.0f} it/s  "
                  f"x{base / elapsed:6.2f}  agreement {drift:.1e}")
        print()


if __name__ == "__main__":
    main()
