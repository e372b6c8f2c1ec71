"""Timing comparison of the compiled and pure-numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeats 5] [--size 200]

Each hot kernel (thinning subiteration, bilinear field sampling, disc
stamping) is timed under both backends on identical inputs; the table
reports the best-of-N wall time per call and the speedup.
"""

import argparse
import timeit

import numpy as np

from roleengine._kernels import pure

try:
    from roleengine._kernels import _native as native
except ImportError:
    native = None


def bench_thin_pass(mod, size, rng):
    img = (rng.random((size, size)) < 0.6).astype(np.uint8)
    img = np.ascontiguousarray(np.pad(img, 1))

    def run():
        work = img.copy()
        mod.thin_pass(work, 0)
        mod.thin_pass(work, 1)

    return run


def bench_sample_bilinear(mod, size, rng):
    values = rng.normal(size=(size, size))
    pts = np.column_stack([rng.uniform(0, size * 0.05, 5000),
                           rng.uniform(0, size * 0.05, 5000)])
    return lambda: mod.sample_bilinear(values, pts, 0.05)


def bench_stamp_disc(mod, size, rng):
    field = rng.normal(size=(size, size))
    centers = rng.uniform(0.5, size * 0.05 - 0.5, (200, 2))

    def run():
        work = field.copy()
        for cx, cy in centers:
            mod.stamp_disc(work, cx, cy, 0.3, 0.05, 0.6)

    return run


BENCHES = [
    ("thin_pass", bench_thin_pass),
    ("sample_bilinear", bench_sample_bilinear),
    ("stamp_disc", bench_stamp_disc),
]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--number", type=int, default=20,
                        help="calls per timed repeat")
    parser.add_argument("--size", type=int, default=200,
                        help="grid side length in cells")
    args = parser.parse_args(argv)

    if native is None:
        print("compiled backend not built; timing pure backend only")

    print(f"{'kernel':<18}{'pure [ms]':>12}{'native [ms]':>14}{'speedup':>10}")
    for name, setup in BENCHES:
        times = {}
        for label, mod in (("pure", pure), ("native", native)):
            if mod is None:
                continue
            run = setup(mod, args.size, np.random.default_rng(0))
            best = min(timeit.repeat(run, number=args.number,
                                     repeat=args.repeats))
            times[label] = best / args.number * 1e3
        native_ms = times.get("native")
        speedup = (f"{times['pure'] / native_ms:.1f}x"
                   if native_ms else "-")
        print(f"{name:<18}{times['pure']:>12.3f}"
              f"{native_ms if native_ms is not None else float('nan'):>14.3f}"
              f"{speedup:>10}")


if __name__ == "__main__":
    main()
