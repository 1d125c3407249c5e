"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--size 256] [--repeat 3]

Each workload goes through the public API with the kernel functions swapped
for the chosen backend, so the numbers include the surrounding numpy work.
"""

import argparse
import timeit
import warnings

import numpy as np

from nucbend import kernels
from nucbend.bending import bending_loss
from nucbend.contour import DiagnosticWarning, trace_contours
from nucbend.imgcore import FloatMap, LabelMap
from nucbend.pipeline import hv_ground_truth, watershed_postprocess

NAMES = ("trace_boundary", "contour_energies", "flood")


def disc_grid(size, radius=9, spacing=16):
    """Rows of slightly overlapping discs, relabelled by Voronoi split."""
    yy, xx = np.mgrid[:size, :size]
    centres = [(y, x) for y in range(radius + 2, size - radius - 2, spacing)
               for x in range(radius + 2, size - radius - 2, spacing)]
    labels = np.zeros((size, size), dtype=np.int64)
    best = np.full((size, size), np.inf)
    for i, (cy, cx) in enumerate(centres, 1):
        d = np.hypot(yy - cy, xx - cx)
        take = (d <= radius) & (d < best)
        labels[take] = i
        best[take] = d[take]
    return LabelMap(labels)


def activate(module):
    for name in NAMES:
        setattr(kernels, name, getattr(module, name))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    warnings.simplefilter("ignore", DiagnosticWarning)

    labels = disc_grid(args.size)
    prob = FloatMap((labels.labels > 0).astype(np.float32))
    hv = hv_ground_truth(labels).all_nuclei
    workloads = {
        "trace": lambda: trace_contours(labels),
        "bending": lambda: bending_loss(labels),
        "watershed": lambda: watershed_postprocess(prob, hv),
    }

    backends = kernels.available_backends()
    saved = {name: getattr(kernels, name) for name in NAMES}
    timings = {}
    try:
        for backend, module in backends.items():
            activate(module)
            for work, fn in workloads.items():
                timings[backend, work] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)

    print(f"{args.size}x{args.size} map, {len(labels.instance_ids())} nuclei, best of {args.repeat}")
    print(f"{'workload':<10}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for work in workloads:
        row = f"{work:<10}" + "".join(f"{timings[b, work] * 1e3:>10.1f}ms" for b in backends)
        if "cython" in backends:
            row += f"{timings['python', work] / timings['cython', work]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
