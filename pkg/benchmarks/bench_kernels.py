"""Time every hot kernel under each importable backend.

    python benchmarks/bench_kernels.py [--repeat N] [--size small|medium|large]

Prints one line per (kernel, backend) with the best wall time over the
repeats and the speed-up of the compiled backend over the numpy one.
Outputs of the two backends are compared before timing.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from wireid import kernels

SIZES = {"small": (300, 8), "medium": (1000, 12), "large": (3000, 16)}


def make_inputs(n_nodes: int, degree: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    counts = rng.integers(1, degree + 1, size=n_nodes)
    indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    nnz = int(indptr[-1])
    indices = rng.integers(0, n_nodes, size=nnz).astype(np.int64)
    data = rng.random(nnz)
    Y = rng.standard_normal((n_nodes, 16))
    G = rng.standard_normal((n_nodes, 16))
    t = np.cumsum(rng.random(20 * n_nodes))
    xs = np.cumsum(rng.standard_normal(len(t)))
    ys = np.cumsum(rng.standard_normal(len(t)))
    n_pairs = nnz
    pair_idx = rng.integers(0, n_pairs, size=3 * nnz).astype(np.int64)
    u = rng.standard_normal((n_nodes, 32))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return {
        "disc_runs": (xs, ys, 0.0, 0.0, 20.0),
        "segment_softmax": (data, indptr),
        "segment_softmax_backward": (data, rng.standard_normal(nnz), indptr),
        "spmm": (indptr, indices, data, Y),
        "spmm_t": (indptr, indices, data, G, n_nodes),
        "edge_dot": (indptr, indices, G, Y),
        "pair_histogram": (pair_idx, rng.random(len(pair_idx)), n_pairs, 30, 32),
        "union_components": (n_nodes, rng.integers(0, n_nodes, n_nodes // 2),
                             rng.integers(0, n_nodes, n_nodes // 2)),
        "batch_hard": (u[:256] @ u[:256].T, rng.integers(0, 32, 256)),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a), np.asarray(b), rtol=1e-12, atol=1e-12)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", choices=SIZES, default="medium")
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; timing numpy only", file=sys.stderr)
    inputs = make_inputs(*SIZES[args.size])
    print(f"{'kernel':26s} {'backend':8s} {'best ms':>10s} {'speed-up':>9s}")
    for name in kernels.NAMES:
        call_args = inputs[name]
        times = {}
        outs = {}
        for bname, mod in backends.items():
            fn = getattr(mod, name)
            outs[bname] = fn(*call_args)
            times[bname] = min(timeit.repeat(lambda: fn(*call_args), number=1, repeat=args.repeat))
        if len(outs) == 2 and not _same(outs["python"], outs["cython"]):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        for bname, t in times.items():
            ratio = times["python"] / t if bname != "python" else 1.0
            print(f"{name:26s} {bname:8s} {1e3 * t:10.3f} {ratio:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
