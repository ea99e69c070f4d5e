"""Compare the numba and numpy paths of the hot kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--size 1.0] [--json out.json]

Each kernel is warmed up once (so JIT compilation is excluded), then timed
``--repeat`` times; the best time is reported. Outputs of both paths are
checked for agreement before timing.
"""

import argparse
import json
import sys
import timeit

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from calabi_lab import _kernels as K
from calabi_lab.cantor import build_cantor_tree, rectangle
from calabi_lab.complexgrid import disc


def _mesh_graph(h):
    dom = disc(1.0, h)
    e = dom.edges()
    w = np.abs(dom.vertices[e[:, 0]] - dom.vertices[e[:, 1]])
    n = dom.n_vertices
    m = csr_matrix((np.r_[w, w], (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n))
    return m


def cases(size):
    h = 0.02 / np.sqrt(size)
    g = _mesh_graph(h)
    order, parent = breadth_first_order(g, 0, directed=False)
    parent = parent.astype(np.int64)
    parent[0] = 0
    order = order.astype(np.int64)
    incr = np.random.default_rng(0).normal(size=(3, g.shape[0]))
    boxes = build_cantor_tree(rectangle(0, 1, 0, 1), 0.2, 7).level_bboxes(7)
    J = int(10**6 * size)
    return {
        "radius_recurrence": ((1.0, J), lambda a, b: np.array_equal(a, b)),
        "tree_accumulate": ((order, parent, incr, np.zeros(3)), lambda a, b: np.array_equal(a, b)),
        "dijkstra": ((g.indptr, g.indices, g.data, 0), lambda a, b: np.allclose(a[0], b[0], rtol=1e-14)),
        "rect_overlap_count": (tuple(np.ascontiguousarray(boxes[:, k]) for k in range(4)),
                               lambda a, b: np.array_equal(a, b)),
    }, {"mesh_vertices": g.shape[0], "J": J, "boxes": len(boxes)}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=float, default=1.0, help="problem-size multiplier")
    ap.add_argument("--json", help="write results as JSON")
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba not installed; nothing to compare", file=sys.stderr)
        return 1
    table, sizes = cases(args.size)
    print(f"sizes: {sizes}")
    print(f"{'kernel':<20}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    rows = []
    for name, (inputs, same) in table.items():
        jit = getattr(K, f"{name}_jit")
        ref = getattr(K, f"{name}_numpy")
        if not same(jit(*inputs), ref(*inputs)):
            print(f"{name}: outputs differ", file=sys.stderr)
            return 2
        t_jit = min(timeit.repeat(lambda: jit(*inputs), number=1, repeat=args.repeat))
        t_ref = min(timeit.repeat(lambda: ref(*inputs), number=1, repeat=args.repeat))
        rows.append({"kernel": name, "numba_s": t_jit, "numpy_s": t_ref, "speedup": t_ref / t_jit})
        print(f"{name:<20}{1e3 * t_jit:>12.2f}{1e3 * t_ref:>12.2f}{t_ref / t_jit:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"sizes": sizes, "results": rows}, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
