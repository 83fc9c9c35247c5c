"""Time the hot kernels under the compiled and the python backends.

    python benchmarks/bench_kernels.py --n 10000 --dim 10 --repeats 3
"""

import argparse
import statistics
import sys
import time

import numpy as np

from ultrafit import kernels
from ultrafit.afn import AfnParams, initialize
from ultrafit.cutweights import CwParams, approximate_cut_weights
from ultrafit.dataset import estimate_scale_range, generate_uniform
from ultrafit.kt import harvest_edges, prim_mst
from ultrafit.lsh import calibrate, hash_directions


def timed(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(n, dim, seed):
    ps = generate_uniform(n, dim, seed)
    scale = estimate_scale_range(ps)
    lsh = calibrate(n, 2.5)
    hashes = [hash_directions(seed, r, lsh.concat_k, dim) for r in range(8)]
    radius = scale.r_min * 8

    def harvester_rounds():
        h = kernels.Harvester(ps.coords)
        for dirs, offs in hashes:
            h.run(dirs, offs, 4.0 * radius, 2.5 * radius)

    small = generate_uniform(min(n, 4000), dim, seed)
    tree = prim_mst(small)
    afn = AfnParams.for_size(small.n, 3.0, seed)

    def afn_queries():
        st = initialize(small, afn)
        h = st.find(0)
        for x in range(1, 500):
            h = st.merge(h, st.find(x))
        st.query_batch(h, np.arange(500, small.n))

    u = np.random.default_rng(seed).integers(0, n, size=4 * n).astype(np.int64)
    v = np.random.default_rng(seed + 1).integers(0, n, size=4 * n).astype(np.int64)

    return {
        "harvester (8 rounds)": harvester_rounds,
        "kruskal_select (4n edges)": lambda: kernels.kruskal_select(u, v, n),
        "afn merge + batch query": afn_queries,
        f"approximate cut weights (n={small.n})": lambda: approximate_cut_weights(
            small, tree, CwParams(3.0, "strict"), afn
        ),
        "harvest_edges gamma=3": lambda: harvest_edges(ps, 3.0, scale),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10000)
    ap.add_argument("--dim", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled kernels are not built; only the python backend is available", file=sys.stderr)
    prev = kernels.backend()
    table = {}
    try:
        for name in backends:
            kernels.use_backend(name)
            for label, fn in cases(args.n, args.dim, args.seed).items():
                table.setdefault(label, {})[name] = timed(fn, args.repeats)
    finally:
        kernels.use_backend(prev)
    width = max(map(len, table))
    print(f"{'kernel':<{width}}  " + "  ".join(f"{b:>10}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, row in table.items():
        cells = "  ".join(f"{row[b]:>9.3f}s" for b in backends)
        extra = f"  {row['python'] / row['compiled']:>9.1f}x" if len(backends) > 1 else ""
        print(f"{label:<{width}}  {cells}{extra}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
