"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Cases: backward recursion on a 2000-step node lattice, backward recursion
and forward path products on an 18-step path lattice.  The first numba call
(compilation or cache load) is excluded from the timings.
"""

import argparse
import time

import numpy as np

from csrisk import _kernels
from csrisk.lattice import LatticeModel


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    node = LatticeModel.build(1.0, 2000, "node")
    path = LatticeModel.build(1.0, 18, "path")
    out = []
    for name, model in (("backward node N=2000", node), ("backward path N=18", path)):
        p = rng.uniform(0.3, 0.7, model.size)
        scale = rng.uniform(0.9, 1.0, model.size)
        shift = rng.normal(size=model.size) * 1e-3
        terminal = rng.normal(size=model.n_states(model.N))

        def run(kernel, model=model, p=p, scale=scale, shift=shift, terminal=terminal):
            values = np.empty(model.size)
            model.at(values, model.N)[:] = terminal
            return kernel(values, p, scale, shift, model.N, 0, model.code)

        out.append((name, run, _kernels.backward_affine_numpy,
                    getattr(_kernels, "backward_affine_numba", None)))

    mult = rng.uniform(0.5, 1.5, path.size)
    add = rng.normal(size=path.size) * 1e-3

    def run_forward(kernel):
        res = np.empty(path.size)
        return kernel(res, np.ones(1), mult, mult[::-1].copy(), add, add, 0, path.N)

    out.append(("forward path N=18", run_forward, _kernels.forward_affine_numpy,
                getattr(_kernels, "forward_affine_numba", None)))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'case':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}  identical")
    for name, run, np_kernel, nb_kernel in cases(rng):
        t_np = _best(lambda: run(np_kernel), args.repeat)
        if nb_kernel is None:
            print(f"{name:<24}{t_np * 1e3:>12.2f}{'n/a':>12}")
            continue
        run(nb_kernel)  # compile or load from cache
        t_nb = _best(lambda: run(nb_kernel), args.repeat)
        same = np.array_equal(run(np_kernel), run(nb_kernel))
        print(f"{name:<24}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>10.1f}  {same}")


if __name__ == "__main__":
    main()
