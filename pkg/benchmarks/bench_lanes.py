#!/usr/bin/env python3
"""Compare the numba kernel lane against the pure-numpy fallback.

Covers the three hot paths: the pair-selection scans of both greedy tree
builders and the fused product+sum table kernel.  The numba lane is warmed
up first so compilation time is excluded.  Select workloads and sizes with
the flags below; FACTORCUBE_USE_NUMBA only controls the default lane at
import time and is irrelevant here because lanes are switched explicitly.
"""

import argparse
import statistics
import time

import numpy as np

from factorcube import _kernels, costmodel, factoring, network
from factorcube.cli import net_seed


def timed(fn, repeats):
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best.append(time.perf_counter() - t0)
    return statistics.median(best)


def bench_builders(args):
    nets = []
    for i in range(args.nets):
        net, query = network.random_net(
            network.NetGenParams(
                node_count_range=(args.nodes, args.nodes),
                avg_arcs_range=(3.5, 5.0),
                obs_count_range=(1, 20),
                seed=net_seed(2024, i + 1),
            )
        )
        nets.append(factoring.scopes_for_query(net, query) + (query.query_var,))

    machine = costmodel.DEFAULT_MACHINE

    def run_s():
        for scopes, cards, _, q in nets:
            factoring.build_set_factoring(scopes, cards, q)

    def run_c():
        for scopes, cards, _, q in nets:
            factoring.build_set_factoring_c(scopes, cards, q, machine)

    sizes = [len(n[0]) for n in nets]
    print(f"tree builders: {args.nets} nets of {args.nodes} nodes, "
          f"{min(sizes)}-{max(sizes)} factors each")
    return {"set-factoring build": run_s, "set-factoring-c build": run_c}


def bench_product_sum(args):
    rng = np.random.default_rng(0)
    cases = []
    for u in args.dims:
        vars1 = tuple(range(u - 2))
        vars2 = tuple(range(2, u))
        union = tuple(range(u))
        cards = (2,) * u
        keep = union[: u // 2]
        t1 = rng.random(2 ** len(vars1))
        t2 = rng.random(2 ** len(vars2))
        cases.append((t1, vars1, t2, vars2, union, cards, keep))

    def run():
        for case in cases:
            _kernels.product_sum(*case)

    print(f"fused product+sum: union dimensions {list(args.dims)}")
    return {"product+sum": run}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nets", type=int, default=12)
    parser.add_argument("--nodes", type=int, default=120)
    parser.add_argument("--dims", type=int, nargs="+", default=[18, 20, 22])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    workloads = {}
    workloads.update(bench_builders(args))
    workloads.update(bench_product_sum(args))

    lanes = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])
    results = {}
    for lane in lanes:
        prev = _kernels.set_backend(lane)
        try:
            for name, fn in workloads.items():
                if lane == "numba":
                    fn()  # warm up / compile
                results[(name, lane)] = timed(fn, args.repeats)
        finally:
            _kernels.set_backend(prev)

    width = max(len(n) for n in workloads)
    print(f"\n{'workload'.ljust(width)}  {'numpy':>10}  {'numba':>10}  {'ratio':>7}")
    for name in workloads:
        np_t = results.get((name, "numpy"))
        nb_t = results.get((name, "numba"))
        if nb_t is None:
            print(f"{name.ljust(width)}  {np_t:>9.3f}s  {'-':>10}  {'-':>7}")
        else:
            print(f"{name.ljust(width)}  {np_t:>9.3f}s  {nb_t:>9.3f}s  "
                  f"{np_t / nb_t:>6.2f}x")


if __name__ == "__main__":
    main()
