#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Runs each kernel on realistic inputs and one full control step through the
engine, once per backend, and prints a speedup table.  Results are
identical between backends (the parity test suite asserts this); only
speed differs.

Usage: python benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import random
import time
from pathlib import Path

import numpy as np

from accbs import _kernels_py
from accbs import kernels as kernels_mod
from accbs.engine import SearchConfig, accbs_step
from accbs.instance_io import (
    DistanceFieldCache,
    Instance,
    build_graph,
    parse_map,
    sample_agents,
)
from accbs.model import State

try:
    from accbs import _kernels_cy
except ImportError:
    _kernels_cy = None

ROOT = Path(__file__).resolve().parents[1]
KERNEL_NAMES = (
    "bfs_distance_field", "plan_trajectory", "path_cost",
    "find_first_conflict", "count_conflicts",
)


def swap_backend(impl):
    for name in KERNEL_NAMES:
        setattr(kernels_mod, name, getattr(impl, name))


def bench(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    graph = build_graph(
        parse_map((ROOT / "data/maps/random-32-32-10.map").read_text())
    )
    agents = sample_agents(graph, 100, random.Random("agents:1"))
    inst = Instance(graph=graph, agents=agents)
    state = State(tuple(a.id for a in agents), tuple(a.start for a in agents))
    fields = DistanceFieldCache(graph)
    goal = agents[0].goal
    gamma = fields.field(goal).dist
    paths = np.ascontiguousarray(np.vstack([
        _kernels_py.plan_trajectory(
            graph.indptr, graph.nbrs, fields.field(a.goal).dist, a.start,
            16, 0, frozenset(), frozenset())
        for a in agents
    ]))
    vset = frozenset({5 * graph.n_cells + goal, 9 * graph.n_cells + goal + 1})

    cases = {
        "bfs_distance_field (1024 cells)": lambda impl: [
            impl.bfs_distance_field(graph.indptr, graph.nbrs, goal,
                                    graph.n_cells)
            for _ in range(200)
        ],
        "plan_trajectory (h=16, 2 constraints)": lambda impl: [
            impl.plan_trajectory(graph.indptr, graph.nbrs, gamma,
                                 agents[0].start, 16, 9, vset, frozenset())
            for _ in range(2000)
        ],
        "find_first_conflict (100x17)": lambda impl: [
            impl.find_first_conflict(paths, 16, graph.n_cells)
            for _ in range(2000)
        ],
        "count_conflicts (100x17)": lambda impl: [
            impl.count_conflicts(paths, 16, graph.n_cells)
            for _ in range(2000)
        ],
    }

    def engine_step():
        cfg = SearchConfig(h_max=16, expansion_budget=3000)
        accbs_step(inst, state, cfg, fields=DistanceFieldCache(graph))

    backends = [("pure", _kernels_py)]
    if _kernels_cy is not None:
        backends.append(("compiled", _kernels_cy))

    print(f"{'benchmark':<44}" + "".join(f"{n:>12}" for n, _ in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    rows = list(cases.items()) + [("accbs step (N=100, 3000 expansions)", None)]
    for label, case in rows:
        times = []
        for _, impl in backends:
            swap_backend(impl)
            if case is None:
                times.append(bench(engine_step, args.repeats))
            else:
                times.append(bench(lambda: case(impl), args.repeats))
        line = f"{label:<44}"
        for t in times:
            line += f"{t * 1000:>10.1f}ms"
        if len(times) == 2:
            line += f"{times[0] / times[1]:>11.1f}x"
        print(line)
    swap_backend(_kernels_cy if _kernels_cy is not None else _kernels_py)


if __name__ == "__main__":
    main()
