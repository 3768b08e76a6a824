"""Ground-truth solvers used to verify the engine.

`classic_cbs` is conflict-based search over an effectively unbounded
horizon (``|V| + N`` steps, safely above any optimal makespan at desk
scale) and yields the optimal sum of costs.  `brute_force_joint` is dynamic
programming over joint configurations for tiny instances; it shares no code
path with the tree search, which is what makes it a usable oracle.
Both are allowed to be orders of magnitude slower than the engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .engine import SearchConfig, _Search
from .instance_io import DistanceFieldCache, Instance
from .model import JointTrajectory, State, find_conflict


class OracleTimeout(RuntimeError):
    """Node limit hit before the oracle could finish; tests skip, not pass."""


class OracleInfeasible(RuntimeError):
    """The instance has no collision-free solution."""


@dataclass(frozen=True)
class OracleSolution:
    joint: JointTrajectory  # trimmed to the makespan, goal-parked at the end
    soc: int
    makespan: int


def classic_cbs(
    instance: Instance,
    node_limit: int = 500_000,
    fields: DistanceFieldCache | None = None,
) -> OracleSolution:
    """Optimal-SOC solution via full-horizon conflict-based search."""
    horizon = instance.graph.n_vertices + instance.n_agents
    state = State(
        agents=tuple(a.id for a in sorted(instance.agents, key=lambda a: a.id)),
        positions=tuple(
            a.start for a in sorted(instance.agents, key=lambda a: a.id)
        ),
    )
    config = SearchConfig(h_max=horizon, expansion_budget=node_limit)
    search = _Search(instance, state, horizon, fields)
    outcome = search.run(horizon, False, config)
    if outcome.status == "interrupted":
        raise OracleTimeout(f"no solution within {node_limit} expansions")
    if outcome.status == "exhausted":
        raise OracleInfeasible("constraint tree exhausted: unsolvable instance")
    joint = outcome.node.joint()
    goals = {a.id: a.goal for a in instance.agents}
    paths = joint.stacked()
    makespan = 0
    for r, agent in enumerate(joint.agents):
        off = np.flatnonzero(paths[r] != goals[agent])
        if off.size:
            if off[-1] + 1 > horizon or paths[r, horizon] != goals[agent]:
                # The cheapest conflict-free plan leaves an agent off its
                # goal even with |V| + N steps of room: there is no
                # goal-parking solution to find.
                raise OracleInfeasible(
                    "optimum does not park all agents: unsolvable instance"
                )
            makespan = max(makespan, int(off[-1]) + 1)
    trimmed = JointTrajectory(
        joint.agents, tuple(p[: makespan + 1].copy() for p in joint.paths)
    )
    assert find_conflict(joint, joint.steps) is None
    return OracleSolution(joint=trimmed, soc=outcome.node.cost, makespan=makespan)


def brute_force_joint(
    instance: Instance, h: int
) -> tuple[JointTrajectory, int] | None:
    """Exhaustive minimum-cost conflict-free joint plan reaching all goals.

    Sweeps every joint configuration layer by layer, so it covers exactly
    the set of collision-free joint walks of length ``h`` that end with all
    agents parked on their goals; returns ``None`` when no such walk
    exists.  Guarded to tiny inputs: at most 3 agents, 16 vertices, 6 steps.
    """
    graph = instance.graph
    n = instance.n_agents
    if n > 3 or graph.n_vertices > 16 or h > 6:
        raise ValueError("brute force guard: needs N<=3, |V|<=16, H<=6")
    agents = sorted(instance.agents, key=lambda a: a.id)
    goals = tuple(a.goal for a in agents)
    start = tuple(a.start for a in agents)
    nbrs_of = {v: graph.neighbors(v) for v in graph.vertices}

    def stage(cfg: tuple[int, ...]) -> int:
        return sum(1 for v, g in zip(cfg, goals) if v != g)

    layers: list[dict[tuple[int, ...], tuple[int, tuple[int, ...] | None]]] = [
        {start: (0, None)}
    ]
    for _ in range(h):
        prev = layers[-1]
        nxt: dict[tuple[int, ...], tuple[int, tuple[int, ...] | None]] = {}
        for cfg in sorted(prev):
            g = prev[cfg][0] + stage(cfg)
            for move in product(*(nbrs_of[v] for v in cfg)):
                if len(set(move)) != n:
                    continue  # vertex collision
                if any(
                    move[i] == cfg[j] and move[j] == cfg[i]
                    for i in range(n)
                    for j in range(i + 1, n)
                ):
                    continue  # swap
                old = nxt.get(move)
                if old is None or g < old[0]:
                    nxt[move] = (g, cfg)
        layers.append(nxt)
    final = layers[-1].get(goals)
    if final is None:
        return None
    cost = final[0]
    # walk parents back to the start
    cfgs = [goals]
    for t in range(h, 0, -1):
        cfgs.append(layers[t][cfgs[-1]][1])
    cfgs.reverse()
    paths = tuple(
        np.asarray([cfg[i] for cfg in cfgs], dtype=np.int32) for i in range(n)
    )
    joint = JointTrajectory(tuple(a.id for a in agents), paths)
    assert cost == sum(_soc_of_path(paths[i], goals[i]) for i in range(n))
    return joint, cost


def _soc_of_path(path: np.ndarray, goal: int) -> int:
    return int(np.sum(path[:-1] != goal))


def load_solution_fixtures(path) -> dict[tuple[str, str, int], tuple[int, int]]:
    """Read cached ground-truth records: one tab-separated line per
    instance, ``map_id scen_id n soc makespan``."""
    out: dict[tuple[str, str, int], tuple[int, int]] = {}
    try:
        with open(path, encoding="ascii") as fh:
            for line in fh:
                if not line.strip():
                    continue
                map_id, scen_id, n, soc, makespan = line.split("\t")
                out[(map_id, scen_id, int(n))] = (int(soc), int(makespan))
    except FileNotFoundError:
        pass
    return out


def append_solution_fixture(path, map_id: str, scen_id: str, n: int,
                            soc: int, makespan: int) -> None:
    with open(path, "a", encoding="ascii") as fh:
        fh.write(f"{map_id}\t{scen_id}\t{n}\t{soc}\t{makespan}\n")
