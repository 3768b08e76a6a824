"""Closed-loop state/command types, fixed-horizon trajectories, constraints,
conflicts, and the cost machinery shared by the planners.

Costs are exact integers throughout: one unit per step an agent spends off
its goal, plus the goal distance of the trajectory's final vertex as the
terminal estimate.  This keeps tie handling and episode logs bit-for-bit
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, Union

import numpy as np

from . import kernels
from .instance_io import DistanceFieldCache, Graph

VERTEX = "vertex"
EDGE = "edge"

Location = Union[int, tuple[int, int]]


@dataclass(frozen=True)
class State:
    """Positions of all agents at one time step; agents never share a cell."""

    agents: tuple[int, ...]
    positions: tuple[int, ...]
    time: int = 0

    def __post_init__(self):
        if len(self.agents) != len(self.positions):
            raise ValueError("agents and positions differ in length")
        if len(set(self.positions)) != len(self.positions):
            raise ValueError("two agents share a vertex")

    def position(self, agent: int) -> int:
        return self.positions[self.agents.index(agent)]

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.agents, self.positions))


@dataclass(frozen=True)
class MovementCommand:
    """One directed edge per agent; a self-loop means wait."""

    moves: dict[int, tuple[int, int]]

    def all_waits(self) -> bool:
        return all(u == v for u, v in self.moves.values())

    def targets(self) -> dict[int, int]:
        return {a: edge[1] for a, edge in self.moves.items()}


@dataclass(frozen=True)
class Constraint:
    """Prohibition for one agent: a vertex at a time, or a directed edge
    traversed between ``time`` and ``time + 1``."""

    kind: Literal["vertex", "edge"]
    agent: int
    time: int
    loc: Location

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("constraint time must be non-negative")
        if self.kind == VERTEX and not isinstance(self.loc, int):
            raise ValueError("vertex constraint needs a vertex location")
        if self.kind == EDGE and (
            not isinstance(self.loc, tuple) or len(self.loc) != 2
        ):
            raise ValueError("edge constraint needs a (u, w) location")

    @property
    def binding_time(self) -> int:
        """Largest trajectory index this constraint can affect."""
        return self.time if self.kind == VERTEX else self.time + 1


@dataclass(frozen=True)
class Conflict:
    kind: Literal["vertex", "edge"]
    agents: tuple[int, int]
    time: int
    loc: Location  # shared vertex, or the edge as traversed by agents[0]


@dataclass(frozen=True)
class Trajectory:
    agent: int
    vertices: np.ndarray  # int32, length H + 1

    @property
    def steps(self) -> int:
        return len(self.vertices) - 1

    def validate(self, graph: Graph, start: int | None = None) -> None:
        if start is not None and self.vertices[0] != start:
            raise ValueError("trajectory does not begin at the agent position")
        for a, b in zip(self.vertices, self.vertices[1:]):
            if not graph.has_edge(int(a), int(b)):
                raise ValueError(f"({a}, {b}) is not a graph edge")


class JointTrajectory:
    """Equal-length trajectories for all agents, rows ordered by agent id."""

    __slots__ = ("agents", "paths", "_stacked")

    def __init__(self, agents: tuple[int, ...], paths: tuple[np.ndarray, ...]):
        if list(agents) != sorted(agents):
            raise ValueError("agents must be sorted ascending")
        steps = {len(p) for p in paths}
        if len(steps) > 1:
            raise ValueError("trajectories must share one length")
        self.agents = agents
        self.paths = paths
        self._stacked = None

    @property
    def steps(self) -> int:
        return len(self.paths[0]) - 1

    def trajectory(self, agent: int) -> Trajectory:
        return Trajectory(agent, self.paths[self.agents.index(agent)])

    def stacked(self) -> np.ndarray:
        if self._stacked is None:
            self._stacked = np.ascontiguousarray(np.vstack(self.paths))
        return self._stacked

    def first_step(self) -> MovementCommand:
        return MovementCommand(
            {a: (int(p[0]), int(p[1])) for a, p in zip(self.agents, self.paths)}
        )


class CostModel:
    """Per-agent goals with shared distance fields (the terminal estimate)."""

    def __init__(self, graph: Graph, goals: dict[int, int],
                 fields: DistanceFieldCache | None = None):
        self.graph = graph
        self.goals = dict(goals)
        self.fields = fields if fields is not None else DistanceFieldCache(graph)

    def goal(self, agent: int) -> int:
        return self.goals[agent]

    def gamma(self, agent: int) -> np.ndarray:
        return self.fields.field(self.goals[agent]).dist

    def distance(self, agent: int, v: int) -> int:
        return int(self.gamma(agent)[v])

    def step_cost(self, agent: int, v: int) -> int:
        return 0 if v == self.goals[agent] else 1

    def lower_bound(self, state: State) -> int:
        """Sum of goal distances: no plan from ``state`` can cost less."""
        return sum(self.distance(a, v) for a, v in zip(state.agents, state.positions))


def trajectory_cost(traj: Trajectory, model: CostModel) -> int:
    """Off-goal steps over the horizon plus the terminal goal distance."""
    goal = model.goal(traj.agent)
    cost = kernels.path_cost(traj.vertices, model.gamma(traj.agent),
                             goal, traj.steps)
    if cost < 0:
        raise ValueError(
            f"agent {traj.agent} ends where its goal is unreachable"
        )
    return cost


def prefix_cost(joint: JointTrajectory, model: CostModel, h: int) -> int:
    """Joint cost as if the horizon ended at step ``h``."""
    if not 1 <= h <= joint.steps:
        raise ValueError(f"h={h} outside [1, {joint.steps}]")
    total = 0
    for agent, path in zip(joint.agents, joint.paths):
        c = kernels.path_cost(path, model.gamma(agent), model.goal(agent), h)
        if c < 0:
            raise ValueError(f"agent {agent} prefix ends unreachable from goal")
        total += c
    return total


def find_conflict(joint: JointTrajectory, horizon: int) -> Conflict | None:
    """Earliest conflict within the active prefix ``[0, horizon]``.

    Vertex conflicts beat edge conflicts at the same time; remaining ties go
    to the lexicographically smallest agent pair.  Edge conflicts are strict
    swaps and are reported at the time the transition ends.
    """
    if not 1 <= horizon <= joint.steps:
        raise ValueError(f"horizon={horizon} outside [1, {joint.steps}]")
    paths = joint.stacked()
    hit = kernels.find_first_conflict(paths, horizon, int(paths.max()) + 1)
    if hit is None:
        return None
    kind, i, j, t, a, b = hit
    agents = (joint.agents[i], joint.agents[j])
    if kind == 0:
        return Conflict(VERTEX, agents, t, a)
    return Conflict(EDGE, agents, t, (a, b))


def find_all_conflicts(joint: JointTrajectory, horizon: int) -> list[Conflict]:
    """Every conflicting (pair, time) incidence in the prefix, scan order."""
    paths = joint.stacked()
    n = paths.shape[0]
    out: list[Conflict] = []
    for t in range(horizon + 1):
        seen: dict[int, int] = {}
        for j in range(n):
            v = int(paths[j, t])
            if v in seen:
                out.append(
                    Conflict(VERTEX, (joint.agents[seen[v]], joint.agents[j]), t, v)
                )
            else:
                seen[v] = j
        if t == 0:
            continue
        moves: dict[tuple[int, int], int] = {}
        for j in range(n):
            u, w = int(paths[j, t - 1]), int(paths[j, t])
            if u != w:
                i = moves.get((w, u))
                if i is not None:
                    out.append(
                        Conflict(EDGE, (joint.agents[i], joint.agents[j]), t, (w, u))
                    )
                moves[(u, w)] = j
    return out


def count_conflicts(joint: JointTrajectory, horizon: int) -> int:
    paths = joint.stacked()
    return kernels.count_conflicts(paths, horizon, int(paths.max()) + 1)


def satisfies(traj: Trajectory, constraints: Iterable[Constraint]) -> bool:
    """True iff no vertex or directed-edge prohibition matches the path."""
    path = traj.vertices
    h = traj.steps
    for c in constraints:
        if c.agent != traj.agent:
            continue
        if c.kind == VERTEX:
            if c.time <= h and path[c.time] == c.loc:
                return False
        else:
            if c.time < h and (int(path[c.time]), int(path[c.time + 1])) == c.loc:
                return False
    return True


def pack_constraints(
    constraints: Iterable[Constraint], agent: int, n_cells: int
) -> tuple[frozenset[int], frozenset[int], int]:
    """Split one agent's constraints into kernel key sets and the largest
    binding time index (0 when unconstrained)."""
    vkeys: set[int] = set()
    ekeys: set[int] = set()
    t_star = 0
    for c in constraints:
        if c.agent != agent:
            continue
        if c.kind == VERTEX:
            vkeys.add(c.time * n_cells + c.loc)
            if c.time > t_star:
                t_star = c.time
        else:
            u, w = c.loc
            ekeys.add((c.time * n_cells + u) * n_cells + w)
            if c.time + 1 > t_star:
                t_star = c.time + 1
    return frozenset(vkeys), frozenset(ekeys), t_star
