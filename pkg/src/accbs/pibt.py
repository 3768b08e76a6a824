"""One-step priority-based planning (priority inheritance with backtracking).

Used when the search budget runs out before any incumbent exists, and as a
standalone baseline controller.  Sub-optimal but always returns a valid
collision-free joint move in one pass over the agents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .instance_io import DistanceFieldCache, Instance
from .model import CostModel, MovementCommand, State


@dataclass
class PriorityTable:
    """Dynamic priorities: steps since the agent last stood on its goal,
    with the agent id breaking ties (lower id wins)."""

    elapsed: dict[int, int] = field(default_factory=dict)

    @classmethod
    def fresh(cls, agents) -> "PriorityTable":
        return cls({a: 0 for a in agents})

    def order(self, agents) -> list[int]:
        return sorted(agents, key=lambda a: (-self.elapsed.get(a, 0), a))

    def update(self, state: State, goals: dict[int, int]) -> None:
        for a, v in zip(state.agents, state.positions):
            if v == goals[a]:
                self.elapsed[a] = 0
            else:
                self.elapsed[a] = self.elapsed.get(a, 0) + 1


def pibt_step(
    instance: Instance,
    state: State,
    priorities: PriorityTable | None = None,
    rng=None,
    fields: DistanceFieldCache | None = None,
) -> MovementCommand:
    """One collision-free joint move.

    Each agent, highest priority first, requests its best neighbor by goal
    distance (ties to the lower vertex id); an occupied request passes the
    priority down to the occupant, and a refused request backtracks to the
    next candidate.  ``rng`` is accepted for interface symmetry but the
    default tie-breaking is fully deterministic.
    """
    if priorities is None:
        priorities = PriorityTable.fresh(state.agents)
    graph = instance.graph
    model = CostModel(graph, {a.id: a.goal for a in instance.agents}, fields)
    current = dict(zip(state.agents, state.positions))
    occupied_now = {v: a for a, v in current.items()}
    nxt: dict[int, int] = {}
    reserved: dict[int, int] = {}  # vertex -> agent holding it for t+1

    def plan(i: int) -> bool:
        gamma = model.gamma(i)
        cands = sorted(
            graph.neighbors(current[i]), key=lambda v: (int(gamma[v]), v)
        )
        for v in cands:
            if v in reserved:
                continue
            j = occupied_now.get(v)
            if j is not None and nxt.get(j) == current[i]:
                continue  # would swap
            nxt[i] = v
            reserved[v] = i
            if j is not None and j != i and j not in nxt and not plan(j):
                continue  # j refused and claimed its own cell instead
            return True
        nxt[i] = current[i]
        reserved[current[i]] = i
        return False

    for i in priorities.order(state.agents):
        if i not in nxt:
            plan(i)

    moves = {a: (current[a], nxt[a]) for a in state.agents}
    _check_collision_free(moves)
    return MovementCommand(moves)


def _check_collision_free(moves: dict[int, tuple[int, int]]) -> None:
    targets: dict[int, int] = {}
    for a, (u, v) in moves.items():
        if v in targets:
            raise AssertionError(f"agents {targets[v]} and {a} both target {v}")
        targets[v] = a
    for a, (u, v) in moves.items():
        if u != v:
            b = targets.get(u)
            if b is not None and b != a and moves[b][0] == v:
                raise AssertionError(f"agents {a} and {b} swap across ({u}, {v})")
