"""Constrained single-agent planning over space-time.

`ind_plan` returns a minimum-cost fixed-length trajectory satisfying a set
of vertex/edge prohibitions.  Beyond the largest constrained time index the
returned trajectory always follows a shortest path to the goal and then
waits there; the whole engine leans on that suffix shape, because it makes
a node's cost the same number no matter where the active horizon ends.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from . import kernels
from .instance_io import Graph
from .model import (
    Constraint,
    CostModel,
    JointTrajectory,
    State,
    Trajectory,
    pack_constraints,
)


def _guard(graph: Graph, gamma: np.ndarray, h_max: int) -> None:
    if h_max < 1:
        raise ValueError("h_max must be >= 1")
    if h_max >= kernels.T_CAP or graph.n_cells >= kernels.V_CAP:
        raise ValueError("instance exceeds the packed search-key capacity")
    if h_max + int(gamma.max(initial=0)) >= kernels.F_CAP:
        raise ValueError("h_max plus map diameter exceeds key capacity")


def ind_plan(
    graph: Graph,
    model: CostModel,
    start: int,
    agent: int,
    h_max: int,
    constraints: Iterable[Constraint],
) -> Trajectory | None:
    """Cheapest ``h_max``-step trajectory for one agent, or ``None``.

    Absence is a value: an unsatisfiable constraint set simply prunes the
    search-tree branch that produced it.
    """
    gamma = model.gamma(agent)
    _guard(graph, gamma, h_max)
    own = [c for c in constraints if c.agent == agent]
    for c in own:
        if c.binding_time > h_max:
            raise ValueError(
                f"constraint at time {c.time} does not fit horizon {h_max}"
            )
    vset, eset, t_star = pack_constraints(own, agent, graph.n_cells)
    path = kernels.plan_trajectory(
        graph.indptr, graph.nbrs, gamma, start, h_max, t_star, vset, eset
    )
    if path is None:
        return None
    return Trajectory(agent, path)


def plan_all(
    graph: Graph,
    model: CostModel,
    state: State,
    h_max: int,
    constraints: Iterable[Constraint] = (),
    base: JointTrajectory | None = None,
    replan: Iterable[int] | None = None,
) -> JointTrajectory | None:
    """Per-agent `ind_plan` over a whole state.

    With ``base`` given, only the agents in ``replan`` are recomputed and
    every other row is shared with the base trajectory unchanged.  Returns
    ``None`` as soon as any agent is unsatisfiable.
    """
    order = sorted(range(len(state.agents)), key=lambda i: state.agents[i])
    agents = tuple(state.agents[i] for i in order)
    cons = list(constraints)
    redo = set(agents) if replan is None or base is None else set(replan)
    paths: list[np.ndarray] = []
    for i in order:
        agent = state.agents[i]
        if base is not None and agent not in redo:
            paths.append(base.paths[base.agents.index(agent)])
            continue
        traj = ind_plan(graph, model, state.positions[i], agent, h_max, cons)
        if traj is None:
            return None
        paths.append(traj.vertices)
    return JointTrajectory(agents, tuple(paths))
