"""High-level search: fixed-horizon conflict-based search plus the adaptive
running-horizon controller step.

One constraint tree over full-length trajectories serves every horizon.
Conflicts are only enforced inside the active prefix ``[0, h_r]``; because
every stored trajectory follows a shortest path beyond its own constrained
window, a node's cost never changes when ``h_r`` grows, so the tree and the
queue survive horizon increments untouched.  A conflict-free prefix makes
the dequeued node the incumbent, whose first step can be returned whenever
the budget runs out; with no incumbent the priority-inheritance planner
supplies a safe joint move instead.
"""

from __future__ import annotations

import heapq
import random
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .instance_io import DistanceFieldCache, Instance
from .model import (
    EDGE,
    VERTEX,
    Conflict,
    Constraint,
    CostModel,
    JointTrajectory,
    MovementCommand,
    State,
)
from .pibt import PriorityTable, pibt_step

_EMPTY_KEYS = frozenset()

STATUS_OPTIMAL = "optimal-at-Hmax"
STATUS_INCUMBENT = "budget-exhausted-with-incumbent"
STATUS_FALLBACK = "fallback-pibt"

# OPEN orders nodes by (cost, conflict count, creation index), packed into
# one integer so the heap never compares tuples.
_COST_BITS = 20
_NCF_BITS = 20
_IDX_BITS = 23
_NCF_CAP = (1 << _NCF_BITS) - 1


class EngineError(RuntimeError):
    """No solution exists within the requested horizon."""


@dataclass(frozen=True)
class SearchConfig:
    """Engine knobs for one control step.

    Exactly one of ``expansion_budget`` (deterministic, used by all tests)
    and ``time_budget_ms`` (wall clock, irreproducible) must be set.  An
    expansion budget of zero is allowed and falls straight back to the
    one-step planner.
    """

    h_max: int
    expansion_budget: int | None = None
    time_budget_ms: float | None = None
    use_prioritized_conflicts: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.h_max < 1:
            raise ValueError("h_max must be >= 1")
        if (self.expansion_budget is None) == (self.time_budget_ms is None):
            raise ValueError("set exactly one of expansion/time budget")
        if self.expansion_budget is not None and self.expansion_budget < 0:
            raise ValueError("expansion budget must be >= 0")
        if self.time_budget_ms is not None and self.time_budget_ms <= 0:
            raise ValueError("time budget must be positive")


class Node:
    """Constraint-tree node.

    Children share every unchanged trajectory with their parent and store
    only the replanned row, so a node is a few hundred bytes regardless of
    the agent count.  ``constraints()`` and ``joint()`` materialize the full
    views by walking the ancestry.  ``packed`` caches the constrained
    agent's accumulated constraint-key arrays for fast replanning further
    down the tree.
    """

    __slots__ = ("idx", "parent", "constraint", "row", "path", "cost", "ncf",
                 "packed", "row_cost", "depth", "rows", "root_paths", "agents")

    def __init__(self, idx, parent, constraint, row, path, cost, ncf,
                 packed=None, row_cost=-1, root_paths=None, agents=None):
        self.idx = idx
        self.parent = parent
        self.constraint = constraint
        self.row = row
        self.path = path
        self.cost = cost
        self.ncf = ncf
        self.packed = packed
        self.row_cost = row_cost  # cost of `path` alone, cached for children
        self.depth = 0 if parent is None else parent.depth + 1
        # rows replanned anywhere along the ancestry (walk short-circuit)
        if parent is None:
            self.rows = frozenset()
        elif row in parent.rows:
            self.rows = parent.rows
        else:
            self.rows = parent.rows | {row}
        self.root_paths = root_paths
        self.agents = agents

    @property
    def parent_id(self):
        return self.parent.idx if self.parent is not None else None

    def constraints(self) -> frozenset[Constraint]:
        out = []
        cur = self
        while cur is not None:
            if cur.constraint is not None:
                out.append(cur.constraint)
            cur = cur.parent
        return frozenset(out)

    def joint(self) -> JointTrajectory:
        cur = self
        override: dict[int, np.ndarray] = {}
        while cur.row >= 0:
            override.setdefault(cur.row, cur.path)
            cur = cur.parent
        paths = tuple(
            override.get(r, cur.root_paths[r]) for r in range(len(cur.agents))
        )
        return JointTrajectory(cur.agents, paths)


@dataclass
class StepResult:
    """Per-step controller output plus the diagnostics record.

    ``plan`` carries the full joint trajectory behind the returned first
    step (``None`` when the move came from the one-step fallback)."""

    movement: MovementCommand
    reached_horizon: int
    expansions: int
    incumbent_cost: int | None
    status: str
    elapsed_ms: float
    plan: JointTrajectory | None = None


@dataclass
class SearchTrace:
    """Optional debug recorder used by the test suite."""

    dequeue_costs: list[int] = field(default_factory=list)
    incumbents: list[tuple[int, int]] = field(default_factory=list)
    record_constraints: bool = False
    expanded_constraints: list[frozenset] = field(default_factory=list)
    generated: int = 0


def extract_first_step(joint: JointTrajectory) -> MovementCommand:
    return joint.first_step()


class _Search:
    """One search over one constraint tree (single control step)."""

    def __init__(self, instance: Instance, state: State, h_max: int,
                 fields: DistanceFieldCache | None = None,
                 trace: SearchTrace | None = None,
                 on_node: Callable | None = None):
        order = sorted(range(len(state.agents)), key=lambda i: state.agents[i])
        self.agents = tuple(state.agents[i] for i in order)
        self.positions = tuple(state.positions[i] for i in order)
        self.graph = instance.graph
        self.model = CostModel(
            self.graph, {a.id: a.goal for a in instance.agents}, fields
        )
        self.h_max = h_max
        self.n = len(self.agents)
        self.trace = trace
        self.on_node = on_node
        self.nodes: list[Node] = []
        self.heap: list[int] = []
        self.buf = np.empty((self.n, h_max + 1), dtype=np.int32)
        self.root_matrix = None
        self._buf_node = None
        self._row_of = {a: r for r, a in enumerate(self.agents)}
        self.expansions = 0
        self._gammas = [self.model.gamma(a) for a in self.agents]
        self._goals = [self.model.goal(a) for a in self.agents]
        if h_max + max(int(g.max(initial=0)) for g in self._gammas) >= kernels.F_CAP:
            raise ValueError("h_max plus map diameter exceeds key capacity")

    # -- node plumbing ----------------------------------------------------

    def _push(self, node: Node) -> None:
        if node.cost >= (1 << _COST_BITS) or node.idx >= (1 << _IDX_BITS):
            raise EngineError("search exceeded packed OPEN-key capacity")
        ncf = min(node.ncf, _NCF_CAP)
        key = (node.cost << (_NCF_BITS + _IDX_BITS)) | (ncf << _IDX_BITS) | node.idx
        heapq.heappush(self.heap, key)

    def _pop(self) -> Node:
        key = heapq.heappop(self.heap)
        return self.nodes[key & ((1 << _IDX_BITS) - 1)]

    def _materialize(self, node: Node) -> np.ndarray:
        """Stage the node's joint trajectory into the shared row buffer.

        The buffer always holds the previously staged node, so only rows
        that changed between the two nodes are rewritten.  Consecutive
        dequeues in a best-first search are usually close relatives, which
        makes the walk to the lowest common ancestor short.
        """
        buf = self.buf
        last = self._buf_node
        if node is last:
            return buf
        fresh: dict[int, np.ndarray] = {}  # rows overridden below the LCA
        stale: list[int] = []  # rows the old node overrode below the LCA
        a, b = node, last
        while a.depth > b.depth:
            fresh.setdefault(a.row, a.path)
            a = a.parent
        while b.depth > a.depth:
            stale.append(b.row)
            b = b.parent
        while a is not b:
            fresh.setdefault(a.row, a.path)
            stale.append(b.row)
            a = a.parent
            b = b.parent
        lca = a
        for r, path in fresh.items():
            buf[r] = path
        for r in stale:
            if r in fresh:
                continue
            # restore the row to its value at (and above) the LCA
            cur = lca
            while cur.row >= 0:
                if cur.row == r:
                    buf[r] = cur.path
                    break
                cur = cur.parent
            else:
                buf[r] = self.root_matrix[r]
            fresh[r] = buf[r]  # avoid re-restoring duplicates in stale
        self._buf_node = node
        return buf

    def _packed_for(self, node: Node | None, row: int,
                    extra: Constraint) -> tuple[tuple, int]:
        """Constraint-key sets plus current row cost for one agent.

        The nearest ancestor that replanned the same row carries both its
        accumulated key sets and the cost of its trajectory, so extending
        the constraint set is one set union and no rescan."""
        if node is not None and row in node.rows:
            cur = node
            while cur.row != row:
                cur = cur.parent
            vset, eset, t_star = cur.packed
            old_cost = cur.row_cost
        else:
            vset, eset, t_star = _EMPTY_KEYS, _EMPTY_KEYS, 0
            old_cost = self._root_row_costs[row]
        n_cells = self.graph.n_cells
        if extra.kind == VERTEX:
            vset = vset | {extra.time * n_cells + extra.loc}
        else:
            u, w = extra.loc
            eset = eset | {(extra.time * n_cells + u) * n_cells + w}
        return (vset, eset, max(t_star, extra.binding_time)), old_cost

    def _plan_row(self, row: int, packed) -> np.ndarray | None:
        vset, eset, t_star = packed
        return kernels.plan_trajectory(
            self.graph.indptr, self.graph.nbrs, self._gammas[row],
            self.positions[row], self.h_max, t_star, vset, eset,
        )

    def _row_cost(self, row: int, path) -> int:
        c = kernels.path_cost(path, self._gammas[row], self._goals[row],
                              self.h_max)
        if c < 0:
            raise EngineError(f"agent {self.agents[row]} cannot reach its goal")
        return c

    def make_root(self) -> Node:
        paths = []
        cost = 0
        empty = (_EMPTY_KEYS, _EMPTY_KEYS, 0)
        self._root_row_costs = []
        for row in range(self.n):
            p = self._plan_row(row, empty)
            if p is None:
                raise EngineError(
                    f"agent {self.agents[row]} cannot reach its goal"
                )
            rc = self._row_cost(row, p)
            self._root_row_costs.append(rc)
            cost += rc
            paths.append(p)
        self.root_matrix = np.ascontiguousarray(np.vstack(paths))
        self.buf[:] = self.root_matrix
        ncf = kernels.count_conflicts(self.buf, self.h_max, self.graph.n_cells)
        root = Node(0, None, None, -1, None, cost, ncf,
                    root_paths=tuple(paths), agents=self.agents)
        self.nodes.append(root)
        self._buf_node = root
        return root

    def make_child(self, parent: Node, buf: np.ndarray, row: int,
                   constraint: Constraint,
                   preplanned: tuple | None = None) -> Node | None:
        """Replan one agent under one extra constraint; ``None`` if boxed in."""
        h_max = self.h_max
        n_cells = self.graph.n_cells
        if preplanned is not None:
            path, packed, old_cost = preplanned
        else:
            # inline of _packed_for/_plan_row: this is the hottest call site
            if row in parent.rows:
                cur = parent
                while cur.row != row:
                    cur = cur.parent
                vset, eset, t_star = cur.packed
                old_cost = cur.row_cost
            else:
                vset = eset = _EMPTY_KEYS
                t_star = 0
                old_cost = self._root_row_costs[row]
            if constraint.kind == VERTEX:
                vset = vset | {constraint.time * n_cells + constraint.loc}
                bind = constraint.time
            else:
                u, w = constraint.loc
                eset = eset | {(constraint.time * n_cells + u) * n_cells + w}
                bind = constraint.time + 1
            if bind > t_star:
                t_star = bind
            packed = (vset, eset, t_star)
            path = kernels.plan_trajectory(
                self.graph.indptr, self.graph.nbrs, self._gammas[row],
                self.positions[row], h_max, t_star, vset, eset,
            )
        if path is None:
            return None
        new_cost = kernels.path_cost(path, self._gammas[row],
                                     self._goals[row], h_max)
        if new_cost < 0:
            raise EngineError(f"agent {self.agents[row]} cannot reach its goal")
        cost = parent.cost - old_cost + new_cost
        ncf = kernels.count_conflicts(buf, h_max, n_cells, row, path)
        node = Node(len(self.nodes), parent, constraint, row, path, cost, ncf,
                    packed=packed, row_cost=new_cost)
        self.nodes.append(node)
        return node

    # -- conflicts --------------------------------------------------------

    def _find_conflict(self, buf: np.ndarray, h_r: int) -> Conflict | None:
        hit = kernels.find_first_conflict(buf, h_r, self.graph.n_cells)
        return None if hit is None else self._conflict_from_hit(hit)

    def _conflict_from_hit(self, hit) -> Conflict:
        kind, i, j, t, a, b = hit
        agents = (self.agents[i], self.agents[j])
        if kind == 0:
            return Conflict(VERTEX, agents, t, a)
        return Conflict(EDGE, agents, t, (a, b))

    def _split(self, conflict: Conflict) -> list[tuple[int, Constraint]]:
        ai, aj = conflict.agents
        ri, rj = self._row_of[ai], self._row_of[aj]
        if conflict.kind == VERTEX:
            return [
                (ri, Constraint(VERTEX, ai, conflict.time, conflict.loc)),
                (rj, Constraint(VERTEX, aj, conflict.time, conflict.loc)),
            ]
        u, w = conflict.loc  # as traversed by ai, departing at time - 1
        return [
            (ri, Constraint(EDGE, ai, conflict.time - 1, (u, w))),
            (rj, Constraint(EDGE, aj, conflict.time - 1, (w, u))),
        ]

    def _all_conflicts(self, buf: np.ndarray, h_r: int) -> list[Conflict]:
        out: list[Conflict] = []
        n = self.n
        for t in range(h_r + 1):
            seen: dict[int, int] = {}
            for j in range(n):
                v = int(buf[j, t])
                if v in seen:
                    out.append(Conflict(
                        VERTEX, (self.agents[seen[v]], self.agents[j]), t, v))
                else:
                    seen[v] = j
            if t == 0:
                continue
            moves: dict[tuple[int, int], int] = {}
            for j in range(n):
                u, w = int(buf[j, t - 1]), int(buf[j, t])
                if u != w:
                    i = moves.get((w, u))
                    if i is not None:
                        out.append(Conflict(
                            EDGE, (self.agents[i], self.agents[j]), t, (w, u)))
                    moves[(u, w)] = j
        return out

    def _prioritize(self, node: Node, buf: np.ndarray, h_r: int,
                    first: Conflict) -> tuple[Conflict, dict]:
        """Prefer conflicts whose resolution must raise the cost (cardinal),
        classified by replanning both sides.  Costly by design; off by
        default."""
        conflicts = self._all_conflicts(buf, h_r)
        plans: dict[tuple[int, Constraint], tuple] = {}
        best = None  # (rank, order) -> conflict
        for order, conflict in enumerate(conflicts):
            raised = 0
            for row, constraint in self._split(conflict):
                key = (row, constraint)
                if key not in plans:
                    packed, old_cost = self._packed_for(node, row, constraint)
                    plans[key] = (self._plan_row(row, packed), packed, old_cost)
                p, _, old_cost = plans[key]
                if p is None or self._row_cost(row, p) > old_cost:
                    raised += 1
            rank = {2: 0, 1: 1, 0: 2}[raised]
            if best is None or (rank, order) < best[0]:
                best = ((rank, order), conflict)
            if rank == 0:
                break
        chosen = best[1] if best is not None else first
        return chosen, plans

    # -- main loop --------------------------------------------------------

    def run(self, h_start: int, grow: bool, config: SearchConfig):
        t0 = time.perf_counter()
        deadline = (
            t0 + config.time_budget_ms / 1000.0
            if config.time_budget_ms is not None
            else None
        )
        quota = config.expansion_budget
        h_r = h_start
        root = self.make_root()
        trace = self.trace
        on_node = self.on_node
        if on_node is not None:
            on_node(root, h_r)
        self._push(root)
        incumbent: Node | None = None
        interrupted = False
        # local bindings for the hot loop
        heap = self.heap
        nodes = self.nodes
        heappop = heapq.heappop
        find_first = kernels.find_first_conflict
        materialize = self._materialize
        make_child = self.make_child
        push = self._push
        agents = self.agents
        n_cells = self.graph.n_cells
        h_max = self.h_max
        pc = config.use_prioritized_conflicts
        idx_mask = (1 << _IDX_BITS) - 1
        expansions = 0
        while heap:
            if quota is not None and expansions >= quota:
                interrupted = True
                break
            if deadline is not None and time.perf_counter() >= deadline:
                interrupted = True
                break
            node = nodes[heappop(heap) & idx_mask]
            expansions += 1
            buf = materialize(node)
            if trace is not None:
                trace.dequeue_costs.append(node.cost)
                if trace.record_constraints:
                    trace.expanded_constraints.append(node.constraints())
            hit = find_first(buf, h_r, n_cells)
            if hit is None:
                incumbent = node
                if trace is not None:
                    trace.incumbents.append((h_r, node.cost))
                while hit is None and h_r < h_max and grow:
                    h_r += 1
                    hit = find_first(buf, h_r, n_cells)
                    if hit is None and trace is not None:
                        trace.incumbents.append((h_r, node.cost))
                if hit is None:
                    self.expansions = expansions
                    elapsed = (time.perf_counter() - t0) * 1000.0
                    return _Outcome("solved", node, incumbent, h_r,
                                    expansions, elapsed)
            kind, i, j, t, a, b = hit
            if kind == 0:
                pairs = (
                    (i, Constraint(VERTEX, agents[i], t, a)),
                    (j, Constraint(VERTEX, agents[j], t, a)),
                )
            else:
                pairs = (
                    (i, Constraint(EDGE, agents[i], t - 1, (a, b))),
                    (j, Constraint(EDGE, agents[j], t - 1, (b, a))),
                )
            plans: dict = {}
            if pc:
                conflict = self._conflict_from_hit(hit)
                conflict, plans = self._prioritize(node, buf, h_r, conflict)
                pairs = tuple(self._split(conflict))
            for row, constraint in pairs:
                child = make_child(
                    node, buf, row, constraint,
                    plans.get((row, constraint)) if plans else None,
                )
                if child is None:
                    continue
                if trace is not None:
                    trace.generated += 1
                if on_node is not None:
                    on_node(child, h_r)
                push(child)
        self.expansions = expansions
        elapsed = (time.perf_counter() - t0) * 1000.0
        status = "interrupted" if interrupted else "exhausted"
        return _Outcome(status, None, incumbent, h_r, expansions, elapsed)


@dataclass
class _Outcome:
    status: str  # solved | interrupted | exhausted
    node: Node | None
    incumbent: Node | None
    h_r: int
    expansions: int
    elapsed_ms: float


def _fallback(instance, state, priorities, seed, outcome) -> StepResult:
    movement = pibt_step(instance, state, priorities, random.Random(seed))
    return StepResult(
        movement=movement,
        reached_horizon=outcome.h_r,
        expansions=outcome.expansions,
        incumbent_cost=None,
        status=STATUS_FALLBACK,
        elapsed_ms=outcome.elapsed_ms,
    )


def _first_step(search: _Search, node: Node) -> MovementCommand:
    buf = search._materialize(node)
    return MovementCommand(
        {a: (int(buf[r, 0]), int(buf[r, 1])) for r, a in enumerate(search.agents)}
    )


def accbs_step(
    instance: Instance,
    state: State,
    config: SearchConfig,
    priorities: PriorityTable | None = None,
    fields: DistanceFieldCache | None = None,
    trace: SearchTrace | None = None,
    on_node: Callable | None = None,
) -> StepResult:
    """One adaptive-horizon control step.

    The running horizon starts at 1 and is pushed outward every time the
    best node's active prefix comes back clean; node costs are never
    recomputed and the tree is reused across horizons.  On budget
    exhaustion the incumbent's first step is returned, or a one-step
    fallback move when no incumbent exists yet.
    """
    search = _Search(instance, state, config.h_max, fields, trace, on_node)
    outcome = search.run(1, True, config)
    if outcome.status == "solved":
        return StepResult(
            movement=_first_step(search, outcome.node),
            reached_horizon=outcome.h_r,
            expansions=outcome.expansions,
            incumbent_cost=outcome.node.cost,
            status=STATUS_OPTIMAL,
            elapsed_ms=outcome.elapsed_ms,
            plan=outcome.node.joint(),
        )
    if outcome.incumbent is not None:
        return StepResult(
            movement=_first_step(search, outcome.incumbent),
            reached_horizon=outcome.h_r,
            expansions=outcome.expansions,
            incumbent_cost=outcome.incumbent.cost,
            status=STATUS_INCUMBENT,
            elapsed_ms=outcome.elapsed_ms,
            plan=outcome.incumbent.joint(),
        )
    if outcome.status == "exhausted":
        raise EngineError("infeasible within H_max")
    return _fallback(instance, state, priorities, config.seed, outcome)


def fh_cbs_step(
    instance: Instance,
    state: State,
    horizon: int,
    config: SearchConfig,
    priorities: PriorityTable | None = None,
    fields: DistanceFieldCache | None = None,
    trace: SearchTrace | None = None,
    on_node: Callable | None = None,
) -> StepResult:
    """Fixed-horizon control step: conflicts are enforced over all of
    ``[0, horizon]`` from the start and only a fully conflict-free node
    returns; the budget running out first falls back to the one-step
    planner."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    search = _Search(instance, state, horizon, fields, trace, on_node)
    outcome = search.run(horizon, False, config)
    if outcome.status == "solved":
        return StepResult(
            movement=_first_step(search, outcome.node),
            reached_horizon=horizon,
            expansions=outcome.expansions,
            incumbent_cost=outcome.node.cost,
            status=STATUS_OPTIMAL,
            elapsed_ms=outcome.elapsed_ms,
            plan=outcome.node.joint(),
        )
    if outcome.status == "exhausted":
        raise EngineError("no H-step solution")
    return _fallback(instance, state, priorities, config.seed, outcome)


def generate_children(
    instance: Instance,
    state: State,
    node: Node,
    conflict: Conflict,
    h_max: int,
    fields: DistanceFieldCache | None = None,
) -> tuple[Node | None, Node | None]:
    """Split one conflict into the two single-constraint children.

    Only the newly constrained agent is replanned in each child; an agent
    that the extra constraint boxes in yields ``None`` on that side.
    """
    search = _Search(instance, state, h_max, fields)
    search.nodes = [None] * (node.idx + 1)  # keep creation indices unique
    root = node
    while root.parent is not None:
        root = root.parent
    search._root_row_costs = [
        search._row_cost(r, p) for r, p in enumerate(root.root_paths)
    ]
    buf = search.buf
    buf[:] = node.joint().stacked()
    out = []
    for row, constraint in search._split(conflict):
        out.append(search.make_child(node, buf, row, constraint))
    return out[0], out[1]
