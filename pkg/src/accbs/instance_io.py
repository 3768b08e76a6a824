"""Benchmark-format map/scenario loading and the grid graph model.

File formats
------------
Maps follow the MovingAI grid layout: a ``type`` header, ``height H`` and
``width W`` lines, a ``map`` marker, then ``H`` rows of ``W`` terrain
characters.  ``.`` and ``G`` are traversable, ``@``, ``O``, ``T`` and ``W``
are blocked; anything else is an error.

Scenario files start with a ``version`` line followed by tab-separated rows
``bucket map width height sx sy gx gy optimal``.  Scenario coordinates are
(x, y) = (col, row); everything inside this package uses (row, col) with
row-major vertex ids ``r * width + c``, and the conversion happens here at
the parse boundary.  The trailing ``optimal`` column (a single-agent path
length) is parsed but ignored.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import kernels

PASSABLE_CHARS = frozenset(".G")
BLOCKED_CHARS = frozenset("@OTW")


class MapFormatError(ValueError):
    """Raised for malformed map or scenario files."""


class InstanceError(ValueError):
    """Raised when an instance violates a validity requirement."""


@dataclass(frozen=True)
class GridMap:
    width: int
    height: int
    passable: np.ndarray  # bool, shape (height, width)

    def __post_init__(self):
        if self.passable.shape != (self.height, self.width):
            raise MapFormatError(
                f"grid is {self.passable.shape}, header says "
                f"{(self.height, self.width)}"
            )
        if not self.passable.any():
            raise MapFormatError("map has no passable cell")

    @property
    def passable_count(self) -> int:
        return int(self.passable.sum())


class Graph:
    """Directed reflexive grid graph over the passable cells of a map.

    Vertices are row-major cell ids; every vertex carries a self-loop (the
    wait move) and bidirectional edges to its 4-connected passable
    neighbors.  The adjacency is stored in CSR form with neighbor lists
    sorted ascending, which fixes the deterministic tie-breaking order used
    throughout the search code.  Instances are immutable after construction
    and safe to share across threads.
    """

    def __init__(self, grid: GridMap):
        self.grid = grid
        self.width = grid.width
        self.height = grid.height
        self.n_cells = grid.width * grid.height
        flat = grid.passable.reshape(-1)
        self.passable_mask = flat
        counts = np.zeros(self.n_cells + 1, dtype=np.int32)
        nbrs: list[int] = []
        w = self.width
        for v in range(self.n_cells):
            if not flat[v]:
                continue
            r, c = divmod(v, w)
            out = []
            if r > 0 and flat[v - w]:
                out.append(v - w)
            if c > 0 and flat[v - 1]:
                out.append(v - 1)
            out.append(v)  # self-loop: waiting is always an edge
            if c + 1 < w and flat[v + 1]:
                out.append(v + 1)
            if r + 1 < self.height and flat[v + w]:
                out.append(v + w)
            counts[v + 1] = len(out)
            nbrs.extend(out)
        self.indptr = np.cumsum(counts, dtype=np.int32)
        self.nbrs = np.asarray(nbrs, dtype=np.int32)
        self.vertices = tuple(int(v) for v in np.flatnonzero(flat))

    def index(self, row: int, col: int) -> int:
        return row * self.width + col

    def coord(self, v: int) -> tuple[int, int]:
        return divmod(v, self.width)

    def contains(self, v: int) -> bool:
        return 0 <= v < self.n_cells and bool(self.passable_mask[v])

    def neighbors(self, v: int) -> list[int]:
        """Out-neighbors of ``v`` including the self-loop, ascending."""
        return self.nbrs[self.indptr[v] : self.indptr[v + 1]].tolist()

    def has_edge(self, u: int, v: int) -> bool:
        return self.contains(u) and v in self.neighbors(u)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return int(self.nbrs.shape[0])


@dataclass(frozen=True)
class AgentSpec:
    id: int
    start: int
    goal: int


@dataclass(frozen=True)
class Instance:
    graph: Graph
    agents: tuple[AgentSpec, ...]

    def validate(self, one_shot: bool = True) -> None:
        """Check id/start/goal uniqueness and start-to-goal reachability.

        Goal distinctness only applies to one-shot instances; lifelong goal
        reassignment may hand two agents the same target.
        """
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise InstanceError("duplicate agent ids")
        starts = [a.start for a in self.agents]
        if len(set(starts)) != len(starts):
            raise InstanceError("agent starts are not pairwise distinct")
        if one_shot:
            goals = [a.goal for a in self.agents]
            if len(set(goals)) != len(goals):
                raise InstanceError("agent goals are not pairwise distinct")
        fields = DistanceFieldCache(self.graph)
        for a in self.agents:
            for v, what in ((a.start, "start"), (a.goal, "goal")):
                if not self.graph.contains(v):
                    raise InstanceError(f"agent {a.id} {what} is not a vertex")
            if fields.field(a.goal).dist[a.start] < 0:
                raise InstanceError(
                    f"agent {a.id} cannot reach its goal from its start"
                )

    @property
    def n_agents(self) -> int:
        return len(self.agents)


@dataclass(frozen=True)
class DistanceField:
    """Shortest hop distances toward one goal; -1 marks unreachable cells."""

    goal: int
    dist: np.ndarray  # int32, length graph.n_cells

    @property
    def max_finite(self) -> int:
        return int(self.dist.max(initial=0))


class DistanceFieldCache:
    """Unbounded per-graph cache of distance fields keyed by goal vertex.

    Lifelong episodes revisit goals constantly, and fields are immutable,
    so sharing one cache per graph is both safe and worthwhile.
    """

    def __init__(self, graph: Graph):
        self.graph = graph
        self._fields: dict[int, DistanceField] = {}
        self._lock = threading.Lock()

    def field(self, goal: int) -> DistanceField:
        f = self._fields.get(goal)
        if f is None:
            f = distance_field(self.graph, goal)
            with self._lock:
                self._fields.setdefault(goal, f)
                f = self._fields[goal]
        return f


def parse_map(text: str) -> GridMap:
    """Parse MovingAI map text into a :class:`GridMap`."""
    lines = text.splitlines()
    header: dict[str, str] = {}
    row_start = None
    for i, line in enumerate(lines):
        token = line.strip()
        if token == "map":
            row_start = i + 1
            break
        parts = token.split(None, 1)
        if len(parts) == 2:
            header[parts[0].lower()] = parts[1]
        elif token:
            raise MapFormatError(f"line {i + 1}: malformed header {token!r}")
    if row_start is None:
        raise MapFormatError("missing 'map' marker line")
    try:
        height = int(header["height"])
        width = int(header["width"])
    except (KeyError, ValueError) as exc:
        raise MapFormatError(f"bad or missing height/width header: {exc}") from exc
    if height <= 0 or width <= 0:
        raise MapFormatError("height and width must be positive")

    rows = [line for line in lines[row_start:] if line.strip()]
    if len(rows) != height:
        raise MapFormatError(
            f"line {row_start + 1}: expected {height} map rows, found {len(rows)}"
        )
    passable = np.zeros((height, width), dtype=bool)
    for r, row in enumerate(rows):
        row = row.rstrip("\r")
        if len(row) != width:
            raise MapFormatError(
                f"line {row_start + r + 1}: row length {len(row)} != width {width}"
            )
        for c, ch in enumerate(row):
            if ch in PASSABLE_CHARS:
                passable[r, c] = True
            elif ch not in BLOCKED_CHARS:
                raise MapFormatError(
                    f"line {row_start + r + 1}: unknown terrain character {ch!r}"
                )
    return GridMap(width=width, height=height, passable=passable)


def parse_scen(text: str, count: int, grid: GridMap) -> list[AgentSpec]:
    """Read the first ``count`` scenario rows as agents with ids 0..count-1."""
    if count <= 0:
        raise ValueError("count must be positive")
    lines = [line for line in text.splitlines() if line.strip()]
    if lines and lines[0].lower().startswith("version"):
        lines = lines[1:]
    if len(lines) < count:
        raise MapFormatError(
            f"insufficient scenarios: need {count}, file has {len(lines)}"
        )
    agents = []
    for i in range(count):
        parts = lines[i].split()
        if len(parts) < 9:
            raise MapFormatError(f"scenario row {i + 1}: expected 9 fields")
        sx, sy, gx, gy = (int(p) for p in parts[4:8])
        # scenario files store (x, y) = (col, row)
        for x, y, what in ((sx, sy, "start"), (gx, gy, "goal")):
            if not (0 <= x < grid.width and 0 <= y < grid.height):
                raise MapFormatError(
                    f"scenario row {i + 1}: {what} ({x}, {y}) outside map"
                )
            if not grid.passable[y, x]:
                raise MapFormatError(
                    f"scenario row {i + 1}: {what} ({x}, {y}) on blocked cell"
                )
        agents.append(
            AgentSpec(id=i, start=sy * grid.width + sx, goal=gy * grid.width + gx)
        )
    return agents


def build_graph(grid: GridMap) -> Graph:
    return Graph(grid)


def distance_field(graph: Graph, goal: int) -> DistanceField:
    """BFS distances toward ``goal``; self-loops never shorten a path."""
    if not graph.contains(goal):
        raise InstanceError(f"goal {goal} is not a graph vertex")
    dist = kernels.bfs_distance_field(graph.indptr, graph.nbrs, goal, graph.n_cells)
    return DistanceField(goal=goal, dist=dist)


def load_instance(map_path, scen_path, count: int) -> Instance:
    """Convenience loader: map + scenario files to a validated instance."""
    with open(map_path, encoding="ascii") as fh:
        grid = parse_map(fh.read())
    graph = build_graph(grid)
    with open(scen_path, encoding="ascii") as fh:
        agents = parse_scen(fh.read(), count, grid)
    inst = Instance(graph=graph, agents=tuple(agents))
    inst.validate()
    return inst


def sample_agents(graph: Graph, n: int, rng) -> tuple[AgentSpec, ...]:
    """Draw ``n`` agents with distinct starts and distinct goals.

    All positions come from the largest connected component, so the
    resulting instance is always solvable.  ``rng`` is a
    ``random.Random``-like source.
    """
    comp = largest_component(graph)
    if len(comp) < n:
        raise InstanceError(f"component has {len(comp)} cells, need {n}")
    cells = sorted(comp)
    starts = rng.sample(cells, n)
    goals = rng.sample(cells, n)
    return tuple(AgentSpec(id=i, start=starts[i], goal=goals[i]) for i in range(n))


def largest_component(graph: Graph) -> set[int]:
    """Vertices of the largest connected component (ties: lowest seed id)."""
    remaining = set(graph.vertices)
    best: set[int] = set()
    while remaining:
        seed = min(remaining)
        dist = distance_field(graph, seed).dist
        comp = {v for v in remaining if dist[v] >= 0}
        remaining -= comp
        if len(comp) > len(best):
            best = comp
    return best
