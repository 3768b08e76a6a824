"""Closed feedback loop: controller -> actuator -> environment -> log.

Each step the controller sees only the current state and tasking, returns a
joint movement, the actuator executes it (possibly delaying individual
agents), and the environment hands out new goals or inserts arriving agents.
Executed states are checked for collisions on every single transition; a
violation here is a solver bug, never tolerable noise.

Determinism: every random decision draws from a stream derived from the
scenario seed and a role tag, so one config reruns to a bit-identical log
as long as the search budget is an expansion quota.
"""

from __future__ import annotations

import json
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from .engine import (
    STATUS_OPTIMAL,
    EngineError,
    SearchConfig,
    StepResult,
    accbs_step,
    fh_cbs_step,
)
from .instance_io import (
    AgentSpec,
    DistanceFieldCache,
    Graph,
    Instance,
    InstanceError,
    largest_component,
    load_instance,
    parse_map,
    build_graph,
    sample_agents,
)
from .model import MovementCommand, State
from .pibt import PriorityTable, pibt_step

MODES = ("oneshot", "lifelong", "uncertain")
CONTROLLERS = ("accbs", "fhcbs", "pibt")

TERMINAL_DONE = "all-at-goal"
TERMINAL_CAP = "step-cap"
TERMINAL_HORIZON = "horizon-end"
TERMINAL_ABORT = "aborted"

METADATA_SCHEMA = "accbs-episode/1"


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one episode."""

    map_path: str
    n_agents: int
    controller: str = "accbs"
    mode: str = "oneshot"
    scen_path: str | None = None
    agents_seed: int | None = None  # sample agents instead of a .scen file
    h_max: int = 16
    horizon: int | None = None  # fhcbs lookahead
    expansion_budget: int | None = 100_000
    time_budget_ms: float | None = None
    use_prioritized_conflicts: bool = False
    seed: int = 1
    max_steps: int | None = None
    delay_p: float = 0.0
    arrival_period: int | None = None
    arrival_count: int = 1

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n_agents < 1:
            raise ValueError("need at least one agent")
        if not 0.0 <= self.delay_p <= 1.0:
            raise ValueError("delay probability outside [0, 1]")
        if self.mode == "oneshot" and (self.delay_p > 0 or self.arrival_period):
            raise ValueError("one-shot mode forbids delays and arrivals")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max steps must be >= 1")
        if self.controller == "fhcbs" and not self.horizon:
            raise ValueError("fhcbs controller needs --horizon")
        if (self.scen_path is None) == (self.agents_seed is None):
            raise ValueError("set exactly one of scen_path/agents_seed")


@dataclass
class EpisodeLog:
    agents_per_step: list[tuple[int, ...]] = field(default_factory=list)
    states: list[tuple[int, ...]] = field(default_factory=list)
    goals_per_step: list[tuple[int, ...]] = field(default_factory=list)
    executed_planned: list[tuple[int, ...]] = field(default_factory=list)
    diagnostics: list[StepResult] = field(default_factory=list)
    completions: list[tuple[int, int]] = field(default_factory=list)  # agent, step
    arrivals: list[tuple[int, int, int, int]] = field(default_factory=list)
    terminal: str = TERMINAL_CAP

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1


@dataclass(frozen=True)
class Metrics:
    soc: int
    soc_excess: int  # soc minus the per-agent distance lower bound
    makespan: int
    throughput: float
    mean_plan_ms: float
    p95_plan_ms: float
    mean_hr: float
    expansions: int
    status: str


def apply_actuator(
    state: State, command: MovementCommand, delay_p: float, rng
) -> tuple[State, dict[int, bool]]:
    """Execute a joint movement under independent per-agent delays.

    A delayed agent stays put; anyone moving into a cell that a delayed
    agent still occupies is forced to wait as well, chained through the
    whole column of followers so the executed state stays collision-free.
    """
    delayed = set()
    if delay_p > 0:
        for a in state.agents:  # fixed id order keeps the stream stable
            if rng.random() < delay_p:
                delayed.add(a)
    current = dict(zip(state.agents, state.positions))
    targets = command.targets()
    # target cell -> the (unique) agent moving into it
    movers = {targets[a]: a for a in state.agents if targets[a] != current[a]}
    queue = sorted(delayed)
    while queue:
        d = queue.pop()
        follower = movers.get(current[d])
        if follower is not None and follower not in delayed:
            delayed.add(follower)
            queue.append(follower)
    flags = {a: a not in delayed for a in state.agents}
    positions = tuple(
        current[a] if a in delayed else targets[a] for a in state.agents
    )
    return State(state.agents, positions, state.time + 1), flags


def assert_transition_safe(graph: Graph, prev: State, nxt: State) -> None:
    """Vertex/swap collision and edge-validity check on one executed step."""
    before = dict(zip(prev.agents, prev.positions))
    after = dict(zip(nxt.agents, nxt.positions))
    occupied_before = {v: a for a, v in before.items()}
    for a, v in after.items():
        u = before[a]
        if not graph.has_edge(u, v):
            raise AssertionError(f"agent {a} moved along a non-edge ({u}, {v})")
        if v != u:
            b = occupied_before.get(v)
            if b is not None and b != a and after.get(b) == u:
                raise AssertionError(f"agents {a} and {b} swapped on ({u}, {v})")
    # State construction already rejects shared target vertices.


def environment_update(
    graph: Graph,
    component: list[int],
    state: State,
    goals: dict[int, int],
    rng,
    step: int,
    log: EpisodeLog,
    arrivals_due: int,
    next_agent_id: int,
    last_command: MovementCommand,
) -> tuple[State, dict[int, int], int, int]:
    """Reassign reached goals and insert due arrivals (lifelong/uncertain)."""
    here = dict(zip(state.agents, state.positions))
    for a in sorted(state.agents):
        if here[a] == goals[a]:
            log.completions.append((a, step))
            while True:
                g = component[rng.randrange(len(component))]
                if g != here[a]:
                    break
            goals[a] = g
    inserted = 0
    if arrivals_due > 0:
        occupied = set(state.positions)
        banned = occupied | set(last_command.targets().values())
        free = [v for v in component if v not in banned]
        agents = list(state.agents)
        positions = list(state.positions)
        for _ in range(arrivals_due):
            if not free:
                break  # defer the rest one step
            v = free.pop(rng.randrange(len(free)))
            while True:
                g = component[rng.randrange(len(component))]
                if g != v:
                    break
            agents.append(next_agent_id)
            positions.append(v)
            goals[next_agent_id] = g
            log.arrivals.append((next_agent_id, step, v, g))
            next_agent_id += 1
            inserted += 1
        state = State(tuple(agents), tuple(positions), state.time)
    return state, goals, arrivals_due - inserted, next_agent_id


def _soc_lower_bound(fields: DistanceFieldCache, agents, positions, goals) -> int:
    return sum(int(fields.field(goals[a]).dist[v]) for a, v in zip(agents, positions))


def _make_controller(config: ScenarioConfig, fields: DistanceFieldCache):
    if config.controller == "pibt":
        def step(inst, state, priorities):
            t0 = time.perf_counter()
            movement = pibt_step(inst, state, priorities, None, fields)
            return StepResult(
                movement=movement,
                reached_horizon=1,
                expansions=0,
                incumbent_cost=None,
                status="pibt",
                elapsed_ms=(time.perf_counter() - t0) * 1000.0,
            )

        return step
    search_config = SearchConfig(
        h_max=config.h_max,
        expansion_budget=config.expansion_budget,
        time_budget_ms=config.time_budget_ms,
        use_prioritized_conflicts=config.use_prioritized_conflicts,
        seed=config.seed,
    )
    if config.controller == "fhcbs":
        def step(inst, state, priorities):
            return fh_cbs_step(
                inst, state, config.horizon, search_config,
                priorities=priorities, fields=fields,
            )

        return step

    def step(inst, state, priorities):
        return accbs_step(
            inst, state, search_config, priorities=priorities, fields=fields
        )

    return step


def initial_instance(config: ScenarioConfig) -> Instance:
    """Build and validate the episode's starting instance."""
    if config.scen_path is not None:
        return load_instance(config.map_path, config.scen_path, config.n_agents)
    with open(config.map_path, encoding="ascii") as fh:
        graph = build_graph(parse_map(fh.read()))
    agents = sample_agents(
        graph, config.n_agents, random.Random(f"agents:{config.agents_seed}")
    )
    inst = Instance(graph=graph, agents=agents)
    inst.validate()
    return inst


def run_episode(config: ScenarioConfig) -> tuple[EpisodeLog, Metrics]:
    """Run one closed-loop episode to termination."""
    instance = initial_instance(config)
    graph = instance.graph
    fields = DistanceFieldCache(graph)
    component = sorted(largest_component(graph))
    controller = _make_controller(config, fields)

    goals = {a.id: a.goal for a in instance.agents}
    state = State(
        agents=tuple(a.id for a in instance.agents),
        positions=tuple(a.start for a in instance.agents),
        time=0,
    )
    start_positions = dict(zip(state.agents, state.positions))
    lower_bound = _soc_lower_bound(fields, state.agents, state.positions, goals)

    if config.max_steps is not None:
        max_steps = config.max_steps
    elif config.mode == "oneshot":
        far = max(
            int(fields.field(goals[a]).dist[v])
            for a, v in zip(state.agents, state.positions)
        )
        max_steps = max(8 * far, 8)  # livelock detector
    else:
        max_steps = 1000

    rng_act = random.Random(f"{config.seed}:actuator")
    rng_env = random.Random(f"{config.seed}:environment")
    priorities = PriorityTable.fresh(state.agents)
    next_agent_id = max(state.agents) + 1
    deferred_arrivals = 0

    log = EpisodeLog()
    log.agents_per_step.append(state.agents)
    log.states.append(state.positions)
    log.goals_per_step.append(tuple(goals[a] for a in state.agents))
    log.executed_planned.append(tuple(1 for _ in state.agents))

    soc = 0
    terminal = TERMINAL_CAP
    for step in range(max_steps):
        inst_t = Instance(
            graph=graph,
            agents=tuple(
                AgentSpec(a, v, goals[a])
                for a, v in zip(state.agents, state.positions)
            ),
        )
        try:
            result = controller(inst_t, state, priorities)
        except EngineError as exc:
            log.terminal = TERMINAL_ABORT
            raise EpisodeAborted(str(exc), log) from exc
        if (
            config.mode == "oneshot"
            and all(v == goals[a] for a, v in zip(state.agents, state.positions))
            and result.movement.all_waits()
        ):
            terminal = TERMINAL_DONE
            break
        executed, flags = apply_actuator(state, result.movement, config.delay_p,
                                         rng_act)
        assert_transition_safe(graph, state, executed)
        soc += sum(
            1 for a, v in zip(state.agents, state.positions) if v != goals[a]
        )
        state = executed

        arrivals_due = deferred_arrivals
        if (
            config.mode == "uncertain"
            and config.arrival_period
            and (step + 1) % config.arrival_period == 0
        ):
            arrivals_due += config.arrival_count
        if config.mode in ("lifelong", "uncertain"):
            state, goals, deferred_arrivals, next_agent_id = environment_update(
                graph, component, state, goals, rng_env,
                step + 1, log, arrivals_due, next_agent_id, result.movement,
            )
        priorities.update(state, goals)

        log.agents_per_step.append(state.agents)
        log.states.append(state.positions)
        log.goals_per_step.append(tuple(goals[a] for a in state.agents))
        log.executed_planned.append(
            tuple(1 if flags.get(a, True) else 0 for a in state.agents)
        )
        log.diagnostics.append(result)
    else:
        terminal = TERMINAL_HORIZON if config.mode != "oneshot" else TERMINAL_CAP

    log.terminal = terminal
    metrics = _metrics(config, log, soc, lower_bound)
    return log, metrics


class EpisodeAborted(RuntimeError):
    def __init__(self, message: str, log: EpisodeLog):
        super().__init__(message)
        self.log = log


def _metrics(config: ScenarioConfig, log: EpisodeLog, soc: int,
             lower_bound: int) -> Metrics:
    times = sorted(d.elapsed_ms for d in log.diagnostics)
    n = len(times)
    mean_ms = sum(times) / n if n else 0.0
    p95_ms = times[-(-95 * n // 100) - 1] if n else 0.0  # ceil(0.95 n)-th value
    hrs = [d.reached_horizon for d in log.diagnostics]
    mean_hr = sum(hrs) / len(hrs) if hrs else 0.0
    throughput = len(log.completions) / config.n_agents
    return Metrics(
        soc=soc,
        soc_excess=soc - lower_bound,
        makespan=log.n_steps,
        throughput=throughput,
        mean_plan_ms=mean_ms,
        p95_plan_ms=p95_ms,
        mean_hr=mean_hr,
        expansions=sum(d.expansions for d in log.diagnostics),
        status=log.terminal,
    )


def recompute_soc(log: EpisodeLog) -> int:
    """Independent SOC recount from the raw log records."""
    total = 0
    for t in range(log.n_steps):
        for v, g in zip(log.states[t], log.goals_per_step[t]):
            if v != g:
                total += 1
    return total


def serialize_log(log: EpisodeLog, graph: Graph) -> str:
    """Newline-delimited executed-state records:
    ``step<TAB>agent<TAB>row<TAB>col<TAB>executed_planned``."""
    lines = []
    for t, (agents, positions, flags) in enumerate(
        zip(log.agents_per_step, log.states, log.executed_planned)
    ):
        for a, v, f in zip(agents, positions, flags):
            r, c = graph.coord(v)
            lines.append(f"{t}\t{a}\t{r}\t{c}\t{f}")
    lines.append(f"terminal\t{log.terminal}")
    return "\n".join(lines) + "\n"


def episode_metadata(config: ScenarioConfig) -> dict:
    meta = {"schema": METADATA_SCHEMA, "config": asdict(config)}
    meta["reproducible"] = config.time_budget_ms is None
    return meta


def config_from_metadata(meta: dict) -> ScenarioConfig:
    if meta.get("schema") != METADATA_SCHEMA:
        raise ValueError(f"unknown metadata schema {meta.get('schema')!r}")
    return ScenarioConfig(**meta["config"])


def rerun_from_metadata(path) -> tuple[EpisodeLog, Metrics]:
    with open(path, encoding="utf-8") as fh:
        meta = json.load(fh)
    return run_episode(config_from_metadata(meta))


def _run_cell(config: ScenarioConfig):
    log, metrics = run_episode(config)
    return config, metrics


def run_batch(configs, workers: int | None = None):
    """Run independent episodes concurrently; order follows the input."""
    if workers is None:
        workers = int(os.environ.get("ACCBS_THREADS", "0")) or os.cpu_count() or 1
    if workers <= 1 or len(configs) <= 1:
        return [_run_cell(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, configs))
