"""Closed-loop multi-agent path finding toolkit.

An adaptive-horizon conflict-based search engine with an anytime interface,
a one-step priority-inheritance fallback, ground-truth oracles, and a
feedback-loop simulator with a benchmark harness.
"""

from .engine import (
    STATUS_FALLBACK,
    STATUS_INCUMBENT,
    STATUS_OPTIMAL,
    EngineError,
    Node,
    SearchConfig,
    SearchTrace,
    StepResult,
    accbs_step,
    extract_first_step,
    fh_cbs_step,
    generate_children,
)
from .instance_io import (
    AgentSpec,
    DistanceField,
    DistanceFieldCache,
    Graph,
    GridMap,
    Instance,
    InstanceError,
    MapFormatError,
    build_graph,
    distance_field,
    load_instance,
    parse_map,
    parse_scen,
    sample_agents,
)
from .kernels import BACKEND
from .model import (
    Conflict,
    Constraint,
    CostModel,
    JointTrajectory,
    MovementCommand,
    State,
    Trajectory,
    find_conflict,
    prefix_cost,
    satisfies,
    trajectory_cost,
)
from .oracles import (
    OracleInfeasible,
    OracleSolution,
    OracleTimeout,
    brute_force_joint,
    classic_cbs,
)
from .pibt import PriorityTable, pibt_step
from .simulator import (
    EpisodeAborted,
    EpisodeLog,
    Metrics,
    ScenarioConfig,
    apply_actuator,
    environment_update,
    initial_instance,
    recompute_soc,
    rerun_from_metadata,
    run_batch,
    run_episode,
    serialize_log,
)

__version__ = "0.1.0"
