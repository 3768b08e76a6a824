"""Command-line front end: single episodes and seeded sweeps.

``accbs run`` executes one closed-loop episode and writes a one-row CSV, a
metadata JSON that reproduces the episode exactly (expansion budgets only),
and the executed-state log.  ``accbs sweep`` expands a plain-text spec file
into a Cartesian product of episodes, runs them on a small worker pool, and
writes per-episode rows, per-cell aggregates, and SVG trend plots.

CSV schema (stable):
``map,scen,n,controller,hmax,budget_kind,budget,seed,mode,soc,makespan,``
``throughput,mean_plan_ms,p95_plan_ms,mean_hr,expansions,status``
"""

from __future__ import annotations

import argparse
import csv
import json

import statistics
import sys

from pathlib import Path

from .simulator import (
    EpisodeAborted,
    Metrics,
    ScenarioConfig,
    episode_metadata,
    run_batch,
    run_episode,
    serialize_log,
)
from .svg import line_chart

CSV_HEADER = (
    "map,scen,n,controller,hmax,budget_kind,budget,seed,mode,soc,makespan,"
    "throughput,mean_plan_ms,p95_plan_ms,mean_hr,expansions,status"
)

SWEEP_KEYS = {
    "maps", "agents", "controllers", "hmaxes", "horizons", "budgets",
    "seeds", "mode", "reps", "delay_p", "max_steps", "arrival_period",
    "arrival_count", "cap", "out",
}


def _budget_fields(config: ScenarioConfig) -> tuple[str, float]:
    if config.expansion_budget is not None:
        return "expansions", config.expansion_budget
    return "ms", config.time_budget_ms


def _csv_row(config: ScenarioConfig, metrics: Metrics) -> list:
    kind, value = _budget_fields(config)
    scen = (
        Path(config.scen_path).name
        if config.scen_path
        else f"seed:{config.agents_seed}"
    )
    return [
        Path(config.map_path).name, scen, config.n_agents, config.controller,
        config.h_max, kind, value, config.seed, config.mode, metrics.soc,
        metrics.makespan, f"{metrics.throughput:.6g}",
        f"{metrics.mean_plan_ms:.6g}", f"{metrics.p95_plan_ms:.6g}",
        f"{metrics.mean_hr:.6g}", metrics.expansions, metrics.status,
    ]


def _summary_line(config: ScenarioConfig, metrics: Metrics) -> str:
    return (
        f"map={Path(config.map_path).name} n={config.n_agents} "
        f"controller={config.controller} mode={config.mode} "
        f"soc={metrics.soc} soc_excess={metrics.soc_excess} "
        f"makespan={metrics.makespan} throughput={metrics.throughput:.3f} "
        f"mean_plan_ms={metrics.mean_plan_ms:.3f} mean_hr={metrics.mean_hr:.2f} "
        f"expansions={metrics.expansions} status={metrics.status}"
    )


def _config_from_args(args) -> ScenarioConfig:
    return ScenarioConfig(
        map_path=args.map,
        scen_path=args.scen,
        agents_seed=args.agents_seed,
        n_agents=args.agents,
        controller=args.controller,
        mode=args.mode,
        h_max=args.hmax,
        horizon=args.horizon,
        expansion_budget=args.budget_expansions,
        time_budget_ms=args.budget_ms,
        use_prioritized_conflicts=args.prioritized_conflicts,
        seed=args.seed,
        max_steps=args.max_steps,
        delay_p=args.delay_p,
        arrival_period=args.arrival_period,
        arrival_count=args.arrival_count,
    )


def cmd_run(args) -> int:
    try:
        config = _config_from_args(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        log, metrics = run_episode(config)
    except EpisodeAborted as exc:
        print(f"episode aborted: {exc}", file=sys.stderr)
        return 1
    with open(out / "episode.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        writer.writerow(_csv_row(config, metrics))
    with open(out / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(episode_metadata(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    from .instance_io import build_graph, parse_map

    with open(config.map_path, encoding="ascii") as fh:
        graph = build_graph(parse_map(fh.read()))
    (out / "episode.log").write_text(serialize_log(log, graph), encoding="ascii")
    print(_summary_line(config, metrics))
    return 0


def parse_sweep_spec(text: str) -> dict[str, list[str]]:
    """Parse ``key = value value ...`` lines; '#' starts a comment."""
    spec: dict[str, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"sweep spec line {lineno}: expected 'key = values'")
        key, _, rest = line.partition("=")
        key = key.strip()
        if key not in SWEEP_KEYS:
            raise ValueError(f"sweep spec line {lineno}: unknown key {key!r}")
        values = rest.split()
        if not values:
            raise ValueError(f"sweep spec line {lineno}: empty value list")
        spec[key] = values
    for required in ("maps", "agents", "controllers", "budgets", "seeds"):
        if required not in spec:
            raise ValueError(f"sweep spec missing required key {required!r}")
    return spec


def _parse_budget(token: str) -> tuple[int | None, float | None]:
    kind, _, value = token.partition(":")
    if kind == "expansions":
        return int(value), None
    if kind == "ms":
        return None, float(value)
    raise ValueError(f"budget {token!r} must be expansions:N or ms:X")


def sweep_configs(spec: dict[str, list[str]]) -> list[ScenarioConfig]:
    mode = spec.get("mode", ["oneshot"])[0]
    reps = int(spec.get("reps", ["1"])[0])
    delay_p = float(spec.get("delay_p", ["0"])[0])
    max_steps = (
        int(spec["max_steps"][0]) if "max_steps" in spec else None
    )
    arrival_period = (
        int(spec["arrival_period"][0]) if "arrival_period" in spec else None
    )
    arrival_count = int(spec.get("arrival_count", ["1"])[0])
    horizons = spec.get("horizons", [None])
    configs = []
    for map_token in spec["maps"]:
        map_path, _, scen_path = map_token.partition(":")
        for n in spec["agents"]:
            for controller in spec["controllers"]:
                for hmax in spec.get("hmaxes", ["16"]):
                    for horizon in (horizons if controller == "fhcbs" else [None]):
                        for budget in spec["budgets"]:
                            expansions, ms = _parse_budget(budget)
                            for seed in spec["seeds"]:
                                for rep in range(reps):
                                    configs.append(ScenarioConfig(
                                        map_path=map_path,
                                        scen_path=scen_path or None,
                                        agents_seed=(
                                            None if scen_path else int(seed)
                                        ),
                                        n_agents=int(n),
                                        controller=controller,
                                        mode=mode,
                                        h_max=int(hmax),
                                        horizon=(
                                            int(horizon) if horizon else None
                                        ),
                                        expansion_budget=expansions,
                                        time_budget_ms=ms,
                                        seed=int(seed) * 1000 + rep,
                                        max_steps=max_steps,
                                        delay_p=delay_p,
                                        arrival_period=arrival_period,
                                        arrival_count=arrival_count,
                                    ))
    return configs


def _cell_key(config: ScenarioConfig) -> tuple:
    kind, value = _budget_fields(config)
    return (
        Path(config.map_path).name, config.n_agents, config.controller,
        config.h_max, config.horizon, kind, value, config.mode,
    )


def _write_sweep_outputs(out: Path, results) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "runs.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        for config, metrics in results:
            writer.writerow(_csv_row(config, metrics))

    cells: dict[tuple, list[Metrics]] = {}
    for config, metrics in results:
        cells.setdefault(_cell_key(config), []).append(metrics)
    agg_header = (
        "map,n,controller,hmax,horizon,budget_kind,budget,mode,episodes,"
        "soc_mean,soc_std,throughput_mean,throughput_std,mean_plan_ms,"
        "mean_hr,expansions_mean"
    )
    with open(out / "aggregate.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(agg_header.split(","))
        for key in sorted(cells, key=str):
            ms = cells[key]
            socs = [m.soc for m in ms]
            thrs = [m.throughput for m in ms]
            writer.writerow(list(key[:5]) + [key[5], key[6], key[7]] + [
                len(ms),
                f"{statistics.fmean(socs):.6g}",
                f"{statistics.pstdev(socs):.6g}",
                f"{statistics.fmean(thrs):.6g}",
                f"{statistics.pstdev(thrs):.6g}",
                f"{statistics.fmean(m.mean_plan_ms for m in ms):.6g}",
                f"{statistics.fmean(m.mean_hr for m in ms):.6g}",
                f"{statistics.fmean(m.expansions for m in ms):.6g}",
            ])

    def cells_where(pred):
        return {k: v for k, v in cells.items() if pred(k)}

    by_budget = cells_where(lambda k: k[5] == "expansions")
    if by_budget:
        soc_series: dict[str, list[tuple[float, float]]] = {}
        thr_series: dict[str, list[tuple[float, float]]] = {}
        for key, ms in by_budget.items():
            label = f"{key[0]} n={key[1]} {key[2]}"
            point = (float(key[6]), statistics.fmean(m.soc for m in ms))
            soc_series.setdefault(label, []).append(point)
            if key[7] in ("lifelong", "uncertain"):
                thr_series.setdefault(label, []).append(
                    (float(key[6]), statistics.fmean(m.throughput for m in ms))
                )
        if soc_series:
            (out / "soc_vs_budget.svg").write_text(line_chart(
                soc_series, "Mean SOC vs per-step budget",
                "expansion budget", "mean SOC", log_x=True,
            ), encoding="ascii")
        if thr_series:
            (out / "throughput_vs_budget.svg").write_text(line_chart(
                thr_series, "Throughput vs per-step budget",
                "expansion budget", "tasks per agent", log_x=True,
            ), encoding="ascii")
    horizon_cells = cells_where(lambda k: k[2] == "fhcbs" and k[4])
    if horizon_cells:
        time_series: dict[str, list[tuple[float, float]]] = {}
        for key, ms in horizon_cells.items():
            label = f"{key[0]} n={key[1]}"
            time_series.setdefault(label, []).append(
                (float(key[4]), statistics.fmean(m.mean_plan_ms for m in ms))
            )
        (out / "time_vs_horizon.svg").write_text(line_chart(
            time_series, "Planning time vs lookahead",
            "lookahead steps", "mean planning ms",
        ), encoding="ascii")


def cmd_sweep(args) -> int:
    try:
        spec = parse_sweep_spec(Path(args.spec).read_text(encoding="utf-8"))
        configs = sweep_configs(spec)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    cap = int(spec.get("cap", ["512"])[0])
    if len(configs) > cap:
        print(
            f"error: sweep expands to {len(configs)} episodes, cap is {cap}",
            file=sys.stderr,
        )
        return 2
    out = Path(args.out or spec.get("out", ["sweep-out"])[0])
    wall_budgets = any(c.time_budget_ms is not None for c in configs)
    try:
        results = run_batch(configs, workers=args.workers)
    except EpisodeAborted as exc:
        print(f"episode aborted: {exc}", file=sys.stderr)
        return 1
    _write_sweep_outputs(out, results)
    note = " (wall-clock budgets: not reproducible)" if wall_budgets else ""
    print(f"wrote {len(results)} episodes to {out}{note}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accbs",
        description="Closed-loop multi-agent path finding runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one episode")
    run.add_argument("--map", required=True, help="MovingAI .map file")
    group = run.add_mutually_exclusive_group(required=True)
    group.add_argument("--scen", help="MovingAI .scen file")
    group.add_argument(
        "--agents-seed", type=int,
        help="sample starts/goals with this seed instead of a .scen file",
    )
    run.add_argument("--agents", type=int, required=True)
    run.add_argument(
        "--controller", choices=("accbs", "fhcbs", "pibt"), default="accbs"
    )
    run.add_argument("--hmax", type=int, default=16)
    run.add_argument(
        "--horizon", type=int, help="fixed lookahead (fhcbs controller)"
    )
    budget = run.add_mutually_exclusive_group()
    budget.add_argument("--budget-ms", type=float)
    budget.add_argument("--budget-expansions", type=int, default=None)
    run.add_argument(
        "--mode", choices=("oneshot", "lifelong", "uncertain"),
        default="oneshot",
    )
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--max-steps", type=int)
    run.add_argument("--delay-p", type=float, default=0.0)
    run.add_argument("--arrival-period", type=int)
    run.add_argument("--arrival-count", type=int, default=1)
    run.add_argument("--prioritized-conflicts", action="store_true")
    run.add_argument("--out", default="episode-out")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a sweep spec file")
    sweep.add_argument("spec", help="plain-text sweep spec")
    sweep.add_argument("--out", help="output directory (overrides spec)")
    sweep.add_argument(
        "--workers", type=int, default=None,
        help="pool size (default: ACCBS_THREADS or cpu count)",
    )
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run" and args.budget_ms is None and (
        args.budget_expansions is None
    ):
        args.budget_expansions = 100_000
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
