#!/usr/bin/env python3
"""Generate the benchmark-format fixture files under data/.

The empty maps are exact; the random maps follow the usual 10%-obstacle
recipe with a fixed seed (no network fetch, so the cell layout is local to
this repository while the format and scale match the published benchmarks).
Scenario rows are sampled from the largest connected component so every
instance is solvable.
"""

from __future__ import annotations

import random
from pathlib import Path

from accbs.instance_io import build_graph, largest_component, parse_map

ROOT = Path(__file__).resolve().parents[1]
MAPS = ROOT / "data" / "maps"
SCENS = ROOT / "data" / "scens"


def empty_map(side: int) -> str:
    rows = "\n".join("." * side for _ in range(side))
    return f"type octile\nheight {side}\nwidth {side}\nmap\n{rows}\n"


def random_map(side: int, p_block: float, seed: str) -> str:
    rng = random.Random(seed)
    rows = []
    for _ in range(side):
        rows.append(
            "".join("@" if rng.random() < p_block else "." for _ in range(side))
        )
    return f"type octile\nheight {side}\nwidth {side}\nmap\n" + "\n".join(rows) + "\n"


def scen_text(map_name: str, map_text: str, n_rows: int, seed: str) -> str:
    grid = parse_map(map_text)
    graph = build_graph(grid)
    cells = sorted(largest_component(graph))
    rng = random.Random(seed)
    starts = rng.sample(cells, n_rows)
    goals = rng.sample(cells, n_rows)
    lines = ["version 1"]
    for i in range(n_rows):
        sr, sc = divmod(starts[i], grid.width)
        gr, gc = divmod(goals[i], grid.width)
        manhattan = abs(sr - gr) + abs(sc - gc)
        lines.append(
            f"{i // 10}\t{map_name}\t{grid.width}\t{grid.height}"
            f"\t{sc}\t{sr}\t{gc}\t{gr}\t{manhattan}"
        )
    return "\n".join(lines) + "\n"


def main() -> None:
    MAPS.mkdir(parents=True, exist_ok=True)
    SCENS.mkdir(parents=True, exist_ok=True)

    maps = {
        "empty-8-8.map": empty_map(8),
        "empty-48-48.map": empty_map(48),
        "random-32-32-10.map": random_map(32, 0.10, "random-32-32-10"),
        "random-64-64-10.map": random_map(64, 0.10, "random-64-64-10"),
    }
    for name, text in maps.items():
        (MAPS / name).write_text(text, encoding="ascii")

    scens = {
        "empty-8-8-random-1.scen": ("empty-8-8.map", 40, "scen:empty-8-8:1"),
        "random-32-32-10-random-1.scen": (
            "random-32-32-10.map",
            150,
            "scen:random-32-32-10:1",
        ),
    }
    for name, (map_name, rows, seed) in scens.items():
        (SCENS / name).write_text(
            scen_text(map_name, maps[map_name], rows, seed), encoding="ascii"
        )
    print(f"wrote {len(maps)} maps, {len(scens)} scens")


if __name__ == "__main__":
    main()
