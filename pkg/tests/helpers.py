"""Shared test utilities: tiny map construction and instance sampling."""

import random
from pathlib import Path

from accbs.instance_io import Instance, build_graph, parse_map, sample_agents

DATA = Path(__file__).resolve().parents[1] / "data"
FIXTURES = Path(__file__).resolve().parent / "fixtures"


def grid_text(rows: list[str]) -> str:
    height = len(rows)
    width = len(rows[0])
    body = "\n".join(rows)
    return f"type octile\nheight {height}\nwidth {width}\nmap\n{body}\n"


def make_graph(rows: list[str]):
    return build_graph(parse_map(grid_text(rows)))


def random_instance(graph, n: int, seed) -> Instance:
    agents = sample_agents(graph, n, random.Random(f"agents:{seed}"))
    inst = Instance(graph=graph, agents=agents)
    inst.validate()
    return inst
