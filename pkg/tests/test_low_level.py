import random

import numpy as np
import pytest

from accbs.instance_io import DistanceFieldCache
from accbs.low_level import ind_plan, plan_all
from accbs.model import Constraint, CostModel, State, Trajectory, satisfies

from helpers import make_graph


def model_for(graph, goals):
    return CostModel(graph, goals, DistanceFieldCache(graph))


def walk_cost(walk, gamma, goal):
    g = int(gamma[walk[-1]])
    if g < 0:
        return None
    return sum(1 for v in walk[:-1] if v != goal) + g


def enumerate_optimum(graph, model, agent, start, h, constraints):
    """Exhaustive minimum over all constraint-satisfying h-step walks."""
    gamma = model.gamma(agent)
    goal = model.goal(agent)
    best = None
    stack = [[start]]
    while stack:
        walk = stack.pop()
        if len(walk) == h + 1:
            traj = Trajectory(agent, np.asarray(walk, dtype=np.int32))
            if satisfies(traj, constraints):
                c = walk_cost(walk, gamma, goal)
                if c is not None and (best is None or c < best):
                    best = c
            continue
        for v in graph.neighbors(walk[-1]):
            stack.append(walk + [v])
    return best


class TestIndPlan:
    def test_unconstrained_shortest_path_then_wait(self, empty8):
        goal = empty8.index(3, 3)
        model = model_for(empty8, {0: goal})
        start = empty8.index(0, 0)
        traj = ind_plan(empty8, model, start, 0, 10, [])
        assert traj.steps == 10
        gamma = model.gamma(0)
        d = int(gamma[start])
        assert walk_cost(list(traj.vertices), gamma, goal) == d
        assert (traj.vertices[d:] == goal).all()

    def test_corridor_vertex_constraint_forces_wait(self):
        # 1x4 corridor a-b-c-d, block b at t=1: wait once then run
        g = make_graph(["...."])
        model = model_for(g, {0: 3})
        cons = [Constraint("vertex", 0, 1, 1)]
        traj = ind_plan(g, model, 0, 0, 5, cons)
        expected_cost = enumerate_optimum(g, model, 0, 0, 5, cons)
        got_cost = walk_cost(list(traj.vertices), model.gamma(0), 3)
        assert got_cost == expected_cost == 4
        assert list(traj.vertices) == [0, 0, 1, 2, 3, 3]

    def test_fully_enclosed_start_returns_none(self):
        g = make_graph(["..."])
        model = model_for(g, {0: 2})
        cons = [
            Constraint("vertex", 0, 1, 0),
            Constraint("vertex", 0, 1, 1),
        ]
        assert ind_plan(g, model, 0, 0, 4, cons) is None

    def test_constraint_beyond_horizon_rejected(self):
        g = make_graph(["..."])
        model = model_for(g, {0: 2})
        with pytest.raises(ValueError, match="horizon"):
            ind_plan(g, model, 0, 0, 3, [Constraint("vertex", 0, 4, 1)])

    def test_optimality_matches_enumeration(self):
        rng = random.Random(41)
        maps = [
            ["...."],
            ["....", "...."],
            ["..@.", "....", ".@.."],
            ["....", ".@@.", "....", "...."],
        ]
        for rows in maps:
            g = make_graph(rows)
            for _ in range(12):
                cells = list(g.vertices)
                start, goal = rng.choice(cells), rng.choice(cells)
                model = model_for(g, {0: goal})
                if model.gamma(0)[start] < 0:
                    continue
                h = rng.randint(1, 6)
                cons = []
                for _ in range(rng.randint(0, 4)):
                    if rng.random() < 0.6:
                        cons.append(Constraint(
                            "vertex", 0, rng.randint(0, h), rng.choice(cells)))
                    else:
                        u = rng.choice(cells)
                        w = rng.choice(g.neighbors(u))
                        cons.append(Constraint(
                            "edge", 0, rng.randint(0, h - 1), (u, w)))
                traj = ind_plan(g, model, start, 0, h, cons)
                expected = enumerate_optimum(g, model, 0, start, h, cons)
                if traj is None:
                    assert expected is None
                else:
                    assert satisfies(traj, cons)
                    got = walk_cost(
                        list(traj.vertices), model.gamma(0), goal)
                    assert got == expected

    def test_suffix_descends_distance_field_after_t_star(self):
        rng = random.Random(53)
        g = make_graph(["....", "....", "...."])
        cells = list(g.vertices)
        for _ in range(40):
            start, goal = rng.choice(cells), rng.choice(cells)
            model = model_for(g, {0: goal})
            h = rng.randint(2, 8)
            cons = []
            t_star = 0
            for _ in range(rng.randint(0, 3)):
                t = rng.randint(0, h)
                cons.append(Constraint("vertex", 0, t, rng.choice(cells)))
                t_star = max(t_star, t)
            traj = ind_plan(g, model, start, 0, h, cons)
            if traj is None:
                continue
            gamma = model.gamma(0)
            for ell in range(t_star, h):
                a, b = int(traj.vertices[ell]), int(traj.vertices[ell + 1])
                assert int(gamma[b]) == max(int(gamma[a]) - 1, 0)
                if gamma[a] == 0:
                    assert a == goal and b == goal

    def test_adding_constraints_never_cheapens(self):
        rng = random.Random(67)
        g = make_graph(["....", "....", "...."])
        cells = list(g.vertices)
        for _ in range(40):
            start, goal = rng.choice(cells), rng.choice(cells)
            model = model_for(g, {0: goal})
            h = 6
            cons = []
            last = None
            for _ in range(5):
                traj = ind_plan(g, model, start, 0, h, cons)
                if traj is None:
                    break
                cost = walk_cost(list(traj.vertices), model.gamma(0), goal)
                if last is not None:
                    assert cost >= last
                last = cost
                cons.append(Constraint(
                    "vertex", 0, rng.randint(0, h), rng.choice(cells)))

    def test_distance_heuristic_is_admissible(self):
        # goal distance never exceeds the enumerated true remaining cost
        rng = random.Random(71)
        g = make_graph(["...", ".@.", "..."])
        cells = list(g.vertices)
        for _ in range(20):
            start, goal = rng.choice(cells), rng.choice(cells)
            model = model_for(g, {0: goal})
            gamma = model.gamma(0)
            if gamma[start] < 0:
                continue
            h = 5
            best = enumerate_optimum(g, model, 0, start, h, [])
            assert int(gamma[start]) <= best


class TestPlanAll:
    def test_far_apart_agents_follow_shortest_paths(self, empty8):
        goals = {0: empty8.index(0, 7), 1: empty8.index(7, 0)}
        model = model_for(empty8, goals)
        state = State((0, 1), (empty8.index(0, 0), empty8.index(7, 7)))
        joint = plan_all(empty8, model, state, 10)
        for a in (0, 1):
            cost = walk_cost(
                list(joint.trajectory(a).vertices), model.gamma(a), goals[a])
            assert cost == model.distance(a, state.position(a))

    def test_incremental_replanning_shares_rows_bitwise(self, empty8):
        goals = {0: empty8.index(0, 7), 1: empty8.index(7, 0)}
        model = model_for(empty8, goals)
        state = State((0, 1), (empty8.index(0, 0), empty8.index(7, 7)))
        base = plan_all(empty8, model, state, 8)
        cons = [Constraint("vertex", 0, 1, empty8.index(0, 1))]
        child = plan_all(empty8, model, state, 8, cons, base=base, replan=[0])
        assert child.paths[1] is base.paths[1]
        assert not (child.paths[0] == base.paths[0]).all()

    def test_joint_plan_satisfies_all_constraints(self):
        rng = random.Random(83)
        g = make_graph(["....", "....", "....", "...."])
        cells = list(g.vertices)
        for _ in range(25):
            starts = rng.sample(cells, 3)
            goals = rng.sample(cells, 3)
            model = model_for(g, dict(enumerate(goals)))
            state = State((0, 1, 2), tuple(starts))
            cons = []
            for _ in range(rng.randint(0, 6)):
                agent = rng.randrange(3)
                cons.append(Constraint(
                    "vertex", agent, rng.randint(0, 6), rng.choice(cells)))
            joint = plan_all(g, model, state, 6, cons)
            if joint is None:
                continue
            for a in (0, 1, 2):
                assert satisfies(joint.trajectory(a), cons)

    def test_infeasible_agent_poisons_whole_plan(self):
        g = make_graph(["..."])
        model = model_for(g, {0: 2, 1: 0})
        state = State((0, 1), (0, 2))
        cons = [
            Constraint("vertex", 0, 1, 0),
            Constraint("vertex", 0, 1, 1),
        ]
        assert plan_all(g, model, state, 4, cons) is None
