"""Parametric problem generators for gripper, blocksworld and visitall.

Each generator returns PDDL problem text that depends only on its size
parameter and seed. Goals are built from reachable configurations, so every
generated problem is solvable.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import List, Optional, Sequence, Tuple

from ghnplan.pddl import DomainModel, GroundProblem, parse_domain, parse_problem

DOMAIN_IDS = ("gripper", "blocksworld", "visitall")


@lru_cache(maxsize=None)
def domain_text(domain_id: str) -> str:
    if domain_id not in DOMAIN_IDS:
        raise ValueError(f"unknown domain {domain_id!r}; choose from {', '.join(DOMAIN_IDS)}")
    return resources.files("ghnplan.domains").joinpath(f"{domain_id}.pddl").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_domain(domain_id: str) -> DomainModel:
    return parse_domain(domain_text(domain_id))


def _problem_text(name, domain, objects: Sequence[Tuple[str, str]], init, goal) -> str:
    by_type = {}
    for obj, typ in objects:
        by_type.setdefault(typ, []).append(obj)
    obj_lines = "\n".join(f"    {' '.join(objs)} - {typ}" for typ, objs in by_type.items())
    init_lines = "\n".join(f"    ({' '.join(a)})" for a in init)
    goal_lines = "\n".join(f"      ({' '.join(a)})" for a in goal)
    return (
        f"(define (problem {name})\n"
        f"  (:domain {domain})\n"
        f"  (:objects\n{obj_lines})\n"
        f"  (:init\n{init_lines})\n"
        f"  (:goal (and\n{goal_lines})))\n"
    )


def gripper_problem(balls: int, seed, rooms: int = 2, grippers: int = 2, name: Optional[str] = None) -> str:
    """Balls scattered over rooms; each ball has a random goal room, at least one misplaced."""
    if balls < 1 or rooms < 2 or grippers < 1:
        raise ValueError("gripper needs >= 1 ball, >= 2 rooms, >= 1 gripper")
    rng = random.Random(f"gripper:{balls}:{rooms}:{grippers}:{seed}")
    room_names = ["rooma", "roomb"] if rooms == 2 else [f"room{i}" for i in range(1, rooms + 1)]
    gripper_names = ["left", "right"] if grippers == 2 else [f"g{i}" for i in range(1, grippers + 1)]
    ball_names = [f"ball{i}" for i in range(1, balls + 1)]
    start = {b: rng.choice(room_names) for b in ball_names}
    target = {b: rng.choice(room_names) for b in ball_names}
    if all(start[b] == target[b] for b in ball_names):
        b = rng.choice(ball_names)
        target[b] = rng.choice([r for r in room_names if r != start[b]])
    objects = [(r, "room") for r in room_names] + [(b, "ball") for b in ball_names]
    objects += [(g, "gripper") for g in gripper_names]
    init = [("robotAt", rng.choice(room_names))]
    init += [("free", g) for g in gripper_names]
    init += [("at", b, start[b]) for b in ball_names]
    goal = [("at", b, target[b]) for b in ball_names]
    return _problem_text(name or f"gripper-{balls}-{seed}", "gripper", objects, init, goal)


def _random_towers(rng: random.Random, blocks: List[str]) -> List[List[str]]:
    order = list(blocks)
    rng.shuffle(order)
    towers: List[List[str]] = []
    for b in order:
        choice = rng.randrange(len(towers) + 1)
        if choice == len(towers):
            towers.append([b])
        else:
            towers[choice].append(b)
    return towers


def _tower_atoms(towers: List[List[str]]):
    atoms = []
    for tower in towers:
        atoms.append(("ontable", tower[0]))
        for below, above in zip(tower, tower[1:]):
            atoms.append(("on", above, below))
        atoms.append(("clear", tower[-1]))
    return atoms


def blocksworld_problem(blocks: int, seed, name: Optional[str] = None) -> str:
    """Random initial and goal towers over the same blocks; the goal fixes every block's support."""
    if blocks < 2:
        raise ValueError("blocksworld needs >= 2 blocks")
    rng = random.Random(f"blocksworld:{blocks}:{seed}")
    names = [f"b{i}" for i in range(1, blocks + 1)]
    init_towers = _random_towers(rng, names)
    goal_towers = _random_towers(rng, names)
    init_atoms = sorted(_tower_atoms(init_towers))
    while sorted(a for a in _tower_atoms(goal_towers) if a[0] != "clear") == [
        a for a in init_atoms if a[0] != "clear"
    ]:
        goal_towers = _random_towers(rng, names)
    objects = [(b, "block") for b in names] + [("hand", "hand")]
    init = init_atoms + [("handempty", "hand")]
    goal = sorted(a for a in _tower_atoms(goal_towers) if a[0] != "clear")
    return _problem_text(name or f"blocksworld-{blocks}-{seed}", "blocksworld", objects, init, goal)


def visitall_problem(n: int, seed, name: Optional[str] = None) -> str:
    """n x n grid, 4-connected; the robot starts on a random cell and must visit all cells."""
    if n < 1:
        raise ValueError("visitall needs n >= 1")
    rng = random.Random(f"visitall:{n}:{seed}")
    cells = [(x, y) for x in range(n) for y in range(n)]

    def cname(c):
        return f"c-{c[0]}-{c[1]}"

    objects = [(cname(c), "place") for c in cells]
    start = rng.choice(cells)
    init = [("at-robot", cname(start)), ("visited", cname(start))]
    for x, y in cells:
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = (x + dx, y + dy)
            if 0 <= nb[0] < n and 0 <= nb[1] < n:
                init.append(("connected", cname((x, y)), cname(nb)))
    goal = [("visited", cname(c)) for c in cells]
    return _problem_text(name or f"visitall-{n}-{seed}", "visitall", objects, init, goal)


GENERATORS = {
    "gripper": gripper_problem,
    "blocksworld": blocksworld_problem,
    "visitall": visitall_problem,
}


@dataclass
class ProblemInstance:
    problem_id: str
    domain_id: str
    bin: str
    size: int
    text: str
    problem: GroundProblem


def make_instance(domain_id: str, size: int, seed, problem_id: str, bin_label: str = "") -> ProblemInstance:
    text = GENERATORS[domain_id](size, seed, name=problem_id)
    problem = parse_problem(text, load_domain(domain_id))
    return ProblemInstance(problem_id, domain_id, bin_label, size, text, problem)
