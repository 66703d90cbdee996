"""Independent oracles shared by the test modules."""

from collections import deque
from itertools import product

from ghnplan.abstraction import HALF, ONE, ZERO


def bfs_distance(problem, limit=200_000):
    """Optimal plan length by breadth-first search, or None when unreachable.

    Transitions are computed directly from the ground action sets so the
    oracle does not go through the planner's own successor code.
    """
    start = problem.initial_state.atoms
    if problem.goal <= start:
        return 0
    seen = {start}
    frontier = deque([(start, 0)])
    while frontier:
        atoms, d = frontier.popleft()
        for act in problem.ground_actions:
            if act.precondition <= atoms:
                nxt = (atoms - act.delete) | act.add
                if nxt in seen:
                    continue
                if problem.goal <= nxt:
                    return d + 1
                seen.add(nxt)
                if len(seen) > limit:
                    raise RuntimeError("state space too large for the oracle")
                frontier.append((nxt, d + 1))
    return None


def distance_to_goal_table(problem, limit=200_000):
    """h* for every reachable state, by backward BFS over the reachable graph."""
    start = problem.initial_state.atoms
    seen = {start}
    order = [start]
    edges = {}
    queue = deque([start])
    while queue:
        atoms = queue.popleft()
        succ = []
        for act in problem.ground_actions:
            if act.precondition <= atoms:
                nxt = (atoms - act.delete) | act.add
                succ.append(nxt)
                if nxt not in seen:
                    seen.add(nxt)
                    order.append(nxt)
                    queue.append(nxt)
        edges[atoms] = succ
        if len(seen) > limit:
            raise RuntimeError("state space too large")
    preds = {s: [] for s in seen}
    for s, succ in edges.items():
        for t in succ:
            preds[t].append(s)
    dist = {s: 0 for s in seen if problem.goal <= s}
    queue = deque(dist)
    while queue:
        s = queue.popleft()
        for p in preds[s]:
            if p not in dist:
                dist[p] = dist[s] + 1
                queue.append(p)
    return dist


def brute_force_value(atoms, groups, pred, roles):
    """Three-valued truth of ``pred`` over the product of the role groups."""
    tuples = list(product(*(sorted(groups[r]) for r in roles)))
    hits = sum(1 for t in tuples if (pred, *t) in atoms)
    if hits == 0:
        return ZERO
    if hits == len(tuples):
        return ONE
    return HALF
