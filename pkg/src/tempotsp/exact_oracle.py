"""Exhaustive search over every depot-anchored tour, for small instances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .tdtsp_model import GraphError, TimeDependentGraph, Tour, path_cost, period_of

MAX_NODES = 11
TIE_TOL = 1e-9


@dataclass
class OracleResult:
    optimal_tour: Tour
    optimal_cost: float
    permutations_evaluated: int
    ties: list[Tour] = field(default_factory=list)


def brute_force(
    g: TimeDependentGraph,
    stay_multiplier: float = 0.0,
    start_time: int | None = None,
    max_nodes: int = MAX_NODES,
) -> OracleResult:
    """Optimal closed tour by enumerating all (n-1)! orders of the non-depot nodes.

    Orders are walked depth-first so shared prefixes are costed once; each
    complete order is costed with the same recursion as ``tour_cost``.
    Every tour within ``TIE_TOL`` of the optimum is reported, in
    lexicographic node-index order.
    """
    n = len(g.nodes)
    if n > max_nodes:
        raise GraphError(
            f"{n} nodes is above the exhaustive-search limit of {max_nodes} "
            f"({math.factorial(n - 1)} tours)"
        )
    start = (g.start_time if start_time is None else start_time) / 60.0
    W, grid, stay = g.weights, g.grid, g.stay_minutes

    best = math.inf
    ties: list[list[int]] = []
    count = 0
    path = [0]
    used = [False] * n
    used[0] = True

    def extend(clock: float):
        nonlocal best, count
        cur = path[-1]
        if len(path) == n:
            total = clock + W[cur][0][period_of(clock * 60, grid)] - start
            count += 1
            if total < best - TIE_TOL:
                best = total
                ties.clear()
                ties.append(path + [0])
            elif total <= best + TIE_TOL:
                ties.append(path + [0])
            return
        for j in range(1, n):
            if used[j]:
                continue
            t = clock + W[cur][j][period_of(clock * 60, grid)]
            t += stay_multiplier * stay[j]
            used[j] = True
            path.append(j)
            extend(t)
            path.pop()
            used[j] = False

    if n == 1:
        return OracleResult(Tour((g.nodes[0],), start_time), 0.0, 1, [Tour((g.nodes[0],), start_time)])
    extend(start)
    tours = [Tour(tuple(g.nodes[i] for i in t), start_time) for t in ties]
    cost = path_cost(g, ties[0], start, stay_multiplier).total
    return OracleResult(tours[0], cost, count, tours)


def result_dict(res: OracleResult) -> dict:
    return {
        "tour": list(res.optimal_tour.nodes),
        "cost": res.optimal_cost,
        "permutations_evaluated": res.permutations_evaluated,
        "ties": [list(t.nodes) for t in res.ties],
    }
