"""Ant colony optimization for the time-dependent TSP with congestion-scaled pheromone."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .tdtsp_model import TimeDependentGraph, Tour, path_cost, period_of

MIN_WEIGHT = 0.1  # minutes; keeps Q / w finite


@dataclass(frozen=True)
class AcoParams:
    alpha: float = 1.0
    beta: float = 2.0
    rho: float = 0.5
    Q: float = 100.0
    ants: int = 100
    iterations: int = 200
    exploration_prob: float = 0.1
    initial_pheromone: float = 1.0
    rng_seed: int = 0
    elitist: bool = False

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 <= self.exploration_prob < 1:
            raise ValueError("exploration_prob must lie in [0, 1)")
        if self.ants < 1 or self.iterations < 1:
            raise ValueError("ants and iterations must be positive")
        if self.Q <= 0 or self.initial_pheromone <= 0:
            raise ValueError("Q and initial_pheromone must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PheromoneState:
    """Base pheromone per directed edge; congestion is applied at lookup."""

    base: list[list[float]]

    @classmethod
    def uniform(cls, n: int, value: float) -> "PheromoneState":
        return cls([[value] * n for _ in range(n)])


@dataclass
class SolveResult:
    best_tour: Tour
    best_cost: float
    cost_history: list[float] = field(default_factory=list)
    evaluations: int = 0


def effective_pheromone(state: PheromoneState, i: int, j: int, theta: float) -> float:
    """Base pheromone of edge (i, j) divided by the destination's congestion level."""
    return state.base[i][j] / theta


def transition_probabilities(
    state: PheromoneState,
    i: int,
    unvisited: Sequence[int],
    clock_minutes: float,
    g: TimeDependentGraph,
    params: AcoParams,
) -> dict[int, float]:
    """Probability of moving from ``i`` to each unvisited node at the given clock.

    Scores are combined in log space so that large exponents cannot overflow.
    """
    if not unvisited:
        raise ValueError("no unvisited nodes")
    p = period_of(clock_minutes * 60, g.grid)
    logs = []
    for j in unvisited:
        theta = 1.0 if g.congestion is None else g.congestion[j][p]
        sigma = effective_pheromone(state, i, j, theta)
        eta = params.Q / max(g.weights[i][j][p], MIN_WEIGHT)
        logs.append(params.alpha * math.log(sigma) + params.beta * math.log(eta))
    top = max(logs)
    scores = [math.exp(v - top) for v in logs]
    total = math.fsum(scores)
    return {j: s / total for j, s in zip(unvisited, scores)}


def ant_rng(seed: int, iteration: int, ant: int) -> np.random.Generator:
    return np.random.default_rng([seed, iteration, ant])


def construct_tour(
    state: PheromoneState,
    g: TimeDependentGraph,
    params: AcoParams,
    rng: np.random.Generator,
    stay_multiplier: float = 0.0,
) -> list[int]:
    """One closed tour (node indices, depot first and last)."""
    n = len(g.nodes)
    clock = g.start_time / 60.0
    current = 0
    tour = [0]
    unvisited = list(range(1, n))
    while unvisited:
        if len(unvisited) == 1:
            nxt = unvisited[0]
        elif rng.random() < params.exploration_prob:
            nxt = unvisited[int(rng.integers(len(unvisited)))]
        else:
            probs = transition_probabilities(state, current, unvisited, clock, g, params)
            u = rng.random()
            acc = 0.0
            nxt = unvisited[-1]
            for j in unvisited:
                acc += probs[j]
                if u < acc:
                    nxt = j
                    break
        clock += g.weights[current][nxt][period_of(clock * 60, g.grid)]
        clock += stay_multiplier * g.stay_minutes[nxt]
        tour.append(nxt)
        unvisited.remove(nxt)
        current = nxt
    tour.append(0)
    return tour


def update_pheromones(
    state: PheromoneState,
    tours: Sequence[tuple[Sequence[int], float]],
    params: AcoParams,
    elite: tuple[Sequence[int], float] | None = None,
) -> PheromoneState:
    """Evaporate every edge by ``rho`` then add ``Q / cost`` along each tour."""
    new = [[params.rho * s for s in row] for row in state.base]
    deposits = list(tours)
    if elite is not None:
        deposits.append(elite)
    for tour, cost in deposits:
        if cost <= 0:
            raise ValueError("tour costs must be positive")
        amount = params.Q / cost
        for a, b in zip(tour, tour[1:]):
            new[a][b] += amount
    return PheromoneState(new)


def default_workers() -> int:
    env = os.environ.get("TEMPOTSP_THREADS")
    if env:
        return max(1, int(env))
    return 1


def solve(
    g: TimeDependentGraph,
    params: AcoParams = AcoParams(),
    stay_multiplier: float = 0.0,
    workers: int | None = None,
) -> SolveResult:
    """Run the colony; the result depends only on ``g``, ``params`` and the multiplier.

    Each ant draws from a generator seeded by (seed, iteration, ant), so the
    outcome is identical whatever ``workers`` is.
    """
    n = len(g.nodes)
    if n < 2:
        raise ValueError("need at least two nodes")
    workers = default_workers() if workers is None else max(1, workers)
    state = PheromoneState.uniform(n, params.initial_pheromone)
    start = g.start_time / 60.0
    best: tuple[list[int], float] | None = None
    history = []
    evaluations = 0
    pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def run_ant(it_ant):
        it, k = it_ant
        tour = construct_tour(state, g, params, ant_rng(params.rng_seed, it, k), stay_multiplier)
        return tour, path_cost(g, tour, start, stay_multiplier).total

    try:
        for it in range(params.iterations):
            jobs = [(it, k) for k in range(params.ants)]
            results = list(pool.map(run_ant, jobs)) if pool else [run_ant(j) for j in jobs]
            evaluations += len(results)
            for tour, cost in results:
                if best is None or cost < best[1]:
                    best = (tour, cost)
            state = update_pheromones(state, results, params, best if params.elitist else None)
            history.append(best[1])
    finally:
        if pool:
            pool.shutdown()
    tour = Tour(tuple(g.nodes[i] for i in best[0]), g.start_time)
    return SolveResult(tour, best[1], history, evaluations)
