"""Time-dependent graph, period weights from profiles, and recursive tour costs."""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Mapping, NamedTuple, Sequence

from .temporal_net import ParetoEntry


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodGrid:
    start: int = 8 * 3600
    period_length: int = 7200
    count: int = 5

    def __post_init__(self):
        if self.period_length <= 0 or self.count <= 0:
            raise ValueError("period_length and count must be positive")

    @property
    def end(self) -> int:
        return self.start + self.period_length * self.count

    def index(self, t: float) -> int | None:
        """Period containing ``t``, or None outside the grid."""
        if t < self.start or t >= self.end:
            return None
        return int((t - self.start) // self.period_length)

    def label(self, p: int) -> str:
        a = self.start + p * self.period_length
        b = a + self.period_length
        return f"{a // 3600:02d}:{a % 3600 // 60:02d}-{b // 3600:02d}:{b % 3600 // 60:02d}"

    def to_dict(self) -> dict:
        return {"start": self.start, "period_length": self.period_length, "count": self.count}


def period_of(t: float, grid: PeriodGrid) -> int:
    """Index of the period containing ``t`` (seconds), clamped onto the grid."""
    if t < grid.start:
        return 0
    return min(int((t - grid.start) // grid.period_length), grid.count - 1)


def nearest_rank(values: Sequence[float], quantile: float) -> float:
    """k-th smallest value with k = ceil(quantile * n), at least 1."""
    if not values:
        raise ValueError("no values")
    n = len(values)
    # round first: 0.05 * 60 evaluates to 3.0000000000000004
    k = max(1, math.ceil(round(quantile * n, 9)))
    return sorted(values)[min(k, n) - 1]


def derive_weights(
    entries: Mapping[tuple[str, str], Iterable[ParetoEntry]],
    grid: PeriodGrid,
    quantile: float = 0.05,
) -> dict[tuple[str, str], list[float]]:
    """Per-period weights (minutes) for each ordered node pair.

    Pure travel times of the pair's profile entries are bucketed by departure
    period and reduced with the nearest-rank ``quantile``. Entries departing
    outside the grid are not bucketed. An empty bucket borrows from the
    nearest populated period (earlier one on ties); a pair whose entries all
    fall outside the grid gets the median over those entries.
    """
    weights = {}
    missing = []
    for pair, pair_entries in entries.items():
        pair_entries = list(pair_entries)
        if not pair_entries:
            missing.append(pair)
            continue
        buckets: list[list[float]] = [[] for _ in range(grid.count)]
        for e in pair_entries:
            p = grid.index(e.dep_time)
            if p is not None:
                buckets[p].append((e.arr_time - e.dep_time) / 60.0)
        filled = [p for p in range(grid.count) if buckets[p]]
        if not filled:
            median = statistics.median((e.arr_time - e.dep_time) / 60.0 for e in pair_entries)
            weights[pair] = [median] * grid.count
            continue
        row = []
        for p in range(grid.count):
            src = p if buckets[p] else min(filled, key=lambda q: (abs(q - p), q))
            row.append(nearest_rank(buckets[src], quantile))
        weights[pair] = row
    if missing:
        names = ", ".join(f"{i}->{j}" for i, j in missing)
        raise GraphError(f"no travel-time samples for node pair(s): {names}")
    return weights


@dataclass(frozen=True)
class TimeDependentGraph:
    """Complete directed graph with per-period weights (minutes).

    ``weights[i][j][p]`` is the travel time from node i to node j when leaving
    during period p; ``congestion[j][p]`` the congestion level of j in p.
    Node 0 is the depot.
    """

    nodes: tuple[str, ...]
    weights: tuple[tuple[tuple[float, ...], ...], ...]
    grid: PeriodGrid = field(default_factory=PeriodGrid)
    stay_minutes: tuple[float, ...] = ()
    congestion: tuple[tuple[float, ...], ...] | None = None
    start_time: int | None = None

    def __post_init__(self):
        n, P = len(self.nodes), self.grid.count
        if len(set(self.nodes)) != n:
            raise GraphError("duplicate node names")
        if len(self.weights) != n or any(len(r) != n for r in self.weights):
            raise GraphError(f"weight table must be {n}x{n}")
        for i in range(n):
            for j in range(n):
                w = self.weights[i][j]
                if len(w) != P:
                    raise GraphError(f"{self.nodes[i]}->{self.nodes[j]}: expected {P} periods")
                if any(x < 0 for x in w):
                    raise GraphError(f"{self.nodes[i]}->{self.nodes[j]}: negative weight")
                if i == j and any(x != 0 for x in w):
                    raise GraphError(f"self weight of {self.nodes[i]} must be 0")
        if not self.stay_minutes:
            object.__setattr__(self, "stay_minutes", (0.0,) * n)
        elif len(self.stay_minutes) != n:
            raise GraphError("stay_minutes length mismatch")
        if self.congestion is not None:
            if len(self.congestion) != n or any(len(r) != P for r in self.congestion):
                raise GraphError("congestion table shape mismatch")
            if any(not 0 < t <= 1 for r in self.congestion for t in r):
                raise GraphError("congestion levels must lie in (0, 1]")
        if self.start_time is None:
            object.__setattr__(self, "start_time", self.grid.start)

    @property
    def depot(self) -> str:
        return self.nodes[0]

    def index(self, node: str) -> int:
        try:
            return self.nodes.index(node)
        except ValueError:
            raise GraphError(f"unknown node {node!r}") from None

    def weight(self, i: int, j: int, clock_minutes: float) -> float:
        return self.weights[i][j][period_of(clock_minutes * 60, self.grid)]

    def theta(self, j: int, clock_minutes: float) -> float:
        if self.congestion is None:
            return 1.0
        return self.congestion[j][period_of(clock_minutes * 60, self.grid)]

    @classmethod
    def from_tables(
        cls,
        nodes: Sequence[str],
        weights: Mapping[tuple[str, str], Sequence[float]],
        grid: PeriodGrid,
        stay_minutes: Mapping[str, float] | None = None,
        congestion: Mapping[str, Sequence[float]] | None = None,
        start_time: int | None = None,
    ) -> "TimeDependentGraph":
        nodes = tuple(nodes)
        table = []
        for a in nodes:
            row = []
            for b in nodes:
                if a == b:
                    row.append(tuple(float(x) for x in weights.get((a, b), [0] * grid.count)))
                elif (a, b) not in weights:
                    raise GraphError(f"missing weights for {a}->{b}")
                else:
                    row.append(tuple(float(x) for x in weights[(a, b)]))
            table.append(tuple(row))
        stay = tuple(float((stay_minutes or {}).get(v, 0.0)) for v in nodes)
        cong = None
        if congestion is not None:
            cong = tuple(tuple(float(t) for t in congestion.get(v, [1.0] * grid.count)) for v in nodes)
        return cls(nodes, tuple(table), grid, stay, cong, start_time)

    def to_dict(self) -> dict:
        out = {
            "nodes": list(self.nodes),
            "period_grid": self.grid.to_dict(),
            "start_time": self.start_time,
            "weights": {
                f"{a}->{b}": list(self.weights[i][j])
                for i, a in enumerate(self.nodes)
                for j, b in enumerate(self.nodes)
                if i != j
            },
            "stay_minutes": dict(zip(self.nodes, self.stay_minutes)),
        }
        if self.congestion is not None:
            out["congestion"] = dict(zip(self.nodes, (list(r) for r in self.congestion)))
        return out

    @classmethod
    def from_dict(cls, payload: Mapping) -> "TimeDependentGraph":
        grid = PeriodGrid(**payload.get("period_grid", {}))
        weights = {}
        for key, row in payload["weights"].items():
            a, b = key.split("->")
            weights[(a.strip(), b.strip())] = row
        return cls.from_tables(
            payload["nodes"], weights, grid,
            payload.get("stay_minutes"), payload.get("congestion"), payload.get("start_time"),
        )


def load_graph(path) -> TimeDependentGraph:
    with open(path) as fh:
        return TimeDependentGraph.from_dict(json.load(fh))


def load_fixture(name: str = "kyoto") -> tuple[TimeDependentGraph, dict]:
    """Bundled instance plus its reference routes (may be empty)."""
    text = resources.files("tempotsp").joinpath("data", f"{name}.json").read_text()
    payload = json.loads(text)
    return TimeDependentGraph.from_dict(payload), payload.get("reference_routes", {})


# ------------------------------------------------------------------- tours


@dataclass(frozen=True)
class Tour:
    nodes: tuple[str, ...]
    start_time: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @property
    def closed(self) -> bool:
        return len(self.nodes) > 1 and self.nodes[0] == self.nodes[-1]

    def __str__(self) -> str:
        return "->".join(self.nodes)

    @classmethod
    def parse(cls, text: str, start_time: int | None = None) -> "Tour":
        return cls(tuple(p.strip() for p in text.replace("→", "->").split("->")), start_time)


class Visit(NamedTuple):
    node: str
    arrival: float
    departure: float


class TourCost(NamedTuple):
    total: float
    timeline: list[Visit]


def validate_tour(g: TimeDependentGraph, tour: Tour, complete: bool = False) -> list[int]:
    idx = [g.index(v) for v in tour.nodes]
    if not idx or idx[0] != 0:
        raise GraphError(f"tour must start at depot {g.depot}")
    body = idx[:-1] if tour.closed else idx
    if len(set(body)) != len(body):
        raise GraphError(f"tour {tour} revisits a node")
    if complete and (not tour.closed or len(body) != len(g.nodes)):
        raise GraphError(f"tour {tour} does not visit every node once and return")
    return idx


def path_cost(
    g: TimeDependentGraph, path: Sequence[int], start_minutes: float, stay_multiplier: float = 0.0
) -> TourCost:
    """Walk ``path`` (node indices) from ``start_minutes``; no depot-start check.

    Each leg uses the weight of the period in which it departs. Arriving at a
    non-depot node adds ``stay_multiplier * stay`` before the next departure.
    """
    clock = start_minutes
    timeline = [Visit(g.nodes[path[0]], clock, clock)]
    for a, b in zip(path, path[1:]):
        clock += g.weights[a][b][period_of(clock * 60, g.grid)]
        arrival = clock
        if b != 0:
            clock += stay_multiplier * g.stay_minutes[b]
        timeline.append(Visit(g.nodes[b], arrival, clock))
    return TourCost(clock - start_minutes, timeline)


def tour_cost(g: TimeDependentGraph, tour: Tour, stay_multiplier: float = 0.0) -> TourCost:
    idx = validate_tour(g, tour)
    start = g.start_time if tour.start_time is None else tour.start_time
    return path_cost(g, idx, start / 60.0, stay_multiplier)


def perturb_weights(g: TimeDependentGraph, node: str, factor: float = 2.0) -> TimeDependentGraph:
    """Copy of ``g`` with every edge into or out of ``node`` scaled by ``factor``."""
    k = g.index(node)
    table = tuple(
        tuple(
            tuple(w * factor for w in g.weights[i][j]) if (i == k or j == k) and i != j else g.weights[i][j]
            for j in range(len(g.nodes))
        )
        for i in range(len(g.nodes))
    )
    return replace(g, weights=table)
