"""Synthetic GPS logs over a grid city with planted travel times and stay patterns."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping

import numpy as np

from .gps_ingest import GpsLog, LogSet, MeshConfig, MeshId, Residence, assign_mesh, mesh_center
from .tdtsp_model import PeriodGrid


@dataclass(frozen=True)
class Corridor:
    origin: str
    dest: str
    minutes: tuple[float, ...]
    trips: tuple[int, ...]


@dataclass
class CitySpec:
    mesh: MeshConfig
    rows: int
    cols: int
    landmarks: dict[str, tuple[float, float]]
    corridors: list[Corridor] = field(default_factory=list)
    stays: dict[str, list[int]] = field(default_factory=dict)
    grid: PeriodGrid = field(default_factory=PeriodGrid)
    dates: list[date] = field(default_factory=lambda: [date(2019, 4, 1)])
    lag_seconds: float = 0.0
    dropout: float = 0.0
    stay_logs: int = 2
    waypoints: int = 0
    residence_mix: dict[Residence, float] = field(default_factory=lambda: {Residence.CITIZEN: 1.0})
    seed: int = 0

    def __post_init__(self):
        P = self.grid.count
        if not 0 <= self.dropout <= 1:
            raise ValueError("dropout must be a probability")
        if self.lag_seconds < 0 or self.stay_logs < 1 or self.waypoints < 0:
            raise ValueError("lag_seconds, stay_logs and waypoints must be non-negative (stay_logs >= 1)")
        for name, (lat, lon) in self.landmarks.items():
            m = assign_mesh(lat, lon, self.mesh)
            if not (0 <= m.row < self.rows and 0 <= m.col < self.cols):
                raise ValueError(f"landmark {name} lies outside the {self.rows}x{self.cols} grid")
        longest = 0.0
        for c in self.corridors:
            if c.origin not in self.landmarks or c.dest not in self.landmarks:
                raise ValueError(f"corridor {c.origin}->{c.dest} references an unknown landmark")
            if len(c.minutes) != P or len(c.trips) != P:
                raise ValueError(f"corridor {c.origin}->{c.dest} needs {P} periods")
            if any(m <= 0 for m in c.minutes) or any(t < 0 for t in c.trips):
                raise ValueError("travel minutes must be positive and trip counts non-negative")
            longest = max(longest, max(c.minutes))
        for name, row in self.stays.items():
            if name not in self.landmarks or len(row) != P:
                raise ValueError(f"stay intensity for {name} must name a landmark and cover {P} periods")
        if self.grid.end + longest * 60 + 2 * self.lag_seconds >= 86400:
            raise ValueError("trips would cross midnight")
        total = sum(self.residence_mix.values())
        if total <= 0:
            raise ValueError("residence_mix must have positive weight")

    def landmark_mesh(self, name: str) -> MeshId:
        return assign_mesh(*self.landmarks[name], self.mesh)

    def anchor(self, name: str) -> tuple[float, float]:
        """Center of the landmark's cell; logs placed there survive CSV rounding."""
        return mesh_center(self.landmark_mesh(name), self.mesh)

    @classmethod
    def from_dict(cls, d: Mapping) -> "CitySpec":
        P = PeriodGrid(**d.get("period_grid", {}))
        corridors = []
        for c in d.get("corridors", []):
            trips = c["trips"]
            if isinstance(trips, int):
                trips = [trips] * P.count
            corridors.append(Corridor(c["origin"], c["dest"], tuple(c["minutes"]), tuple(trips)))
        noise = d.get("noise", {})
        return cls(
            mesh=MeshConfig(**d["mesh"]),
            rows=d["grid"]["rows"],
            cols=d["grid"]["cols"],
            landmarks={k: (v["lat"], v["lon"]) for k, v in d["landmarks"].items()},
            corridors=corridors,
            stays={k: list(v) for k, v in d.get("stays", {}).items()},
            grid=P,
            dates=[date.fromisoformat(x) for x in d.get("dates", ["2019-04-01"])],
            lag_seconds=noise.get("lag_seconds", 0.0),
            dropout=noise.get("dropout", 0.0),
            stay_logs=d.get("stay_logs", 2),
            waypoints=d.get("waypoints", 0),
            residence_mix={Residence(k): v for k, v in d.get("residence_mix", {"citizen": 1.0}).items()},
            seed=d.get("seed", 0),
        )

    @classmethod
    def from_json(cls, text: str) -> "CitySpec":
        return cls.from_dict(json.loads(text))


def expected_log_count(spec: CitySpec) -> int:
    """Number of logs ``generate`` emits when dropout is zero."""
    per_day = sum(sum(c.trips) * (2 + spec.waypoints) for c in spec.corridors)
    per_day += sum(sum(row) * spec.stay_logs for row in spec.stays.values())
    return per_day * len(spec.dates)


def generate(spec: CitySpec) -> LogSet:
    """Deterministic (per ``spec.seed``) synthetic log set.

    Each corridor trip is one device-day with a log at the origin landmark and
    one at the destination, optionally with evenly spaced waypoints between.
    Both ends are shifted by an independent measurement lag drawn uniformly
    from the integers in ``[0, lag_seconds]``. Each stay is a device logging ``stay_logs``
    times at its landmark within the period.
    """
    rng = np.random.default_rng(spec.seed)
    residences = sorted(spec.residence_mix, key=lambda r: r.value)
    weights = np.array([spec.residence_mix[r] for r in residences], dtype=float)
    weights /= weights.sum()
    L = spec.grid.period_length
    logs: list[GpsLog] = []

    def keep() -> bool:
        return spec.dropout == 0 or rng.random() >= spec.dropout

    def resident() -> Residence:
        return residences[int(rng.choice(len(residences), p=weights))]

    for day in spec.dates:
        serial = 0
        for c in spec.corridors:
            (lat0, lon0), (lat1, lon1) = spec.anchor(c.origin), spec.anchor(c.dest)
            for p in range(spec.grid.count):
                travel = c.minutes[p] * 60.0
                period_start = spec.grid.start + p * L
                for _ in range(c.trips[p]):
                    serial += 1
                    did = f"{day.isoformat()}-t{serial:07d}"
                    res = resident()
                    dep = period_start + int(rng.integers(L))
                    lags = rng.integers(0, int(spec.lag_seconds) + 1, size=2)
                    k = spec.waypoints
                    points = [(dep + int(lags[0]), lat0, lon0)]
                    for w in range(1, k + 1):
                        f = w / (k + 1)
                        points.append((dep + f * travel, lat0 + f * (lat1 - lat0), lon0 + f * (lon1 - lon0)))
                    points.append((dep + travel + int(lags[1]), lat1, lon1))
                    for t, lat, lon in points:
                        if keep():
                            logs.append(GpsLog(did, day, int(round(t)), lat, lon, res))
        serial = 0
        for name in sorted(spec.stays):
            lat, lon = spec.anchor(name)
            for p, intensity in enumerate(spec.stays[name]):
                period_start = spec.grid.start + p * L
                for _ in range(intensity):
                    serial += 1
                    did = f"{day.isoformat()}-s{serial:07d}"
                    res = resident()
                    times = np.sort(period_start + rng.random(spec.stay_logs) * (L - 1))
                    for t in times:
                        if keep():
                            logs.append(GpsLog(did, day, int(t), lat, lon, res))
    logs.sort(key=lambda g: (g.daily_id, g.seconds))
    return LogSet(logs)
