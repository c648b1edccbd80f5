"""Travel-time samples from profiles, hourly means, densities and subgroup filters."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date
from typing import Hashable, Iterable, Sequence

import numpy as np

from .gps_ingest import GpsLog, Residence
from .temporal_net import ParetoEntry, ProfileGroup

DEFAULT_CUTOFF = 7200
DEFAULT_BIN_WIDTH = 300
DEFAULT_STEP = 600


@dataclass(frozen=True)
class TravelTimeSample:
    origin: Hashable
    t0: float
    dep_time: float
    arr_time: float
    date: date | None = None
    residence: Residence | None = None

    @property
    def travel_time(self) -> float:
        """Arrival minus query time, waiting included."""
        return self.arr_time - self.t0

    @property
    def pure_time(self) -> float:
        return self.arr_time - self.dep_time

    @property
    def weekday(self) -> bool | None:
        return None if self.date is None else self.date.weekday() < 5

    @property
    def hour(self) -> int:
        return int(self.t0 // 3600) % 24


def travel_time_at(
    profile: Sequence[ParetoEntry],
    t0: float,
    origin: Hashable = None,
    date: date | None = None,
    residence: Residence | None = None,
) -> TravelTimeSample | None:
    """Earliest-arriving journey among those leaving at or after ``t0``."""
    best = None
    for e in profile:
        if e.dep_time < t0:
            continue
        if best is None or e.arr_time < best.arr_time or (
            e.arr_time == best.arr_time and e.dep_time > best.dep_time
        ):
            best = e
    if best is None:
        return None
    return TravelTimeSample(origin, t0, best.dep_time, best.arr_time, date, residence)


def query_grid(start: float = 0, end: float = 86400, step: float = DEFAULT_STEP) -> list[float]:
    if step <= 0:
        raise ValueError("step must be positive")
    return [float(t) for t in np.arange(start, end, step)]


def sample_groups(
    groups: Iterable[ProfileGroup],
    origins: Iterable[Hashable],
    times: Sequence[float],
    label: Hashable = None,
) -> list[TravelTimeSample]:
    """Sample every group's origin profile at each query time.

    Several origin stops (a multi-mesh node) are merged into one profile
    per group before sampling.
    """
    origins = list(origins)
    samples = []
    for g in groups:
        merged = [e for s in origins for e in g.profiles.get(s, ())]
        if not merged:
            continue
        for t0 in times:
            s = travel_time_at(merged, t0, label if label is not None else origins[0], g.date, g.residence)
            if s is not None:
                samples.append(s)
    return samples


def mean_travel_time_by_hour(
    samples: Iterable[TravelTimeSample], outlier_cutoff: float = DEFAULT_CUTOFF
) -> dict[int, float]:
    """Mean waiting-inclusive travel time in minutes per query hour."""
    by_hour: dict[int, list[float]] = defaultdict(list)
    for s in samples:
        if s.travel_time > outlier_cutoff:
            continue
        by_hour[s.hour].append(s.travel_time)
    return {h: sum(v) / len(v) / 60.0 for h, v in sorted(by_hour.items())}


@dataclass
class DensityFunction:
    bin_width: float
    bins: list[tuple[float, float]] = field(default_factory=list)
    sample_count: int = 0

    def integral(self) -> float:
        return math.fsum(d * self.bin_width for _, d in self.bins)


def _values(samples: Iterable[TravelTimeSample], field_: str) -> np.ndarray:
    if field_ == "pure":
        return np.array([s.pure_time for s in samples], dtype=float)
    if field_ == "waiting_inclusive":
        return np.array([s.travel_time for s in samples], dtype=float)
    raise ValueError(f"unknown field {field_!r}")


def density(
    samples: Iterable[TravelTimeSample], field: str = "pure", bin_width: float = DEFAULT_BIN_WIDTH
) -> DensityFunction:
    """Histogram normalized to unit area, bins aligned on multiples of ``bin_width``."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    values = _values(samples, field)
    if values.size == 0:
        return DensityFunction(bin_width)
    idx = np.floor(values / bin_width).astype(np.int64)
    lo = int(idx.min())
    counts = np.bincount(idx - lo)
    n = values.size
    bins = [((lo + k) * bin_width, c / (n * bin_width)) for k, c in enumerate(counts)]
    return DensityFunction(bin_width, bins, n)


def smooth_density(
    samples: Iterable[TravelTimeSample], points: Sequence[float], field: str = "pure"
) -> list[float]:
    """Gaussian kernel estimate (Silverman bandwidth) evaluated at ``points``."""
    from scipy.stats import gaussian_kde

    values = _values(samples, field)
    if values.size < 2 or np.ptp(values) == 0:
        raise ValueError("kernel smoothing needs at least two distinct samples")
    kde = gaussian_kde(values, bw_method="silverman")
    return [float(v) for v in kde(np.asarray(points, dtype=float))]


@dataclass(frozen=True)
class SubgroupFilter:
    """Conjunction of optional clauses; ``None`` means any value."""

    months: frozenset[int] | None = None
    residences: frozenset[Residence] | None = None
    day_type: str | None = None  # "weekday" or "weekend"
    window: tuple[float, float] | None = None  # [start, end) on t0

    def __post_init__(self):
        if self.window is not None and not self.window[0] < self.window[1]:
            raise ValueError("window start must precede end")
        if self.day_type not in (None, "weekday", "weekend"):
            raise ValueError(f"day_type must be weekday or weekend, got {self.day_type!r}")
        if self.months is not None:
            object.__setattr__(self, "months", frozenset(self.months))
        if self.residences is not None:
            object.__setattr__(self, "residences", frozenset(Residence(r) for r in self.residences))

    def matches(self, s: TravelTimeSample) -> bool:
        if self.months is not None and (s.date is None or s.date.month not in self.months):
            return False
        if self.residences is not None and s.residence not in self.residences:
            return False
        if self.day_type is not None:
            if s.weekday is None or s.weekday != (self.day_type == "weekday"):
                return False
        if self.window is not None and not self.window[0] <= s.t0 < self.window[1]:
            return False
        return True


def filter_samples(samples: Iterable[TravelTimeSample], *filters: SubgroupFilter) -> list[TravelTimeSample]:
    """Samples satisfying every filter given."""
    return [s for s in samples if all(f.matches(s) for f in filters)]


def log_counts_by_hour(logs: Iterable[GpsLog]) -> dict[int, int]:
    counts = Counter(log.seconds // 3600 for log in logs)
    return dict(sorted(counts.items()))
