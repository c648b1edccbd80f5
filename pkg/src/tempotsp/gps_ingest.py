"""GPS log parsing, mesh assignment, transfer connections and congestion levels."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Iterable, Iterator, NamedTuple, Sequence, TextIO

METERS_PER_DEG_LAT = 110540.0
METERS_PER_DEG_LON = 111320.0

DEFAULT_MIN_DURATION = 60
DEFAULT_MAX_DURATION = 7200
DEFAULT_EPSILON_THETA = 0.01

GPS_HEADER = ["daily_id", "timestamp", "lat", "lon", "residence"]
CONNECTION_HEADER = [
    "dep_row", "dep_col", "dep_time", "arr_row", "arr_col", "arr_time",
    "daily_id", "residence", "date",
]


class ParseError(ValueError):
    """Raised for rows that do not follow the GPS CSV schema."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(ParseError):
    """Raised for well-formed rows holding out-of-range values."""


class Residence(str, enum.Enum):
    CITIZEN = "citizen"
    DOMESTIC_VISITOR = "domestic_visitor"
    FOREIGN_VISITOR = "foreign_visitor"
    UNKNOWN = "unknown"

    def __str__(self) -> str:
        return self.value


class MeshId(NamedTuple):
    row: int
    col: int

    def __str__(self) -> str:
        return f"{self.row},{self.col}"

    @classmethod
    def parse(cls, text: str) -> "MeshId":
        row, col = text.split(",")
        return cls(int(row), int(col))


@dataclass(frozen=True)
class MeshConfig:
    origin_lat: float
    origin_lon: float
    cell_size: float = 50.0

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")


@dataclass(frozen=True)
class GpsLog:
    daily_id: str
    date: date
    seconds: int
    lat: float
    lon: float
    residence: Residence = Residence.UNKNOWN

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of range")
        if not 0 <= self.seconds < 86400:
            raise ValueError(f"seconds {self.seconds} outside the day")

    @property
    def timestamp(self) -> datetime:
        h, rem = divmod(self.seconds, 3600)
        m, s = divmod(rem, 60)
        return datetime(self.date.year, self.date.month, self.date.day, h, m, s)


class LogSet:
    """Logs grouped by daily id, each group ascending in time."""

    def __init__(self, logs: Iterable[GpsLog] = ()):
        groups: dict[str, list[GpsLog]] = {}
        for log in logs:
            groups.setdefault(log.daily_id, []).append(log)
        for logs_ in groups.values():
            logs_.sort(key=lambda g: (g.date, g.seconds))
        self.groups = groups

    def __iter__(self) -> Iterator[GpsLog]:
        for logs in self.groups.values():
            yield from logs

    def __len__(self) -> int:
        return sum(len(v) for v in self.groups.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, LogSet) and self.groups == other.groups


@dataclass(frozen=True)
class TransferConnection:
    dep_stop: MeshId
    dep_time: int
    arr_stop: MeshId
    arr_time: int
    daily_id: str = ""
    residence: Residence = Residence.UNKNOWN
    date: date | None = None

    @property
    def weekday(self) -> bool | None:
        return None if self.date is None else self.date.weekday() < 5


class ConnectionArray(list):
    """List of connections tagged with its sort order on departure time."""

    def __init__(self, connections: Iterable = (), order: str = "descending_departure"):
        if order not in ("ascending_departure", "descending_departure"):
            raise ValueError(f"unknown order {order!r}")
        super().__init__(connections)
        self.order = order

    def _key(self, c):
        return (c.date or date.min, c.dep_time) if hasattr(c, "date") else (date.min, c.dep_time)

    def is_ordered(self) -> bool:
        keys = [self._key(c) for c in self]
        pairs = zip(keys, keys[1:])
        if self.order == "ascending_departure":
            return all(a <= b for a, b in pairs)
        return all(a >= b for a, b in pairs)

    def by_date(self) -> dict:
        out: dict = {}
        for c in self:
            out.setdefault(c.date, ConnectionArray(order=self.order)).append(c)
        return out


def parse_logs(stream: TextIO) -> LogSet:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != GPS_HEADER:
        raise ParseError(1, f"expected header {','.join(GPS_HEADER)}")
    logs = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(GPS_HEADER):
            raise ParseError(lineno, f"expected {len(GPS_HEADER)} fields, got {len(row)}")
        daily_id, ts, lat_s, lon_s, res_s = (cell.strip() for cell in row)
        try:
            stamp = datetime.strptime(ts, "%Y-%m-%dT%H:%M:%S")
            lat, lon = float(lat_s), float(lon_s)
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        try:
            residence = Residence(res_s)
        except ValueError:
            raise ParseError(lineno, f"unknown residence {res_s!r}") from None
        if not daily_id:
            raise ParseError(lineno, "empty daily_id")
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise ValidationError(lineno, f"coordinate ({lat}, {lon}) out of range")
        seconds = stamp.hour * 3600 + stamp.minute * 60 + stamp.second
        logs.append(GpsLog(daily_id, stamp.date(), seconds, lat, lon, residence))
    return LogSet(logs)


def write_logs(logs: Iterable[GpsLog], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(GPS_HEADER)
    for log in logs:
        writer.writerow([
            log.daily_id, log.timestamp.strftime("%Y-%m-%dT%H:%M:%S"),
            f"{log.lat:.7f}", f"{log.lon:.7f}", log.residence.value,
        ])


def local_meters(lat: float, lon: float, cfg: MeshConfig) -> tuple[float, float]:
    """(east, north) offset in meters from the mesh origin."""
    east = (lon - cfg.origin_lon) * METERS_PER_DEG_LON * math.cos(math.radians(cfg.origin_lat))
    north = (lat - cfg.origin_lat) * METERS_PER_DEG_LAT
    return east, north


def _cell_index(meters: float, cell_size: float) -> int:
    # guards against x.999999... produced by degree round trips
    return math.floor(meters / cell_size + 1e-9)


def assign_mesh(lat: float, lon: float, cfg: MeshConfig) -> MeshId:
    east, north = local_meters(lat, lon, cfg)
    return MeshId(_cell_index(north, cfg.cell_size), _cell_index(east, cfg.cell_size))


def mesh_center(mesh: MeshId, cfg: MeshConfig) -> tuple[float, float]:
    """Latitude/longitude of the center of a mesh cell."""
    north = (mesh.row + 0.5) * cfg.cell_size
    east = (mesh.col + 0.5) * cfg.cell_size
    lat = cfg.origin_lat + north / METERS_PER_DEG_LAT
    lon = cfg.origin_lon + east / (METERS_PER_DEG_LON * math.cos(math.radians(cfg.origin_lat)))
    return lat, lon


def build_connections(
    logs: LogSet,
    cfg: MeshConfig,
    min_duration: int = DEFAULT_MIN_DURATION,
    max_duration: int = DEFAULT_MAX_DURATION,
) -> ConnectionArray:
    """Turn consecutive same-device logs in different meshes into connections.

    Pairs on different dates, within one mesh, or with a gap outside
    ``[min_duration, max_duration]`` are skipped. The result is sorted by
    descending (date, departure time).
    """
    conns = []
    for daily_id, group in logs.groups.items():
        if not group:
            continue
        residence = group[0].residence
        meshes = [assign_mesh(g.lat, g.lon, cfg) for g in group]
        for (a, ma), (b, mb) in zip(zip(group, meshes), zip(group[1:], meshes[1:])):
            if a.date != b.date or ma == mb:
                continue
            gap = b.seconds - a.seconds
            if gap <= 0 or not min_duration <= gap <= max_duration:
                continue
            conns.append(TransferConnection(ma, a.seconds, mb, b.seconds, daily_id, residence, a.date))
    conns.sort(key=lambda c: (c.date, c.dep_time), reverse=True)
    return ConnectionArray(conns, order="descending_departure")


def write_connections(conns: Iterable[TransferConnection], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CONNECTION_HEADER)
    for c in conns:
        writer.writerow([
            c.dep_stop.row, c.dep_stop.col, c.dep_time,
            c.arr_stop.row, c.arr_stop.col, c.arr_time,
            c.daily_id, c.residence.value, c.date.isoformat() if c.date else "",
        ])


def read_connections(stream: TextIO) -> ConnectionArray:
    reader = csv.DictReader(stream)
    if reader.fieldnames != CONNECTION_HEADER:
        raise ParseError(1, f"expected header {','.join(CONNECTION_HEADER)}")
    conns = []
    for lineno, row in enumerate(reader, start=2):
        try:
            conns.append(TransferConnection(
                MeshId(int(row["dep_row"]), int(row["dep_col"])), int(row["dep_time"]),
                MeshId(int(row["arr_row"]), int(row["arr_col"])), int(row["arr_time"]),
                row["daily_id"], Residence(row["residence"]),
                date.fromisoformat(row["date"]) if row["date"] else None,
            ))
        except (TypeError, ValueError) as exc:
            raise ParseError(lineno, str(exc)) from None
    arr = ConnectionArray(conns, "descending_departure")
    if not arr.is_ordered():
        arr.sort(key=arr._key, reverse=True)
    return arr


# ---------------------------------------------------------------- congestion


@dataclass
class CongestionTable:
    nodes: list[str]
    counts: dict[str, list[int]]
    theta: dict[str, list[float]]
    neutral: set[str] = field(default_factory=set)

    def level(self, node: str, period: int) -> float:
        return self.theta[node][period]

    def max_count(self, node: str) -> int:
        return max(self.counts[node])

    def to_json(self) -> str:
        payload = {
            "theta": {n: {str(p): t for p, t in enumerate(self.theta[n])} for n in self.nodes},
            "counts": {n: self.counts[n] for n in self.nodes},
            "neutral": sorted(self.neutral),
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CongestionTable":
        payload = json.loads(text)
        theta_map = payload["theta"] if "theta" in payload else payload
        nodes = list(theta_map)
        theta = {n: [float(theta_map[n][k]) for k in sorted(theta_map[n], key=int)] for n in nodes}
        counts = payload.get("counts", {n: [] for n in nodes})
        return cls(nodes, counts, theta, set(payload.get("neutral", ())))


def congestion_from_counts(
    counts: dict[str, Sequence[int]], epsilon_theta: float = DEFAULT_EPSILON_THETA
) -> CongestionTable:
    """Normalize per-period stay counts by each node's own maximum.

    Levels are floored at ``epsilon_theta``; a node that never has anyone
    staying gets a neutral level of 1 in every period.
    """
    theta, neutral = {}, set()
    for node, row in counts.items():
        peak = max(row) if len(row) else 0
        if peak <= 0:
            theta[node] = [1.0] * len(row)
            neutral.add(node)
        else:
            theta[node] = [max(c / peak, epsilon_theta) for c in row]
    return CongestionTable(list(counts), {n: list(r) for n, r in counts.items()}, theta, neutral)


def compute_congestion(
    logs: Iterable[GpsLog],
    nodes: dict[str, Iterable[MeshId]],
    grid,
    cfg: MeshConfig,
    epsilon_theta: float = DEFAULT_EPSILON_THETA,
) -> CongestionTable:
    """Count distinct daily ids seen inside each node region per period.

    ``grid`` is a PeriodGrid; logs outside the grid's time span are ignored.
    """
    mesh_to_node: dict[MeshId, list[str]] = {}
    for name, meshes in nodes.items():
        for m in meshes:
            mesh_to_node.setdefault(MeshId(*m), []).append(name)
    seen: dict[str, list[set]] = {n: [set() for _ in range(grid.count)] for n in nodes}
    for log in logs:
        period = grid.index(log.seconds)
        if period is None:
            continue
        for name in mesh_to_node.get(assign_mesh(log.lat, log.lon, cfg), ()):
            seen[name][period].add(log.daily_id)
    counts = {n: [len(s) for s in seen[n]] for n in nodes}
    return congestion_from_counts(counts, epsilon_theta)


def node_regions(spec: dict, cfg: MeshConfig | None = None) -> dict[str, frozenset[MeshId]]:
    """Resolve a nodes mapping into mesh sets.

    Each node is either ``{"meshes": [[row, col], ...]}`` or
    ``{"lat": .., "lon": .., "radius": k}``, the latter covering the
    (2k+1) x (2k+1) block of cells around the point (needs ``cfg``).
    """
    regions = {}
    for name, d in spec.items():
        if "meshes" in d:
            regions[name] = frozenset(MeshId(int(r), int(c)) for r, c in d["meshes"])
            continue
        if cfg is None:
            raise ValueError(f"node {name} is given by coordinates but no mesh origin is configured")
        center = assign_mesh(d["lat"], d["lon"], cfg)
        k = int(d.get("radius", 0))
        regions[name] = frozenset(
            MeshId(center.row + dr, center.col + dc) for dr in range(-k, k + 1) for dc in range(-k, k + 1)
        )
    return regions
