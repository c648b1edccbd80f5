"""Connection scan algorithms: earliest arrival, Pareto profiles, transfer-aware profiles.

Connections are any objects exposing ``dep_stop``, ``dep_time``, ``arr_stop``
and ``arr_time``. Stops only need to be hashable, so tests can use letters
while the pipeline uses :class:`~tempotsp.gps_ingest.MeshId`.
"""

from __future__ import annotations

import bisect
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Hashable, Iterable, NamedTuple, Sequence

from .gps_ingest import MeshId, Residence

INF = math.inf


class Connection(NamedTuple):
    dep_stop: Hashable
    dep_time: float
    arr_stop: Hashable
    arr_time: float


class ParetoEntry(NamedTuple):
    dep_time: float
    arr_time: float
    transfers: int | None = None


def dominates(a: ParetoEntry, b: ParetoEntry) -> bool:
    """Later-or-equal departure, earlier-or-equal arrival, no more transfers; one strict."""
    if a.dep_time < b.dep_time or a.arr_time > b.arr_time:
        return False
    if a.transfers is not None and b.transfers is not None:
        if a.transfers > b.transfers:
            return False
        return (a.dep_time, a.arr_time, a.transfers) != (b.dep_time, b.arr_time, b.transfers)
    return (a.dep_time, a.arr_time) != (b.dep_time, b.arr_time)


def _same(a: ParetoEntry, b: ParetoEntry) -> bool:
    return a.dep_time == b.dep_time and a.arr_time == b.arr_time and a.transfers == b.transfers


def pareto_insert(entries: list[ParetoEntry], cand: ParetoEntry) -> bool:
    """Insert ``cand`` into a non-dominated list kept in descending departure order.

    Returns False (list untouched) if an existing entry dominates or equals
    ``cand``; otherwise removes the entries ``cand`` dominates and inserts it.
    """
    for e in entries:
        if _same(e, cand) or dominates(e, cand):
            return False
    entries[:] = [e for e in entries if not dominates(cand, e)]
    # descending dep order; equal departures keep insertion order
    keys = [-e.dep_time for e in entries]
    entries.insert(bisect.bisect_right(keys, -cand.dep_time), cand)
    return True


def csa_earliest_arrival(
    conns: Iterable, origin: Hashable, depart: float, slack: float = 0
) -> dict:
    """Earliest arrival label per reachable stop, in one scan by departure time.

    Unreached stops are absent from the result (their label is +inf).
    """
    labels: dict = defaultdict(lambda: INF)
    labels[origin] = depart
    for c in sorted(conns, key=lambda c: c.dep_time):
        ready = labels[c.dep_stop]
        if c.dep_stop != origin:
            ready += slack
        if c.dep_time >= ready and c.arr_time < labels[c.arr_stop]:
            labels[c.arr_stop] = c.arr_time
    return {stop: t for stop, t in labels.items() if t < INF}


def _in_dest(dest) -> Callable[[Hashable], bool]:
    if isinstance(dest, (set, frozenset)):
        return dest.__contains__
    return lambda stop: stop == dest


def pcsa_profiles(conns: Iterable, dest, slack: float = 0) -> dict[Hashable, list[ParetoEntry]]:
    """Pareto (departure, arrival) profiles of every stop toward ``dest``.

    ``dest`` is a single stop or a set of stops acting as one virtual target.
    Only stops with a non-empty profile appear in the result.
    """
    if slack < 0:
        raise ValueError("slack must be non-negative")
    at_dest = _in_dest(dest)
    profiles: dict[Hashable, list[ParetoEntry]] = defaultdict(list)
    for c in sorted(conns, key=lambda c: c.dep_time, reverse=True):
        if at_dest(c.arr_stop):
            best = c.arr_time
        else:
            best = INF
            ready = c.arr_time + slack
            for e in profiles.get(c.arr_stop, ()):
                if e.dep_time >= ready and e.arr_time < best:
                    best = e.arr_time
        if best < INF:
            pareto_insert(profiles[c.dep_stop], ParetoEntry(c.dep_time, best))
    return {s: p for s, p in profiles.items() if p}


def mcpcsa_profiles(conns: Iterable, dest, slack: float = 0) -> dict[Hashable, list[ParetoEntry]]:
    """Like :func:`pcsa_profiles`, additionally minimizing the number of transfers."""
    if slack < 0:
        raise ValueError("slack must be non-negative")
    at_dest = _in_dest(dest)
    profiles: dict[Hashable, list[ParetoEntry]] = defaultdict(list)
    for c in sorted(conns, key=lambda c: c.dep_time, reverse=True):
        if at_dest(c.arr_stop):
            cands = [ParetoEntry(c.dep_time, c.arr_time, 0)]
        else:
            ready = c.arr_time + slack
            cands = [
                ParetoEntry(c.dep_time, e.arr_time, e.transfers + 1)
                for e in profiles.get(c.arr_stop, ())
                if e.dep_time >= ready
            ]
        if cands:
            target = profiles[c.dep_stop]
            for cand in cands:
                pareto_insert(target, cand)
    return {s: p for s, p in profiles.items() if p}


# ------------------------------------------------------------------ grouping


@dataclass
class ProfileGroup:
    """Profiles computed over the connections of one date and residence class."""

    date: date | None
    residence: Residence | None
    profiles: dict[Hashable, list[ParetoEntry]] = field(default_factory=dict)

    @property
    def weekday(self) -> bool | None:
        return None if self.date is None else self.date.weekday() < 5


def profile_groups(
    conns: Iterable, dest, *, transfers: bool = False, slack: float = 0, by_residence: bool = True
) -> list[ProfileGroup]:
    """Run the profile scan separately per (date, residence) subset of connections.

    Connections of different days never chain, and subgroup attributes are
    carried by the group rather than by individual journeys.
    """
    buckets: dict[tuple, list] = defaultdict(list)
    for c in conns:
        res = getattr(c, "residence", None) if by_residence else None
        buckets[(getattr(c, "date", None), res)].append(c)
    scan = mcpcsa_profiles if transfers else pcsa_profiles
    groups = []
    for (d, res) in sorted(buckets, key=lambda k: (k[0] or date.min, str(k[1] or ""))):
        groups.append(ProfileGroup(d, res, scan(buckets[(d, res)], dest, slack=slack)))
    return groups


def entries_from(groups: Iterable[ProfileGroup], origins: Iterable[Hashable]) -> list[ParetoEntry]:
    """Pool the profile entries of all origin stops over all groups."""
    stops = list(origins)
    out = []
    for g in groups:
        for s in stops:
            out.extend(g.profiles.get(s, ()))
    return out


def profiles_to_json(profiles: dict) -> dict:
    """``{"row,col": [[dep, arr(, transfers)], ...]}``."""
    out = {}
    for stop, entries in profiles.items():
        out[str(stop)] = [
            [e.dep_time, e.arr_time] if e.transfers is None else [e.dep_time, e.arr_time, e.transfers]
            for e in entries
        ]
    return out


def profiles_from_json(payload: dict, stop_type: Callable = MeshId.parse) -> dict:
    return {
        stop_type(k): [ParetoEntry(*row) for row in rows]
        for k, rows in payload.items()
    }


def dump_groups(groups: Sequence[ProfileGroup], dest_label: str, dest_meshes, transfers: bool) -> str:
    payload = {
        "dest": dest_label,
        "dest_meshes": sorted([list(m) for m in dest_meshes]),
        "transfers": transfers,
        "groups": [
            {
                "date": g.date.isoformat() if g.date else None,
                "residence": g.residence.value if g.residence else None,
                "profiles": profiles_to_json(g.profiles),
            }
            for g in groups
        ],
    }
    return json.dumps(payload, sort_keys=True)


def load_groups(text: str) -> tuple[dict, list[ProfileGroup]]:
    payload = json.loads(text)
    groups = [
        ProfileGroup(
            date.fromisoformat(g["date"]) if g.get("date") else None,
            Residence(g["residence"]) if g.get("residence") else None,
            profiles_from_json(g["profiles"]),
        )
        for g in payload["groups"]
    ]
    meta = {k: v for k, v in payload.items() if k != "groups"}
    return meta, groups
