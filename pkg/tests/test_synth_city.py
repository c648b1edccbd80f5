import io
from datetime import date

import pytest
from hypothesis import given, settings, strategies as st

from tempotsp.gps_ingest import MeshConfig, build_connections, compute_congestion, write_logs
from tempotsp.synth_city import CitySpec, Corridor, expected_log_count, generate
from tempotsp.tdtsp_model import PeriodGrid, derive_weights
from tempotsp.temporal_net import entries_from, profile_groups

MESH = MeshConfig(35.0, 135.7, 50.0)
LANDMARKS = {"A": (35.0012, 135.7012), "B": (35.0102, 135.7203), "C": (35.0051, 135.7301)}


def city(**kw):
    base = dict(mesh=MESH, rows=40, cols=60, landmarks=LANDMARKS, grid=PeriodGrid(28800, 7200, 2))
    base.update(kw)
    return CitySpec(**base)


def dump(logs):
    buf = io.StringIO()
    write_logs(logs, buf)
    return buf.getvalue()


def test_single_noiseless_trip():
    logs = list(generate(city(corridors=[Corridor("A", "B", (17.0, 17.0), (1, 0))])))
    assert len(logs) == 2
    a, b = logs
    assert b.seconds - a.seconds == 17 * 60
    assert a.daily_id == b.daily_id


def test_byte_identical():
    spec = city(corridors=[Corridor("A", "B", (30.0, 10.0), (20, 20))], stays={"C": [3, 4]},
                lag_seconds=90, dropout=0.1, seed=7)
    assert dump(generate(spec)) == dump(generate(spec))
    assert dump(generate(spec)) != dump(generate(city(**{**spec.__dict__, "seed": 8})))


@given(st.lists(st.integers(0, 6), min_size=2, max_size=2), st.lists(st.integers(0, 6), min_size=2, max_size=2),
       st.integers(0, 3), st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_closed_form_count(trips, stays, waypoints, stay_logs, days):
    spec = city(
        corridors=[Corridor("A", "B", (30.0, 10.0), tuple(trips)), Corridor("B", "C", (5.0, 6.0), tuple(trips))],
        stays={"A": stays}, waypoints=waypoints, stay_logs=stay_logs,
        dates=[date(2019, 4, d + 1) for d in range(days)], lag_seconds=30,
    )
    assert len(generate(spec)) == expected_log_count(spec)


def test_recovers_planted_weights():
    spec = city(corridors=[Corridor("A", "B", (30.0, 10.0), (200, 200))], lag_seconds=60, seed=11)
    conns = build_connections(generate(spec), MESH)
    a, b = spec.landmark_mesh("A"), spec.landmark_mesh("B")
    groups = profile_groups(conns, frozenset({b}))
    row = derive_weights({("A", "B"): entries_from(groups, [a])}, spec.grid)[("A", "B")]
    assert row == pytest.approx([30, 10], abs=2)


def test_congestion_peak_recovered():
    stays = {"A": [10, 60, 25], "B": [80, 20, 5], "C": [15, 15, 70]}
    spec = city(grid=PeriodGrid(28800, 7200, 3), stays=stays, dropout=0.2, seed=3,
                corridors=[Corridor("A", "C", (12.0, 12.0, 12.0), (4, 4, 4))])
    regions = {k: [spec.landmark_mesh(k)] for k in stays}
    table = compute_congestion(generate(spec), regions, spec.grid, MESH)
    for node, row in stays.items():
        assert table.theta[node].index(1.0) == row.index(max(row))


def test_validation():
    with pytest.raises(ValueError):
        city(landmarks={"far": (36.0, 135.7)})
    with pytest.raises(ValueError):
        city(corridors=[Corridor("A", "Z", (1.0, 1.0), (1, 1))])
    with pytest.raises(ValueError):
        city(corridors=[Corridor("A", "B", (0.0, 1.0), (1, 1))])
    with pytest.raises(ValueError):
        city(dropout=1.5)


def test_from_json():
    spec = CitySpec.from_json("""{
      "mesh": {"origin_lat": 35.0, "origin_lon": 135.7, "cell_size": 50},
      "grid": {"rows": 40, "cols": 60},
      "landmarks": {"A": {"lat": 35.0012, "lon": 135.7012}, "B": {"lat": 35.0102, "lon": 135.7203}},
      "corridors": [{"origin": "A", "dest": "B", "minutes": [20, 25], "trips": 3}],
      "period_grid": {"start": 28800, "period_length": 7200, "count": 2},
      "noise": {"lag_seconds": 0, "dropout": 0}, "seed": 1
    }""")
    assert spec.corridors[0].trips == (3, 3)
    assert len(generate(spec)) == 12
