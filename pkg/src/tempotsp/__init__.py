"""Temporal mobility networks from GPS logs and a time-dependent TSP solved by ant colonies."""

from .gps_ingest import MeshConfig, MeshId, build_connections, compute_congestion, parse_logs
from .temporal_net import ParetoEntry, csa_earliest_arrival, mcpcsa_profiles, pcsa_profiles
from .tdtsp_model import PeriodGrid, TimeDependentGraph, Tour, derive_weights, load_fixture, tour_cost
from .aco_solver import AcoParams, solve
from .exact_oracle import brute_force

__version__ = "0.1.0"
