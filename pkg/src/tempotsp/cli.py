"""Command line pipeline: each subcommand runs one stage and writes files into --out."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import aco_solver, exact_oracle, gps_ingest, mobility_analysis, synth_city, tdtsp_model, temporal_net
from .gps_ingest import MeshConfig, MeshId

log = logging.getLogger("tempotsp")

# config sections whose keys are renamed onto flag destinations
_SECTION_KEYS = {
    "mesh": {},
    "aco": {"exploration": "exploration_prob"},
    "period_grid": {"start": "grid_start", "count": "periods"},
}


class CliError(Exception):
    pass


def _hours(text: str) -> float:
    """Seconds from '8', '8.5' or '08:30'."""
    if ":" in text:
        h, m = text.split(":")
        return int(h) * 3600 + int(m) * 60
    return float(text) * 3600


def _add_mesh(p):
    g = p.add_argument_group("mesh")
    g.add_argument("--origin-lat", type=float, help="latitude of the mesh origin (south-west corner)")
    g.add_argument("--origin-lon", type=float, help="longitude of the mesh origin")
    g.add_argument("--cell-size", type=float, default=50.0, help="mesh edge in meters (default 50)")


def _add_grid(p):
    g = p.add_argument_group("period grid")
    g.add_argument("--grid-start", type=int, default=8 * 3600, help="first period start, seconds (default 28800)")
    g.add_argument("--period-length", type=int, default=7200, help="period length, seconds (default 7200)")
    g.add_argument("--periods", type=int, default=5, help="number of periods (default 5)")


def _add_graph(p):
    g = p.add_argument_group("graph")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--fixture", choices=["kyoto"], help="bundled instance")
    src.add_argument("--weights", help="weight table JSON")
    g.add_argument("--congestion", help="congestion JSON overriding the graph's levels")
    g.add_argument("--no-congestion", action="store_true", help="ignore congestion (theta = 1)")
    g.add_argument("--stay-multiplier", type=float, default=1.0, help="scale on stay times (default 1.0)")
    g.add_argument("--perturb-node", help="node whose incident weights are scaled")
    g.add_argument("--factor", type=float, default=2.0, help="scale for --perturb-node (default 2)")


_GLOBAL = ("config", "seed", "out", "verbose")


def _add_global(p, defaults: bool):
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--config", default=d(None), help="JSON file supplying defaults for any flag")
    p.add_argument("--seed", type=int, default=d(None), help="RNG seed for solve and synth")
    p.add_argument("--out", default=d("."), help="output directory (default .)")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="tempotsp", description=__doc__)
    _add_global(parser, defaults=True)
    # the same flags after the subcommand; SUPPRESS keeps them from clobbering earlier values
    common = argparse.ArgumentParser(add_help=False)
    _add_global(common, defaults=False)
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["ingest"] = sub.add_parser("ingest", parents=[common], help="GPS CSV -> transfer connections CSV")
    p.add_argument("--logs", required=True, help="GPS log CSV")
    _add_mesh(p)
    p.add_argument("--min-duration", type=int, default=gps_ingest.DEFAULT_MIN_DURATION)
    p.add_argument("--max-duration", type=int, default=gps_ingest.DEFAULT_MAX_DURATION)
    p.add_argument("--output", default="connections.csv")

    p = subs["profiles"] = sub.add_parser("profiles", parents=[common], help="connections -> Pareto profiles toward a destination")
    p.add_argument("--connections", required=True)
    p.add_argument("--dest", required=True, help="node name from --nodes, or 'row,col'")
    p.add_argument("--nodes", help="nodes JSON")
    _add_mesh(p)
    p.add_argument("--transfers", action="store_true", help="also minimize transfers")
    p.add_argument("--slack", type=float, default=0, help="minimum change time, seconds")
    p.add_argument("--no-split-residence", action="store_true", help="one group per date only")
    p.add_argument("--output", help="default profiles_<dest>.json")

    p = subs["analyze"] = sub.add_parser("analyze", parents=[common], help="profiles -> hourly means and travel-time density")
    p.add_argument("--profiles", required=True)
    p.add_argument("--origin", required=True, help="node name from --nodes, or 'row,col'")
    p.add_argument("--nodes")
    _add_mesh(p)
    p.add_argument("--months", help="comma separated month numbers")
    p.add_argument("--residence", help="comma separated residence classes")
    p.add_argument("--day-type", choices=["weekday", "weekend"])
    p.add_argument("--window", nargs=2, metavar=("START", "END"), help="departure window [START, END) in hours or HH:MM")
    p.add_argument("--field", choices=["pure", "waiting_inclusive"], default="pure")
    p.add_argument("--bin-width", type=float, default=mobility_analysis.DEFAULT_BIN_WIDTH)
    p.add_argument("--step", type=float, default=mobility_analysis.DEFAULT_STEP, help="query spacing, seconds")
    p.add_argument("--query-start", default="0")
    p.add_argument("--query-end", default="24")
    p.add_argument("--cutoff", type=float, default=mobility_analysis.DEFAULT_CUTOFF)
    p.add_argument("--smooth", action="store_true", help="also write a kernel-smoothed density")
    p.add_argument("--logs", help="GPS CSV; also write hourly log counts")

    p = subs["weights"] = sub.add_parser("weights", parents=[common], help="per-destination profiles -> weight table JSON")
    p.add_argument("--profiles", required=True, nargs="+", help="one profiles JSON per destination node")
    p.add_argument("--nodes", required=True)
    _add_mesh(p)
    _add_grid(p)
    p.add_argument("--quantile", type=float, default=0.05)
    p.add_argument("--stay", help="JSON node -> stay minutes")
    p.add_argument("--congestion", help="congestion JSON to embed")
    p.add_argument("--output", default="weights.json")

    p = subs["congestion"] = sub.add_parser("congestion", parents=[common], help="GPS CSV -> congestion levels per node and period")
    p.add_argument("--logs", required=True)
    p.add_argument("--nodes", required=True)
    _add_mesh(p)
    _add_grid(p)
    p.add_argument("--epsilon", type=float, default=gps_ingest.DEFAULT_EPSILON_THETA)
    p.add_argument("--output", default="congestion.json")

    p = subs["solve"] = sub.add_parser("solve", parents=[common], help="ant colony search for a short tour")
    _add_graph(p)
    d = aco_solver.AcoParams()
    g = p.add_argument_group("colony")
    g.add_argument("--alpha", type=float, default=d.alpha)
    g.add_argument("--beta", type=float, default=d.beta)
    g.add_argument("--rho", type=float, default=d.rho, help="pheromone retained per iteration")
    g.add_argument("--q", dest="Q", type=float, default=d.Q)
    g.add_argument("--ants", type=int, default=d.ants)
    g.add_argument("--iterations", type=int, default=d.iterations)
    g.add_argument("--exploration-prob", type=float, default=d.exploration_prob)
    g.add_argument("--initial-pheromone", type=float, default=d.initial_pheromone)
    g.add_argument("--elitist", action="store_true")
    g.add_argument("--threads", type=int, help="worker threads (default $TEMPOTSP_THREADS or 1)")
    p.add_argument("--output", default="solve.json")

    p = subs["oracle"] = sub.add_parser("oracle", parents=[common], help="exhaustive optimal tour")
    _add_graph(p)
    p.add_argument("--output", default="oracle.json")

    p = subs["synth"] = sub.add_parser("synth", parents=[common], help="city spec JSON -> synthetic GPS CSV")
    p.add_argument("--spec", required=True)
    p.add_argument("--output", default="synth_logs.csv")
    return parser, subs


def _apply_config(parser, subs, path, command):
    with open(path) as fh:
        cfg = json.load(fh)
    flat = {}
    for key, value in cfg.items():
        if key in _SECTION_KEYS and isinstance(value, dict):
            renames = _SECTION_KEYS[key]
            flat.update({renames.get(k, k): v for k, v in value.items()})
        elif key in subs and isinstance(value, dict):
            continue
        else:
            flat[key] = value
    if command in cfg and isinstance(cfg[command], dict):
        flat.update(cfg[command])
    flat = {k.replace("-", "_"): v for k, v in flat.items()}
    top = {a.dest for a in parser._actions}
    parser.set_defaults(**{k: v for k, v in flat.items() if k in top})
    if command in subs:
        dests = {a.dest for a in subs[command]._actions} - set(_GLOBAL)
        subs[command].set_defaults(**{k: v for k, v in flat.items() if k in dests})


# ----------------------------------------------------------------- helpers


def _mesh_cfg(args, required=True) -> MeshConfig | None:
    if args.origin_lat is None or args.origin_lon is None:
        if required:
            raise CliError("mesh origin required: pass --origin-lat/--origin-lon or a config 'mesh' section")
        return None
    return MeshConfig(args.origin_lat, args.origin_lon, args.cell_size)


def _grid(args) -> tdtsp_model.PeriodGrid:
    return tdtsp_model.PeriodGrid(args.grid_start, args.period_length, args.periods)


def _load_nodes(args) -> dict:
    with open(args.nodes) as fh:
        payload = json.load(fh)
    payload = payload.get("nodes", payload)
    return gps_ingest.node_regions(payload, _mesh_cfg(args, required=False))


def _resolve_stop(text, args) -> tuple[str, frozenset]:
    if args.nodes:
        regions = _load_nodes(args)
        if text in regions:
            return text, regions[text]
    try:
        return text, frozenset([MeshId.parse(text)])
    except ValueError:
        raise CliError(f"{text!r} is neither a node in --nodes nor 'row,col'") from None


def _read_logs(path):
    with open(path, newline="") as fh:
        return gps_ingest.parse_logs(fh)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _graph(args) -> tuple[tdtsp_model.TimeDependentGraph, dict]:
    if args.weights:
        g, refs = tdtsp_model.load_graph(args.weights), {}
    else:
        g, refs = tdtsp_model.load_fixture(args.fixture or "kyoto")
    if args.congestion:
        table = gps_ingest.CongestionTable.from_json(Path(args.congestion).read_text())
        cong = tuple(tuple(table.theta.get(v, [1.0] * g.grid.count)) for v in g.nodes)
        g = replace(g, congestion=cong)
    if args.no_congestion:
        g = replace(g, congestion=None)
    if args.perturb_node:
        g = tdtsp_model.perturb_weights(g, args.perturb_node, args.factor)
    return g, refs


def _reference(g, refs, args) -> dict | None:
    """Published route matching this run's settings, with its cost here."""
    route = None
    if args.perturb_node:
        if (
            abs(args.factor - refs.get("perturbation_factor", float("nan"))) < 1e-12
            and abs(args.stay_multiplier - refs.get("perturbation_stay_multiplier", float("nan"))) < 1e-12
        ):
            route = refs.get("perturbed_node", {}).get(args.perturb_node)
    else:
        for key, r in refs.get("stay_multiplier", {}).items():
            if abs(float(key) - args.stay_multiplier) < 1e-12:
                route = r
    if route is None:
        return None
    tour = tdtsp_model.Tour.parse(route)
    return {"route": list(tour.nodes), "cost": tdtsp_model.tour_cost(g, tour, args.stay_multiplier).total}


def _timeline(tc: tdtsp_model.TourCost) -> list[dict]:
    return [{"node": v.node, "arrival": v.arrival, "departure": v.departure} for v in tc.timeline]


# ----------------------------------------------------------------- commands


def cmd_ingest(args, out: Path) -> None:
    cfg = _mesh_cfg(args)
    logs = _read_logs(args.logs)
    conns = gps_ingest.build_connections(logs, cfg, args.min_duration, args.max_duration)
    with open(out / args.output, "w", newline="") as fh:
        gps_ingest.write_connections(conns, fh)
    counts = mobility_analysis.log_counts_by_hour(logs)
    _write_csv(out / "log_counts.csv", ["hour", "count"], counts.items())
    log.info("%d logs, %d devices -> %d connections", len(logs), len(logs.groups), len(conns))


def cmd_profiles(args, out: Path) -> None:
    label, dest = _resolve_stop(args.dest, args)
    with open(args.connections, newline="") as fh:
        conns = gps_ingest.read_connections(fh)
    groups = temporal_net.profile_groups(
        conns, dest, transfers=args.transfers, slack=args.slack, by_residence=not args.no_split_residence
    )
    name = args.output or f"profiles_{label.replace(',', '_')}.json"
    (out / name).write_text(temporal_net.dump_groups(groups, label, dest, args.transfers) + "\n")


def cmd_analyze(args, out: Path) -> None:
    label, origins = _resolve_stop(args.origin, args)
    _, groups = temporal_net.load_groups(Path(args.profiles).read_text())
    times = mobility_analysis.query_grid(_hours(args.query_start), _hours(args.query_end), args.step)
    samples = mobility_analysis.sample_groups(groups, sorted(origins), times, label)
    f = mobility_analysis.SubgroupFilter(
        months=None if not args.months else {int(m) for m in args.months.split(",")},
        residences=None if not args.residence else args.residence.split(","),
        day_type=args.day_type,
        window=None if not args.window else (_hours(args.window[0]), _hours(args.window[1])),
    )
    samples = mobility_analysis.filter_samples(samples, f)
    if not samples:
        log.warning("no travel-time samples match the filter; writing empty outputs")
    means = mobility_analysis.mean_travel_time_by_hour(samples, args.cutoff)
    _write_csv(out / "mean_by_hour.csv", ["hour", "mean_minutes"], ((h, f"{m:.6f}") for h, m in means.items()))
    dens = mobility_analysis.density(samples, args.field, args.bin_width)
    _write_csv(out / "density.csv", ["bin_lower_s", "density"], ((lo, repr(d)) for lo, d in dens.bins))
    if args.smooth and dens.bins:
        pts = [lo + args.bin_width / 2 for lo, _ in dens.bins]
        try:
            vals = mobility_analysis.smooth_density(samples, pts, args.field)
        except ValueError as exc:
            log.warning("skipping smoothing: %s", exc)
        else:
            _write_csv(out / "density_smooth.csv", ["t_s", "density"], zip(pts, map(repr, vals)))
    if args.logs:
        counts = mobility_analysis.log_counts_by_hour(_read_logs(args.logs))
        _write_csv(out / "log_counts.csv", ["hour", "count"], counts.items())


def cmd_weights(args, out: Path) -> None:
    regions = _load_nodes(args)
    names = list(regions)
    grid = _grid(args)
    by_dest = {}
    for path in args.profiles:
        meta, groups = temporal_net.load_groups(Path(path).read_text())
        by_dest[meta["dest"]] = groups
    absent = [n for n in names if n not in by_dest]
    if absent:
        raise CliError(f"no profiles file for destination node(s): {', '.join(absent)}")
    entries = {
        (i, j): temporal_net.entries_from(by_dest[j], sorted(regions[i]))
        for i in names for j in names if i != j
    }
    w = tdtsp_model.derive_weights(entries, grid, args.quantile)
    stay = json.loads(Path(args.stay).read_text()) if args.stay else None
    cong = None
    if args.congestion:
        cong = gps_ingest.CongestionTable.from_json(Path(args.congestion).read_text()).theta
    g = tdtsp_model.TimeDependentGraph.from_tables(names, w, grid, stay, cong)
    _write_json(out / args.output, g.to_dict())


def cmd_congestion(args, out: Path) -> None:
    regions = _load_nodes(args)
    table = gps_ingest.compute_congestion(_read_logs(args.logs), regions, _grid(args), _mesh_cfg(args), args.epsilon)
    if table.neutral:
        log.warning("no stays observed at %s; congestion set to 1", ", ".join(sorted(table.neutral)))
    (out / args.output).write_text(table.to_json() + "\n")


def cmd_solve(args, out: Path) -> None:
    g, refs = _graph(args)
    params = aco_solver.AcoParams(
        alpha=args.alpha, beta=args.beta, rho=args.rho, Q=args.Q, ants=args.ants,
        iterations=args.iterations, exploration_prob=args.exploration_prob,
        initial_pheromone=args.initial_pheromone, rng_seed=args.seed or 0, elitist=args.elitist,
    )
    res = aco_solver.solve(g, params, args.stay_multiplier, workers=args.threads)
    tc = tdtsp_model.tour_cost(g, res.best_tour, args.stay_multiplier)
    payload = {
        "tour": list(res.best_tour.nodes),
        "cost": res.best_cost,
        "timeline": _timeline(tc),
        "history": res.cost_history,
        "evaluations": res.evaluations,
        "stay_multiplier": args.stay_multiplier,
        "params": params.to_dict(),
    }
    ref = _reference(g, refs, args)
    if ref is not None:
        payload["reference"] = ref
    _write_json(out / args.output, payload)


def cmd_oracle(args, out: Path) -> None:
    g, refs = _graph(args)
    res = exact_oracle.brute_force(g, args.stay_multiplier)
    payload = exact_oracle.result_dict(res)
    payload["timeline"] = _timeline(tdtsp_model.tour_cost(g, res.optimal_tour, args.stay_multiplier))
    payload["stay_multiplier"] = args.stay_multiplier
    ref = _reference(g, refs, args)
    if ref is not None:
        ref["in_ties"] = ref["route"] in payload["ties"]
        ref["gap"] = ref["cost"] - res.optimal_cost
        payload["reference"] = ref
    _write_json(out / args.output, payload)


def cmd_synth(args, out: Path) -> None:
    spec = synth_city.CitySpec.from_json(Path(args.spec).read_text())
    if args.seed is not None:
        spec.seed = args.seed
    logs = synth_city.generate(spec)
    with open(out / args.output, "w", newline="") as fh:
        gps_ingest.write_logs(logs, fh)


COMMANDS = {
    "ingest": cmd_ingest, "profiles": cmd_profiles, "analyze": cmd_analyze, "weights": cmd_weights,
    "congestion": cmd_congestion, "solve": cmd_solve, "oracle": cmd_oracle, "synth": cmd_synth,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        command = next((a for a in argv if a in subs), None)
        try:
            _apply_config(parser, subs, known.config, command)
        except (OSError, ValueError) as exc:
            print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
            return 1
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out)
    except (CliError, ValueError, KeyError, OSError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
