"""Command-line front end: dataset generation, surrogate training, inverse
solve, drop planning, single-mission simulation, and Monte Carlo batches.

Exit codes: 0 ok, 2 configuration/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import inverse, kernels, planner, simulator, surrogate
from .geometry import build_tunnel

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


def _require(mapping, key, kind, where):
    if key not in mapping:
        raise ConfigError(f"missing field '{where}.{key}'")
    val = mapping[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return val
    if kind is str and isinstance(val, str):
        return val
    if kind is list and isinstance(val, list):
        return val
    raise ConfigError(f"field '{where}.{key}' must be {kind.__name__}")


def load_scenario(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario is not valid JSON: {exc}")

    if "tunnel" not in raw:
        raise ConfigError("missing field 'tunnel'")
    tunnel = raw["tunnel"]
    width = _require(tunnel, "width", float, "tunnel")
    waypoints = None
    length = None
    if "waypoints" in tunnel:
        waypoints = _require(tunnel, "waypoints", list, "tunnel")
        if len(waypoints) < 2:
            raise ConfigError("field 'tunnel.waypoints' needs >= 2 points")
    if "length" in tunnel:
        length = _require(tunnel, "length", float, "tunnel")
    if waypoints is None and length is None:
        raise ConfigError("tunnel needs 'waypoints' or 'length'")

    mission = raw.get("mission", {})
    params_kwargs = {}
    for key in ("v", "sigma_v", "sigma_omega", "rho_max", "sigma_range",
                "sigma_wall", "sigma_drop", "p_e", "offset", "dt",
                "measure_hz", "wall_update_hz"):
        if key in mission:
            params_kwargs[key] = _require(mission, key, float, "mission")
    if "wall_aiding" in mission:
        params_kwargs["wall_aiding"] = _require(mission, "wall_aiding", str,
                                                "mission")
    level = raw.get("info_level", "full-topology")
    if level not in ("straight", "turn-count", "full-topology"):
        raise ConfigError("field 'info_level' must be straight, turn-count "
                          "or full-topology")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("field 'seed' must be an integer")
    turn_count = raw.get("turn_count")
    if turn_count is not None and (not isinstance(turn_count, int)
                                   or turn_count < 0):
        raise ConfigError("field 'turn_count' must be a nonnegative integer")

    try:
        params = simulator.MissionParams(seed=seed, **params_kwargs)
    except ValueError as exc:
        raise ConfigError(f"mission parameters invalid: {exc}")
    return {
        "width": width,
        "waypoints": waypoints,
        "length": length,
        "params": params,
        "info_level": level,
        "turn_count": turn_count,
    }


def scenario_topology(scn):
    if scn["waypoints"] is not None:
        return build_tunnel(scn["waypoints"], scn["width"])
    return build_tunnel([(0.0, 0.0), (scn["length"], 0.0)], scn["width"])


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def cmd_gen_data(args) -> int:
    scn = load_scenario(args.config)
    p = scn["params"]
    config = surrogate.GenConfig(
        dt=args.sim_dt, measure_hz=p.measure_hz, offset=p.offset,
        sigma_omega=p.sigma_omega, sigma_drop=p.sigma_drop)
    seed = args.seed if args.seed is not None else p.seed
    workers = simulator.default_workers()
    data = surrogate.generate_dataset(args.n, seed=seed, config=config,
                                      workers=workers)
    data.to_csv(args.out)
    print(f"wrote {args.n} samples to {args.out} (backend={kernels.BACKEND})")
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        data = surrogate.SampleSet.from_csv(args.dataset)
    except FileNotFoundError:
        raise ConfigError(f"dataset not found: {args.dataset}")
    try:
        net, history = surrogate.train(data, epochs=args.epochs,
                                       batch_size=args.batch, lr=args.lr,
                                       seed=args.seed)
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    surrogate.save_weights(net, args.out)
    rmse = surrogate.holdout_rmse(net, data, "test")
    print(f"trained {len(history['train_mse'])} epochs; "
          f"best val MSE {history['best_val_mse']:.6f}; "
          f"test normalized RMSE {rmse:.4f}; wrote {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    scn = load_scenario(args.config)
    p = scn["params"]
    try:
        net = surrogate.load_weights(args.weights)
    except FileNotFoundError:
        raise ConfigError(f"weights not found: {args.weights}")
    length = scn["length"]
    if length is None:
        length = scenario_topology(scn).length
    fixed = [p.v, p.sigma_v, p.rho_max, p.sigma_range, length]
    try:
        sol = inverse.solve_inverse(net, fixed, p.p_e, eps=args.eps,
                                    method=args.method)
    except ValueError as exc:
        raise ConfigError(str(exc))
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if sol.extrapolated:
        print("warning: lambda* lies beyond the training domain; "
              "prediction is an extrapolation", file=sys.stderr)
    _write_json(args.out, sol.to_dict())
    print(f"lambda*={sol.lambda_star:.6f} d*={sol.d_star:.3f} m "
          f"predicted p_max={sol.p_max_pred:.4f} m -> {args.out}")
    return EXIT_OK


def cmd_plan(args) -> int:
    scn = load_scenario(args.config)
    p = scn["params"]
    try:
        with open(args.solve) as fh:
            sol = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"solve report not found: {args.solve}")
    d_star = float(sol["d_star"])
    level = scn["info_level"]

    if level == "straight":
        length = scn["length"]
        if length is None:
            length = scenario_topology(scn).length
        schedule, _ = planner.plan_straight(length, d_star, p.offset)
    elif level == "turn-count":
        length = scn["length"]
        topology = None
        if scn["waypoints"] is not None:
            topology = scenario_topology(scn)
            length = topology.length
        if length is None:
            raise ConfigError("turn-count planning needs 'tunnel.length' or waypoints")
        turns = scn["turn_count"]
        if turns is None:
            if topology is None:
                raise ConfigError("turn-count planning needs 'turn_count'")
            turns = len(topology.turns)
        schedule, _ = planner.plan_with_turn_count(length, d_star, turns,
                                                   p.offset)
        if topology is not None:
            schedule = planner.materialize_turn_drops(schedule, topology)
    else:
        if scn["waypoints"] is None:
            raise ConfigError("full-topology planning needs 'tunnel.waypoints'")
        topology = scenario_topology(scn)
        schedule, _, _ = planner.adjust_full_topology(
            topology, d_star, p.offset, pull_margin=args.pull_margin)

    _write_json(args.out, planner.schedule_to_dict(schedule))
    counts = ", ".join(f"{k}={v}" for k, v in schedule.counts.items()
                       if v is not None)
    print(f"{len(schedule.events)} drop events ({counts}) -> {args.out}")
    return EXIT_OK


def _load_schedule(path) -> planner.DropSchedule:
    try:
        with open(path) as fh:
            return planner.schedule_from_dict(json.load(fh))
    except FileNotFoundError:
        raise ConfigError(f"schedule not found: {path}")


def _apply_sim_flags(scn, schedule, args):
    p = scn["params"]
    if args.wall_updates is not None:
        hz = 0.0 if args.wall_updates == "off" else float(args.wall_updates)
        p = replace(p, wall_update_hz=hz)
    topology = scenario_topology(scn)
    if args.stagger == "half":
        schedule = planner.stagger_schedule(schedule, "half-distance")
    elif args.stagger == "angled":
        gaps = [e.s for e in schedule.events]
        d_star = min(np.diff([0.0] + gaps)) if len(gaps) else 1.0
        schedule = planner.stagger_schedule(schedule, "angled", ds=args.stagger_ds,
                                            d_star=float(d_star),
                                            topology=topology)
    return topology, schedule, p


def cmd_simulate(args) -> int:
    scn = load_scenario(args.config)
    schedule = _load_schedule(args.schedule)
    topology, schedule, p = _apply_sim_flags(scn, schedule, args)
    seed = args.seed if args.seed is not None else p.seed
    try:
        trace = simulator.run_mission(topology, schedule, p, seed=seed)
    except simulator.MissionAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    trace.to_csv(args.out)
    print(f"p_max={trace.p_max:.4f} m, terminal error="
          f"({trace.terminal_error[0]:.3f}, {trace.terminal_error[1]:.3f}) m "
          f"-> {args.out}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    scn = load_scenario(args.config)
    schedule = _load_schedule(args.schedule)
    topology, schedule, p = _apply_sim_flags(scn, schedule, args)
    if args.seed is not None:
        p = replace(p, seed=args.seed)
    workers = simulator.default_workers()
    try:
        agg = simulator.run_monte_carlo(topology, schedule, p, args.runs,
                                        workers=workers)
    except simulator.MissionAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    agg.pop("per_run")
    _write_json(args.out, agg)
    print(f"{args.runs} runs: median p_max={agg['p_max']['median']:.4f} m, "
          f"median terminal error={agg['terminal_error']['median']:.3f} m "
          f"-> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tunnelnav",
        description="Plan and simulate range-beacon navigation through "
                    "GPS-denied tunnels.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate the surrogate dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--n", type=int, default=10000)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--sim-dt", type=float, default=0.05)
    g.add_argument("--out", default="dataset.csv")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the uncertainty surrogate")
    t.add_argument("--dataset", required=True)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", default="weights.json")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("solve", help="invert the surrogate for lambda*")
    s.add_argument("--config", required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--method", choices=("milp", "pwl", "grid"), default="milp")
    s.add_argument("--eps", type=float, default=0.01)
    s.add_argument("--out", default="solve.json")
    s.set_defaults(func=cmd_solve)

    pl = sub.add_parser("plan", help="turn d* into a drop schedule")
    pl.add_argument("--config", required=True)
    pl.add_argument("--solve", required=True)
    pl.add_argument("--pull-margin", type=float,
                    default=planner.DEFAULT_PULL_MARGIN)
    pl.add_argument("--out", default="schedule.json")
    pl.set_defaults(func=cmd_plan)

    for name, fn in (("simulate", cmd_simulate), ("montecarlo", cmd_montecarlo)):
        sp = sub.add_parser(name, help=f"{name} a planned mission")
        sp.add_argument("--config", required=True)
        sp.add_argument("--schedule", required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--stagger", choices=("half", "angled"), default=None)
        sp.add_argument("--stagger-ds", type=float, default=5.0)
        sp.add_argument("--wall-updates", choices=("off", "0.1", "10"),
                        default=None)
        if name == "montecarlo":
            sp.add_argument("--runs", type=int, default=20)
            sp.add_argument("--out", default="mc.json")
        else:
            sp.add_argument("--out", default="trace.csv")
        sp.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
