"""Command-line entry point.

    convexloc run --robots 10 --iters 3000 --out run.csv
    convexloc run --config exp.yaml --seed 7 --mc 20 --out mc.csv
    convexloc check --robots 3 --motion-dim 1

A config file is a flat YAML mapping whose keys are the long option names
(dashes or underscores); flags given on the command line win.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import harness, ltv
from .localizer import UNMODIFIED, AlgorithmConfig, UpdateMode
from .world import NoiseConfig, NoiseModel, Region, WorldConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_IO = 3

DEFAULTS = {
    "robots": 5,
    "beacons": 1,
    "dim": 2,
    "region": 20.0,
    "radius": 2.0,
    "dmax": 5.0,
    "iters": 3000,
    "seed": 0,
    "mc": 1,
    "alpha": 0.01,
    "beta": 0.01,
    "epsilon": 0.2,
    "noise": "none",
    "kd": 5e-3,
    "ktheta": 5e-3,
    "kr": 5e-3,
    "prop_frac": 0.1,
    "update_mode": "all",
    "out": "metrics.csv",
    "adverse_init": None,
    "allow_infeasible": False,
    "unmodified": False,
    "beacon_motion": "static",
    "motion_dim": None,
    "threshold": 1e-3,
    "workers": 1,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults are None so that config-file values are only overridden by explicit flags
    p.add_argument("--config", type=Path, help="flat YAML file of option values")
    p.add_argument("--robots", type=int, help="number of robots N")
    p.add_argument("--beacons", type=int, help="number of beacons M")
    p.add_argument("--dim", type=int, choices=(1, 2, 3), help="space dimension")
    p.add_argument("--region", type=float, help="side of the cubic region, metres")
    p.add_argument("--radius", type=float, help="communication radius, metres")
    p.add_argument("--dmax", type=float, help="maximum step length, metres")
    p.add_argument(
        "--beacon-motion", choices=("static", "random"), help="beacons stay at the centre or wander"
    )
    p.add_argument(
        "--motion-dim",
        type=int,
        help="restrict robot motion to the first k coordinate axes (shared by all robots)",
    )
    p.add_argument("--allow-infeasible", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convexloc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate and write metrics CSV plus a JSON summary")
    _add_common(run)
    run.add_argument("--iters", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--mc", type=int, help="Monte Carlo replicates")
    run.add_argument("--workers", type=int, help="processes for Monte Carlo replicates")
    run.add_argument("--alpha", type=float, help="minimum beacon weight and default self weight")
    run.add_argument("--beta", type=float, help="self weight of an updating robot")
    run.add_argument("--epsilon", type=float, help="relative inclusion error gate (noisy runs)")
    run.add_argument("--noise", choices=[m.value for m in NoiseModel])
    run.add_argument("--kd", type=float)
    run.add_argument("--ktheta", type=float)
    run.add_argument("--kr", type=float)
    run.add_argument("--prop-frac", type=float, help="Model 2 proportional noise fraction")
    run.add_argument("--update-mode", choices=[m.value for m in UpdateMode])
    run.add_argument("--unmodified", action="store_true", default=None,
                     help="disable the sign screen, error gate and weight normalisation")
    run.add_argument(
        "--adverse-init",
        type=float,
        metavar="MULTIPLE",
        help="start estimates this many region sizes away from the truth",
    )
    run.add_argument("--threshold", type=float, help="convergence threshold, metres")
    run.add_argument("--out", type=Path, help="metrics CSV path; summary goes next to it")

    check = sub.add_parser("check", help="report whether a configuration can converge")
    _add_common(check)
    return parser


def load_config(path: Path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must be a flat mapping")
    opts = {}
    for k, v in data.items():
        key = str(k).replace("-", "_")
        if key not in DEFAULTS:
            raise ValueError(f"unknown config key {k!r} in {path}")
        if isinstance(v, (dict, list)):
            raise ValueError(f"config key {k!r} must be a scalar")
        opts[key] = v
    return opts


def resolve_options(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then explicit flags."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None) is not None:
        opts.update(load_config(args.config))
    for k, v in vars(args).items():
        if k in DEFAULTS and v is not None:
            opts[k] = v
    return opts


def experiment_config(opts: dict) -> harness.ExperimentConfig:
    dim = int(opts["dim"])
    basis = None
    if opts["motion_dim"] is not None:
        basis = np.eye(dim)[: int(opts["motion_dim"])]
    world = WorldConfig(
        dim=dim,
        region=Region.square(float(opts["region"]), dim),
        comm_radius=float(opts["radius"]),
        d_max=float(opts["dmax"]),
        n_robots=int(opts["robots"]),
        n_beacons=int(opts["beacons"]),
        rng_seed=int(opts["seed"]),
        beacon_motion=str(opts["beacon_motion"]),
        robot_motion_basis=basis,
    )
    switches = UNMODIFIED if opts["unmodified"] else {}
    algorithm = AlgorithmConfig(
        alpha=float(opts["alpha"]),
        beta=float(opts["beta"]),
        epsilon=float(opts["epsilon"]),
        update_mode=UpdateMode(opts["update_mode"]),
        **switches,
    )
    noise = NoiseConfig(
        model=NoiseModel(opts["noise"]),
        k_d=float(opts["kd"]),
        k_theta=float(opts["ktheta"]),
        k_r=float(opts["kr"]),
        proportional_fraction=float(opts["prop_frac"]),
    )
    if opts["adverse_init"] is not None:
        init = harness.InitialEstimate("adverse", float(opts["adverse_init"]))
    else:
        init = harness.InitialEstimate()
    return harness.ExperimentConfig(
        world=world,
        algorithm=algorithm,
        noise=noise,
        iterations=int(opts["iters"]),
        mc_replicates=int(opts["mc"]),
        convergence_threshold=float(opts["threshold"]),
        initial_estimate=init,
        output_path=str(opts["out"]),
        allow_infeasible=bool(opts["allow_infeasible"]),
    )


def _refusal(report: ltv.FeasibilityReport) -> str:
    lines = ["refusing infeasible configuration (use --allow-infeasible to run anyway):"]
    lines += [f"  violated: {c}" for c in report.violated_conditions]
    lines += [f"  {k} = {v}" for k, v in report.detail.items()]
    return "\n".join(lines)


def _summary_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".summary.json")


def cmd_run(opts: dict) -> int:
    cfg = experiment_config(opts)
    out = Path(opts["out"])
    if cfg.mc_replicates == 1:
        result = harness.run_experiment(cfg)
        harness.emit_csv(result.metrics, out)
        summary = {"config": harness.config_summary(cfg), "run": result.summary()}
        print(
            f"final mean error {result.final_mean_error:.6g} m after {cfg.iterations} iterations; "
            f"mean updates per robot {result.updates_per_robot.mean():.1f}"
        )
    else:
        mc = harness.monte_carlo(cfg, workers=int(opts["workers"]))
        for r, res in enumerate(mc.results):
            if res is not None:
                harness.emit_csv(res.metrics, out.with_name(f"{out.stem}.rep{r:03d}{out.suffix}"))
        harness.emit_mc_csv(mc, out)
        summary = {
            "config": harness.config_summary(cfg),
            "replicates": [None if r is None else r.summary() for r in mc.results],
            "failures": mc.failures,
            "median_hit_iteration": mc.median_hit(),
            "final_mean_error": float(mc.mean_curve[-1]),
        }
        print(
            f"{len(mc.succeeded)}/{cfg.mc_replicates} replicates ok; "
            f"final mean error {mc.mean_curve[-1]:.6g} m; median hit {mc.median_hit()}"
        )
    harness.write_summary(summary, _summary_path(out))
    return EXIT_OK


def cmd_check(opts: dict) -> int:
    cfg = experiment_config(opts)
    report = ltv.check_feasibility(cfg.feasibility_input())
    if report.feasible:
        print("feasible")
        return EXIT_OK
    print("infeasible")
    for c in report.violated_conditions:
        print(f"  violated: {c}")
    for k, v in report.detail.items():
        print(f"  {k} = {v}")
    return EXIT_INFEASIBLE


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        opts = resolve_options(args)
        if args.command == "check":
            return cmd_check(opts)
        return cmd_run(opts)
    except harness.InfeasibleConfigError as exc:
        print(_refusal(exc.report), file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
