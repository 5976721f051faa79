"""Robots confined to parallel lines: who never hears from a beacon, and does it converge?

    python scripts/negative_control.py --seeds 5 --iters 10000
"""
import argparse

import numpy as np

from convexloc import ExperimentConfig, Region, WorldConfig, check_feasibility
from convexloc.harness import replicate_seed, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--robots", type=int, default=3)
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--side", type=float, default=20.0)
    args = p.parse_args()

    world = WorldConfig(
        n_robots=args.robots, region=Region.square(args.side), robot_motion_basis=np.array([[1.0, 0.0]])
    )
    cfg = ExperimentConfig(world=world, iterations=args.iters, allow_infeasible=True)
    report = check_feasibility(cfg.feasibility_input())
    print("feasible" if report.feasible else f"infeasible: {', '.join(report.violated_conditions)}")
    for r in range(args.seeds):
        res = run_experiment(cfg, replicate_seed(world.rng_seed, r))
        beacon_updates = res.ltv.substochastic_updates.tolist()
        final = res.metrics[-1].errors.round(4).tolist()
        print(f"replicate {r}: updates with a beacon {beacon_updates}, final errors {final}")


if __name__ == "__main__":
    main()
