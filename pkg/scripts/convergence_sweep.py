"""Noiseless iterations-to-threshold and update counts over robot counts and self weights.

    python scripts/convergence_sweep.py --side 20 --robots 5 10 20
    python scripts/convergence_sweep.py --side 8 --betas 0.01 0.1 0.5

The default 20 m square with a 2 m radius leaves robots almost always out of
range of each other. A smaller ``--side`` gives the encounter rate needed for
the convergence and scaling trends to show up.
"""
import argparse
import math

import numpy as np

from convexloc import AlgorithmConfig, ExperimentConfig, Region, WorldConfig, monte_carlo
from convexloc.harness import neighbor_histogram


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--side", type=float, default=20.0, help="region side in metres")
    p.add_argument("--robots", type=int, nargs="+", default=[5, 10, 20])
    p.add_argument("--betas", type=float, nargs="+", default=[0.01])
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    print("robots  beta   median_hit  hits  updates@3000  no_neighbour_frac")
    for n in args.robots:
        for beta in args.betas:
            cfg = ExperimentConfig(
                world=WorldConfig(n_robots=n, region=Region.square(args.side), rng_seed=args.seed),
                algorithm=AlgorithmConfig(alpha=args.alpha, beta=beta),
                iterations=args.iters,
            )
            mc = monte_carlo(cfg, args.reps, workers=args.workers)
            hits = sum(h is not None for h in mc.hit_iterations)
            k = min(3000, args.iters)
            updates = np.mean([r.metrics[k].updates_cum.mean() for r in mc.succeeded])
            lonely = np.mean([neighbor_histogram(r.metrics).get(0, 0.0) for r in mc.succeeded])
            med = mc.median_hit()
            med_s = "never" if math.isinf(med) else f"{med:.0f}"
            print(f"{n:6d}  {beta:<5g}  {med_s:>10}  {hits:4d}  {updates:12.1f}  {lonely:17.3f}")


if __name__ == "__main__":
    main()
