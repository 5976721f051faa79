"""Final mean error under odometry and ranging noise, with and without the robustness changes.

    python scripts/noise_sweep.py --gains 5e-3 5e-4 1e-4 --reps 3

Each gain sets the odometry distance, odometry heading and ranging noise
together. Model 2 (bounded proportional errors) is selected with ``--model``.
"""
import argparse

import numpy as np

from convexloc import UNMODIFIED, AlgorithmConfig, ExperimentConfig, NoiseConfig, NoiseModel, WorldConfig, monte_carlo


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gains", type=float, nargs="+", default=[5e-3])
    p.add_argument("--model", choices=("model1", "model2"), default="model1")
    p.add_argument("--prop-frac", type=float, default=0.1)
    p.add_argument("--robots", type=int, default=100)
    p.add_argument("--iters", type=int, default=3000)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    checkpoints = [k for k in (100, 1000, args.iters) if k <= args.iters]
    print("gain      variant     " + "  ".join(f"err@{k:<5d}" for k in checkpoints))
    for gain in args.gains:
        noise = NoiseConfig(NoiseModel(args.model), gain, gain, gain, proportional_fraction=args.prop_frac)
        for name, switches in (("unmodified", UNMODIFIED), ("modified", {})):
            cfg = ExperimentConfig(
                world=WorldConfig(n_robots=args.robots, rng_seed=args.seed),
                algorithm=AlgorithmConfig(epsilon=args.epsilon, **switches),
                noise=noise,
                iterations=args.iters,
            )
            mc = monte_carlo(cfg, args.reps, workers=args.workers)
            row = "  ".join(f"{mc.mean_curve[k]:9.3f}" for k in checkpoints)
            print(f"{gain:<8g}  {name:<10}  {row}")
    print(f"(mean over {args.reps} replicates, metres)")


if __name__ == "__main__":
    main()
