"""Opportunistic convex localization for mobile robot networks.

Robots estimate their positions from range readings and odometry alone. A
robot updates only when it sits strictly inside the hull of m+1 neighbours,
as decided from distances by a Cayley-Menger volume test, and then moves its
estimate to a convex mix of its own estimate and its neighbours' (beacons
contribute their true positions).

Modules:
    geometry: simplex volumes, inclusion test, barycentric weights.
    world: ground-truth motion, ranging and noise models.
    localizer: triangulation-set search and the update step.
    ltv: system matrices, slice products and feasibility conditions.
    harness: seeded experiments, Monte Carlo, CSV/JSON output.
"""
from .geometry import (
    Verdict,
    barycentric_coordinates,
    cayley_menger_determinant,
    coefficient_s,
    inclusion_test,
    simplex_volume,
)
from .harness import ExperimentConfig, InitialEstimate, monte_carlo, run_experiment
from .localizer import UNMODIFIED, AlgorithmConfig, UpdateMode
from .ltv import check_feasibility
from .world import NoiseConfig, NoiseModel, Region, WorldConfig

__all__ = [
    "AlgorithmConfig",
    "ExperimentConfig",
    "InitialEstimate",
    "NoiseConfig",
    "NoiseModel",
    "Region",
    "UNMODIFIED",
    "UpdateMode",
    "Verdict",
    "WorldConfig",
    "barycentric_coordinates",
    "cayley_menger_determinant",
    "check_feasibility",
    "coefficient_s",
    "inclusion_test",
    "monte_carlo",
    "run_experiment",
    "simplex_volume",
]
