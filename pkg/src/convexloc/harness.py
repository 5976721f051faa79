"""Experiment orchestration: seeded runs, Monte Carlo replication, CSV output."""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ltv
from .localizer import AlgorithmConfig, EstimateState, UpdateRecord, run_iteration
from .world import NoiseConfig, NoiseModel, Stream, World, WorldConfig, substream

log = logging.getLogger(__name__)

CSV_HEADER = ("iter", "robot_id", "err", "mean_err", "updates_cum", "neighbors")

# splitmix64 increment (golden ratio) and finalizer multipliers
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def replicate_seed(master_seed: int, r: int) -> int:
    """splitmix64 of master_seed advanced r+1 steps; the seed of replicate r."""
    z = (int(master_seed) + (r + 1) * _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class InfeasibleConfigError(RuntimeError):
    def __init__(self, report: ltv.FeasibilityReport):
        super().__init__(f"configuration violates {', '.join(report.violated_conditions)}")
        self.report = report


@dataclass(frozen=True)
class InitialEstimate:
    mode: str = "random"  # "random": uniform in the region; "adverse": far from the truth
    magnitude: float = 30.0  # adverse offset, in multiples of the region size

    def __post_init__(self):
        if self.mode not in ("random", "adverse"):
            raise ValueError(f"unknown initial estimate mode {self.mode!r}")


@dataclass
class ExperimentConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    iterations: int = 3000
    mc_replicates: int = 1
    convergence_threshold: float = 1e-3
    initial_estimate: InitialEstimate = field(default_factory=InitialEstimate)
    output_path: str | None = None
    allow_infeasible: bool = False
    track_ltv: bool | None = None  # None: only when the run is noiseless
    beacon_motion_dim: int | None = None  # declared, for scripted beacon paths
    theorem1_L: int = 1000
    growth_gammas: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.mc_replicates < 1:
            raise ValueError("need at least one replicate")

    @property
    def tracks_ltv(self) -> bool:
        if self.track_ltv is not None:
            return self.track_ltv
        return not self.noise.noisy and self.algorithm.normalize

    def feasibility_input(self) -> ltv.FeasibilityInput:
        w = self.world
        if w.robot_motion_basis is None:
            robot_dim = w.dim
        else:
            robot_dim = int(np.linalg.matrix_rank(np.atleast_2d(w.robot_motion_basis)))
        if self.beacon_motion_dim is not None:
            beacon_dim = self.beacon_motion_dim
        elif w.beacon_trajectory is not None or w.beacon_motion == "random":
            beacon_dim = w.dim
        else:
            beacon_dim = 0
        if w.d_max == 0:
            robot_dim = 0
        return ltv.FeasibilityInput(w.n_beacons, w.n_robots, w.dim, robot_dim, beacon_dim)


@dataclass(frozen=True)
class MetricsRecord:
    iteration: int
    errors: np.ndarray  # per robot, Euclidean
    mean_error: float
    updates_cum: np.ndarray
    neighbors: np.ndarray


@dataclass
class LtvTrace:
    slices: list[ltv.SliceSummary] = field(default_factory=list)
    max_residual_ratio: float = 0.0  # max over k of residual / tolerance
    residual_violations: int = 0
    cumulative_norms: list[float] = field(default_factory=list)
    matrices: Counter = field(default_factory=Counter)
    substochastic_updates: np.ndarray | None = None
    open_slice_length: int = 0


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seed: int
    metrics: list[MetricsRecord]
    feasibility: ltv.FeasibilityReport
    ltv: LtvTrace | None
    diagnostics: Counter
    hit_iteration: int | None  # first iteration with mean error below threshold

    @property
    def mean_errors(self) -> np.ndarray:
        return np.array([r.mean_error for r in self.metrics])

    @property
    def final_mean_error(self) -> float:
        return self.metrics[-1].mean_error

    @property
    def updates_per_robot(self) -> np.ndarray:
        return self.metrics[-1].updates_cum

    def theorem1_reports(self) -> dict[str, ltv.Theorem1Report]:
        if self.ltv is None or not self.ltv.slices:
            return {}
        a = self.config.algorithm
        deficit = (1 - a.beta) * a.alpha
        g1, g2 = self.config.growth_gammas
        L = self.config.theorem1_L
        return {
            "bounded": ltv.check_theorem1(self.ltv.slices, "bounded", L=L),
            "infinite_bounded": ltv.check_theorem1(self.ltv.slices, "infinite_bounded", L=L),
            "growth": ltv.check_theorem1(
                self.ltv.slices, "growth", gamma1=g1, gamma2=g2, beta1=a.beta, deficit=deficit
            ),
        }

    def summary(self) -> dict:
        out = {
            "seed": self.seed,
            "iterations": len(self.metrics) - 1,
            "final_mean_error": self.final_mean_error,
            "final_errors": self.metrics[-1].errors.tolist(),
            "hit_iteration": self.hit_iteration,
            "convergence_threshold": self.config.convergence_threshold,
            "updates_per_robot": self.updates_per_robot.tolist(),
            "mean_updates_per_robot": float(self.updates_per_robot.mean()),
            "neighbor_histogram": neighbor_histogram(self.metrics),
            "feasibility": {
                "feasible": self.feasibility.feasible,
                "violated": list(self.feasibility.violated_conditions),
                **self.feasibility.detail,
            },
            "diagnostics": dict(self.diagnostics),
        }
        if self.ltv is not None:
            lengths = [s.length for s in self.ltv.slices]
            out["ltv"] = {
                "slices": len(lengths),
                "slice_lengths": lengths,
                "slice_norms": [s.product_inf_norm for s in self.ltv.slices],
                "slice_min_deficits": [s.min_row_deficit for s in self.ltv.slices],
                "slices_within_bound": all(s.within_bound() for s in self.ltv.slices),
                "open_slice_length": self.ltv.open_slice_length,
                "final_cumulative_norm": self.ltv.cumulative_norms[-1] if self.ltv.cumulative_norms else 1.0,
                "max_error_dynamics_residual_ratio": self.ltv.max_residual_ratio,
                "error_dynamics_violations": self.ltv.residual_violations,
                "matrix_kinds": dict(self.ltv.matrices),
                "substochastic_updates": self.ltv.substochastic_updates.tolist(),
                "theorem1": {
                    k: {"satisfied": r.satisfied, "witnesses": list(r.witnesses[:20]), **r.detail}
                    for k, r in self.theorem1_reports().items()
                },
            }
        return out


def error_norm(estimates, truths) -> np.ndarray:
    """Euclidean error of every robot; rows of the two arrays must correspond."""
    if isinstance(estimates, dict) or isinstance(truths, dict):
        if not (isinstance(estimates, dict) and isinstance(truths, dict)):
            raise ValueError("pass both as id-keyed mappings or both as arrays")
        if set(estimates) != set(truths):
            raise ValueError("estimate and truth ids differ")
        ids = sorted(estimates)
        est = np.array([estimates[i] for i in ids], dtype=float)
        tru = np.array([truths[i] for i in ids], dtype=float)
    else:
        est = np.asarray(estimates, dtype=float)
        tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {tru.shape}")
    return np.linalg.norm(est - tru, axis=-1)


def neighbor_histogram(metrics: Sequence[MetricsRecord]) -> dict[int, float]:
    """Fraction of (robot, iteration) pairs seeing each neighbour count."""
    counts = Counter()
    for r in metrics[1:]:
        counts.update(r.neighbors.tolist())
    total = sum(counts.values()) or 1
    return {int(k): v / total for k, v in sorted(counts.items())}


def initial_estimates(cfg: ExperimentConfig, world: World, seed: int) -> np.ndarray:
    rng = substream(seed, Stream.ESTIMATE)
    N = world.n_robots
    if cfg.initial_estimate.mode == "random":
        return cfg.world.region.uniform(rng, N)
    g = rng.standard_normal((N, cfg.world.dim))
    u = g / np.linalg.norm(g, axis=1, keepdims=True)
    return world.robot_positions + cfg.initial_estimate.magnitude * cfg.world.region.size * u


def run_experiment(cfg: ExperimentConfig, seed: int | None = None) -> ExperimentResult:
    """One seeded run: motion, localization, LTV bookkeeping and metrics per iteration."""
    seed = cfg.world.rng_seed if seed is None else int(seed)
    feas = ltv.check_feasibility(cfg.feasibility_input())
    if not feas.feasible and not cfg.allow_infeasible:
        raise InfeasibleConfigError(feas)
    world = World(replace(cfg.world, rng_seed=seed), cfg.noise)
    N, M = world.n_robots, world.n_beacons
    state = EstimateState(initial_estimates(cfg, world, seed))

    errors = error_norm(state.estimates, world.robot_positions)
    updates = np.zeros(N, dtype=int)
    metrics = [
        MetricsRecord(0, errors, float(errors.mean()), updates.copy(), world.neighbor_mask()[:N].sum(1))
    ]
    hit = 0 if errors.mean() < cfg.convergence_threshold else None
    diag = Counter()

    track = cfg.tracks_ltv
    trace = None
    if track:
        a = cfg.algorithm
        trace = LtvTrace(substochastic_updates=np.zeros(N, dtype=int))
        slices = ltv.SliceState(N, a.beta, (1 - a.beta) * a.alpha)
        cumulative = np.eye(N)

    for _ in range(cfg.iterations):
        e_k = world.robot_positions - state.estimates
        state, records, info = run_iteration(world, state, cfg.algorithm)
        diag.update(info.diagnostics.counts)
        for rec in records:
            updates[rec.robot] += 1
        if track:
            mats = _track(trace, slices, records, N, M, e_k, world.robot_positions - state.estimates)
            for mat in mats:
                cumulative = mat.P @ cumulative
            trace.cumulative_norms.append(float(cumulative.sum(axis=1).max()))
        errors = error_norm(state.estimates, world.robot_positions)
        mean = float(errors.mean())
        metrics.append(MetricsRecord(state.k, errors, mean, updates.copy(), info.neighbor_counts))
        if hit is None and mean < cfg.convergence_threshold:
            hit = state.k
    if track:
        trace.slices = slices.completed
        trace.open_slice_length = slices.length
    return ExperimentResult(cfg, seed, metrics, feas, trace, diag, hit)


def _track(trace, slices, records: list[UpdateRecord], N, M, e_k, e_next) -> list[ltv.SystemMatrices]:
    mats = ltv.assemble_matrices(records, N, M)
    for mat in mats:
        trace.matrices[mat.kind.value] += 1
    for rec in records:
        if rec.beacon_weights:
            trace.substochastic_updates[rec.robot] += 1
    res = ltv.verify_error_dynamics(e_k, mats, e_next)
    tol = ltv.error_dynamics_tolerance(e_k)
    ratio = res / tol
    trace.max_residual_ratio = max(trace.max_residual_ratio, ratio)
    if ratio > 1:
        trace.residual_violations += 1
    ltv.advance_slice(slices, mats)
    return mats


@dataclass
class MonteCarloResult:
    results: list[ExperimentResult | None]
    failures: dict[int, str]
    mean_curve: np.ndarray
    std_curve: np.ndarray

    @property
    def succeeded(self) -> list[ExperimentResult]:
        return [r for r in self.results if r is not None]

    @property
    def hit_iterations(self) -> list[int | None]:
        return [r.hit_iteration for r in self.succeeded]

    def median_hit(self) -> float:
        """Median iterations-to-threshold; replicates that never hit count as +inf."""
        hits = [math.inf if h is None else h for h in self.hit_iterations]
        return float(np.median(hits)) if hits else math.inf


def _replicate(args):
    cfg, seed = args
    try:
        return run_experiment(cfg, seed), None
    except InfeasibleConfigError:
        raise
    except Exception as exc:  # recorded, a failed replicate does not stop the batch
        log.exception("replicate with seed %d failed", seed)
        return None, f"{type(exc).__name__}: {exc}"


def monte_carlo(cfg: ExperimentConfig, n: int | None = None, workers: int = 1) -> MonteCarloResult:
    """Run ``n`` replicates with seeds derived from the world seed and aggregate."""
    n = cfg.mc_replicates if n is None else n
    if n < 1:
        raise ValueError("need at least one replicate")
    jobs = [(cfg, replicate_seed(cfg.world.rng_seed, r)) for r in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            outs = list(pool.map(_replicate, jobs))
    else:
        outs = [_replicate(j) for j in jobs]
    results = [o[0] for o in outs]
    failures = {r: o[1] for r, o in enumerate(outs) if o[1] is not None}
    curves = np.array([r.mean_errors for r in results if r is not None])
    if len(curves):
        mean, std = curves.mean(axis=0), curves.std(axis=0)
    else:
        mean = std = np.full(cfg.iterations + 1, np.nan)
    return MonteCarloResult(results, failures, mean, std)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def emit_csv(records: Sequence[MetricsRecord], path) -> Path:
    """Write one row per robot per iteration, ordered by iteration then robot id."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in records:
                mean = _fmt(r.mean_error)
                for i, err in enumerate(r.errors.tolist()):
                    w.writerow((r.iteration, i, _fmt(err), mean, int(r.updates_cum[i]), int(r.neighbors[i])))
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc
    return path


def emit_mc_csv(mc: MonteCarloResult, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("iter", "mean_err", "std_err"))
            for k, (m, s) in enumerate(zip(mc.mean_curve.tolist(), mc.std_curve.tolist())):
                w.writerow((k, _fmt(m), _fmt(s)))
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_summary(summary: dict, path) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write summary to {path}: {exc}") from exc
    return path


def config_summary(cfg: ExperimentConfig) -> dict:
    w = cfg.world
    return {
        "dim": w.dim,
        "region": [list(w.region.low), list(w.region.high)],
        "comm_radius": w.comm_radius,
        "d_max": w.d_max,
        "robots": w.n_robots,
        "beacons": w.n_beacons,
        "seed": w.rng_seed,
        "iterations": cfg.iterations,
        "mc": cfg.mc_replicates,
        "algorithm": {k: (v.value if hasattr(v, "value") else v) for k, v in asdict(cfg.algorithm).items()},
        "noise": {k: (v.value if hasattr(v, "value") else v) for k, v in asdict(cfg.noise).items()},
        "initial_estimate": asdict(cfg.initial_estimate),
    }
