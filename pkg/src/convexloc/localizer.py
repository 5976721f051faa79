"""Opportunistic barycentric location updates.

A robot that sits strictly inside the convex hull of m+1 neighbours replaces
(most of) its estimate with the barycentric combination of their positions;
otherwise it only dead-reckons. All candidate sets of all robots in one
iteration are screened in a single vectorized inclusion test.
"""
from __future__ import annotations

import enum
import functools
import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import geometry
from .geometry import BarycentricWeights, Verdict
from .world import World


class UpdateMode(enum.Enum):
    FIRST_SET = "first"
    ALL_SETS = "all"


class UpdateError(RuntimeError):
    """Raised when an update is asked for with inconsistent weights or members."""


@dataclass(frozen=True)
class AlgorithmConfig:
    alpha: float = 0.01  # least weight a participating beacon must receive
    beta: float = 0.01  # self weight used whenever an update happens
    epsilon: float = 0.20  # relative inclusion error gate, noisy runs only
    update_mode: UpdateMode = UpdateMode.ALL_SETS
    max_one_robot_per_iteration: bool = False
    sign_screen: bool = True  # drop Cayley-Menger determinants with impossible sign
    error_gate: bool = True  # require relative inclusion error < epsilon
    normalize: bool = True  # rescale barycentric weights to sum to one
    noiseless_tolerance: float = geometry.NOISELESS_TOLERANCE
    interior_floor: float = geometry.INTERIOR_FLOOR

    def __post_init__(self):
        if isinstance(self.update_mode, str):
            object.__setattr__(self, "update_mode", UpdateMode(self.update_mode))
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def alpha_k(self, has_set: bool) -> float:
        """Self weight for one update; 1 means the estimate is left alone."""
        return self.beta if has_set else 1.0

    def tolerance(self, noisy: bool) -> float:
        return self.epsilon if (noisy and self.error_gate) else self.noiseless_tolerance

    @property
    def modified(self) -> bool:
        return self.sign_screen and self.error_gate and self.normalize


UNMODIFIED = dict(sign_screen=False, error_gate=False, normalize=False)


@dataclass
class EstimateState:
    estimates: np.ndarray  # (N, m), row i is robot i
    k: int = 0

    def __post_init__(self):
        self.estimates = np.asarray(self.estimates, dtype=float)
        if not np.all(np.isfinite(self.estimates)):
            raise ValueError("estimates must be finite")


@dataclass(frozen=True)
class TriangulationCandidate:
    owner: int
    members: tuple[int, ...]
    weights: BarycentricWeights
    relative_error: float
    beacon_members: tuple[int, ...]

    def split(self, n_robots: int) -> tuple[dict[int, float], dict[int, float]]:
        """Weights on robots and on beacons, keyed by node id."""
        p, b = {}, {}
        for j, w in zip(self.members, self.weights.weights.tolist()):
            (b if j >= n_robots else p)[j] = w
        return p, b


@dataclass(frozen=True)
class UpdateRecord:
    robot: int
    iteration: int
    alpha_k: float
    robot_weights: Mapping[int, float]
    beacon_weights: Mapping[int, float]
    candidate: TriangulationCandidate
    applied_motion: np.ndarray

    @property
    def convexity_gap(self) -> float:
        s = sum(self.robot_weights.values()) + sum(self.beacon_weights.values())
        return abs(self.alpha_k + (1 - self.alpha_k) * s - 1.0)


@dataclass
class Diagnostics:
    """Why candidate subsets were dropped during one or more iterations."""

    counts: Counter = field(default_factory=Counter)

    def add(self, key: str, n: int = 1):
        if n:
            self.counts[key] += int(n)


def reported_distances(measured: np.ndarray) -> np.ndarray:
    """Symmetric view where the pair (j, l) is the reading taken by min(j, l)."""
    upper = np.triu(measured)
    return upper + np.triu(measured, 1).T


@functools.lru_cache(maxsize=256)
def _combination_table(n: int, r: int) -> np.ndarray:
    """Lexicographic r-subsets of range(n) as an index array."""
    table = np.array(list(itertools.combinations(range(n), r)), dtype=int).reshape(-1, r)
    table.flags.writeable = False
    return table


def _enumerate(owner: int, neighbor_ids: Iterable[int], m: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations(sorted(neighbor_ids), m + 1))


def evaluate_candidates(
    owners: np.ndarray,
    members: np.ndarray,
    measured: np.ndarray,
    config: AlgorithmConfig,
    n_robots: int,
    noisy: bool,
    diagnostics: Diagnostics | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Screen many (owner, member set) pairs at once.

    Args:
        owners: (K,) updating robot of each subset.
        members: (K, m+1) node ids of each subset, ascending.
        measured: node-by-node matrix of measured distances, NaN if unknown;
            row a is what node a measured.
        config: algorithm parameters and noise-robustness switches.
        n_robots: ids at or above this are beacons.
        noisy: whether measurements carry noise (selects the tolerance).

    Returns:
        ``(accepted, weights, relative_error)`` with shapes (K,), (K, m+1), (K,).
        Weights are normalized when ``config.normalize`` is set.
    """
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    K, n = members.shape
    if K == 0:
        return np.zeros(0, bool), np.zeros((0, n)), np.zeros(0)
    shared = reported_distances(measured)
    outer = shared[members[:, :, None], members[:, None, :]] ** 2
    cand = measured[owners[:, None], members] ** 2
    complete = ~(np.isnan(outer).any(axis=(1, 2)) | np.isnan(cand).any(axis=1))
    diagnostics.add("missing_distances", int((~complete).sum()))
    outer = np.where(complete[:, None, None], outer, 0.0)
    cand = np.where(complete[:, None], cand, 0.0)

    tol = config.tolerance(noisy)
    res = geometry.inclusion_batch(
        outer, cand, tol, config.interior_floor, sign_screen=config.sign_screen
    )
    sub = np.nan_to_num(res.sub_volumes, nan=0.0)
    A = np.nan_to_num(res.outer_volume, nan=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        weights = sub / A[:, None]
    rel = res.relative_error

    if config.error_gate:
        accepted = res.verdict == Verdict.INSIDE
        if noisy:
            accepted &= rel < config.epsilon
    else:
        # no relative-error gate: only the "sum exceeds the hull" rejection remains
        interior = np.all(sub > config.interior_floor * A[:, None], axis=1)
        accepted = (
            res.outer_valid & res.subs_valid & (A > 0) & interior & (sub.sum(axis=1) <= A * (1 + tol))
        )
    accepted &= complete
    diagnostics.add("sign_screened", int((complete & ~(res.outer_valid & res.subs_valid)).sum()))

    if config.normalize:
        with np.errstate(divide="ignore", invalid="ignore"):
            weights = weights / weights.sum(axis=1, keepdims=True)
    beacon = members >= n_robots
    beacon_weight_ok = np.all(~beacon | (weights >= config.alpha), axis=1)
    diagnostics.add("beacon_weight_too_small", int((accepted & ~beacon_weight_ok).sum()))
    accepted &= beacon_weight_ok
    diagnostics.add("tested", int(complete.sum()))
    diagnostics.add("accepted", int(accepted.sum()))
    return accepted, weights, rel


def _candidate(owner, members, w, rel, n_robots, normalize) -> TriangulationCandidate:
    members = tuple(int(j) for j in members)
    w = geometry.normalize_exact(w) if normalize else np.asarray(w, dtype=float)
    return TriangulationCandidate(
        owner=int(owner),
        members=members,
        weights=BarycentricWeights(ids=members, weights=w),
        relative_error=float(rel),
        beacon_members=tuple(j for j in members if j >= n_robots),
    )


def find_triangulation_sets(
    i: int,
    neighbor_ids: Iterable[int],
    measured: np.ndarray,
    config: AlgorithmConfig,
    n_robots: int,
    dim: int,
    noisy: bool = False,
    diagnostics: Diagnostics | None = None,
) -> list[TriangulationCandidate]:
    """All accepted triangulation sets of robot ``i``, in lexicographic order."""
    neighbor_ids = sorted(set(neighbor_ids) - {i})
    if len(neighbor_ids) < dim + 1:
        return []
    subsets = _enumerate(i, neighbor_ids, dim)
    members = np.array(subsets, dtype=int)
    owners = np.full(len(subsets), i)
    accepted, weights, rel = evaluate_candidates(
        owners, members, measured, config, n_robots, noisy, diagnostics
    )
    return [
        _candidate(i, members[q], weights[q], rel[q], n_robots, config.normalize)
        for q in np.flatnonzero(accepted)
    ]


def update_estimate(
    i: int,
    current,
    candidate: TriangulationCandidate,
    neighbor_estimates: Mapping[int, np.ndarray] | np.ndarray,
    beacon_positions: Mapping[int, np.ndarray],
    alpha_k: float,
    measured_motion,
    beta: float = 0.0,
) -> np.ndarray:
    """Convex update: alpha_k * own + (1 - alpha_k) * barycentric mix + motion.

    Robot members contribute their current estimates, beacon members their
    true positions. ``neighbor_estimates`` may be a mapping or an (N, m)
    array indexed by robot id.
    """
    if candidate.owner != i or i in candidate.members:
        raise UpdateError(f"candidate owned by {candidate.owner} cannot update robot {i}")
    if not beta <= alpha_k < 1:
        raise UpdateError(f"alpha_k={alpha_k} outside [{beta}, 1)")
    if set(candidate.weights.ids) != set(candidate.members):
        raise UpdateError("weights are not keyed by the candidate members")
    mix = np.zeros_like(np.asarray(current, dtype=float))
    for j, w in zip(candidate.members, candidate.weights.weights):
        if j in candidate.beacon_members:
            if j not in beacon_positions:
                raise UpdateError(f"no position for beacon {j}")
            mix = mix + w * np.asarray(beacon_positions[j])
        else:
            mix = mix + w * np.asarray(neighbor_estimates[j])
    return alpha_k * np.asarray(current) + (1 - alpha_k) * mix + np.asarray(measured_motion)


@dataclass
class IterationInfo:
    neighbor_counts: np.ndarray
    true_motion: np.ndarray
    measured_motion: np.ndarray
    diagnostics: Diagnostics


def run_iteration(
    world: World,
    state: EstimateState,
    config: AlgorithmConfig,
) -> tuple[EstimateState, list[UpdateRecord], IterationInfo]:
    """Advance world and estimates by one iteration.

    Triangulation sets are searched on the geometry at time k with every
    neighbour's estimate frozen at its time-k value. The world then moves,
    and each robot combines its accepted sets (chained in ALL_SETS mode) and
    adds its measured motion. Randomness comes from ``world``'s streams.
    """
    N, m = world.n_robots, world.cfg.dim
    noisy = world.noise.noisy
    diag = Diagnostics()
    dist = world.true_distances()
    mask = world.neighbor_mask(dist)
    measured = world.measured_distances(dist)
    dropped = world.dropped()
    beacons = {N + j: p for j, p in enumerate(world.beacon_positions)}
    frozen = state.estimates.copy()

    owners, subsets = [np.zeros(0, int)], [np.zeros((0, m + 1), int)]
    counts = mask[:N].sum(axis=1)
    for i in np.flatnonzero((counts >= m + 1) & ~dropped).tolist():
        nbrs = np.flatnonzero(mask[i])
        combos = nbrs[_combination_table(len(nbrs), m + 1)]
        owners.append(np.full(len(combos), i))
        subsets.append(combos)
    owners_a = np.concatenate(owners)
    members_a = np.concatenate(subsets)
    accepted, weights, rel = evaluate_candidates(
        owners_a, members_a, measured, config, N, noisy, diag
    )

    per_robot: dict[int, list[TriangulationCandidate]] = {}
    for q in np.flatnonzero(accepted):
        i = int(owners_a[q])
        if config.update_mode is UpdateMode.FIRST_SET and i in per_robot:
            continue
        per_robot.setdefault(i, []).append(
            _candidate(i, members_a[q], weights[q], rel[q], N, config.normalize)
        )
    if config.max_one_robot_per_iteration and per_robot:
        first = min(per_robot)
        per_robot = {first: per_robot[first]}

    true_motion, measured_motion = world.step()
    motion = measured_motion if noisy else true_motion
    new = frozen + motion
    records: list[UpdateRecord] = []
    alpha_k = config.alpha_k(True)
    for i in sorted(per_robot):
        x = frozen[i]
        cands = per_robot[i]
        for c_idx, cand in enumerate(cands):
            last = c_idx == len(cands) - 1
            step = motion[i] if last else np.zeros(m)
            x = update_estimate(i, x, cand, frozen, beacons, alpha_k, step, config.beta)
            p, b = cand.split(N)
            records.append(
                UpdateRecord(i, state.k, alpha_k, p, b, cand, step)
            )
        new[i] = x
    info = IterationInfo(
        neighbor_counts=counts,
        true_motion=true_motion,
        measured_motion=measured_motion,
        diagnostics=diag,
    )
    return EstimateState(new, state.k + 1), records, info
