"""Ground-truth simulation of robots and beacons in a bounded box.

Node ids are dense integers: robots take 0..N-1 and beacons N..N+M-1, so a
node id doubles as a row index into every per-node array.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

MAX_RESAMPLES = 10_000


class Role(enum.Enum):
    ROBOT = "robot"
    BEACON = "beacon"


class NoiseModel(enum.Enum):
    NONE = "none"
    MODEL1 = "model1"  # Gaussian, variance growing with distance travelled / time
    MODEL2 = "model2"  # uniform, proportional to the measurement


class OutOfRangeError(ValueError):
    """A distance was requested between nodes farther apart than the radius."""


class Stream(enum.IntEnum):
    """Purposes of the independent random substreams."""

    MOTION = 0
    ODOMETRY = 1
    RANGING = 2
    PLACEMENT = 3
    ESTIMATE = 4
    DROP = 5


def substream(seed: int, purpose: Stream, node: int = 0) -> np.random.Generator:
    """Independent generator for one (purpose, node) pair under a master seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose), int(node)))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class NoiseConfig:
    model: NoiseModel = NoiseModel.NONE
    k_d: float = 0.0
    k_theta: float = 0.0
    k_r: float = 0.0
    proportional_fraction: float = 0.0

    def __post_init__(self):
        if isinstance(self.model, str):
            object.__setattr__(self, "model", NoiseModel(self.model))
        for name in ("k_d", "k_theta", "k_r", "proportional_fraction"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def noisy(self) -> bool:
        return self.model is not NoiseModel.NONE


@dataclass
class NodeState:
    id: int
    role: Role
    true_position: np.ndarray
    cumulative_distance: float = 0.0
    # rows span the directions this node may move along; shape (k, m)
    motion_basis: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return len(self.true_position)

    @property
    def motion_subspace_dim(self) -> int:
        if self.motion_basis is None:
            return self.dim
        return int(np.linalg.matrix_rank(self.motion_basis)) if len(self.motion_basis) else 0


@dataclass(frozen=True)
class MotionSample:
    true_motion: np.ndarray
    measured_motion: np.ndarray
    noise: np.ndarray


@dataclass(frozen=True)
class DistanceMeasurement:
    from_id: int
    to_id: int
    true_distance: float
    measured_distance: float
    noise: float


@dataclass(frozen=True)
class Region:
    low: tuple[float, ...]
    high: tuple[float, ...]

    def __post_init__(self):
        if len(self.low) != len(self.high) or any(h <= l for l, h in zip(self.low, self.high)):
            raise ValueError(f"empty region {self.low} .. {self.high}")

    @classmethod
    def square(cls, side: float, dim: int = 2) -> "Region":
        return cls((0.0,) * dim, (float(side),) * dim)

    @property
    def dim(self) -> int:
        return len(self.low)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.low) + np.asarray(self.high)) / 2

    @property
    def size(self) -> float:
        """Largest side length."""
        return float(np.max(np.asarray(self.high) - np.asarray(self.low)))

    def contains(self, p) -> bool:
        # plain float loop: called once per motion draw, numpy overhead dominates
        for v, lo, hi in zip(p, self.low, self.high):
            if not lo <= v <= hi:
                return False
        return True

    def uniform(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        size = (self.dim,) if n is None else (n, self.dim)
        return rng.uniform(self.low, self.high, size=size)


@dataclass
class WorldConfig:
    dim: int = 2
    region: Region = field(default_factory=lambda: Region.square(20.0))
    comm_radius: float = 2.0
    d_max: float = 5.0
    n_robots: int = 5
    n_beacons: int = 1
    rng_seed: int = 0
    beacon_motion: str = "static"  # "static" | "random"
    beacon_positions: np.ndarray | None = None  # default: all at region center
    beacon_trajectory: Callable[[int], np.ndarray] | None = None  # k -> (M, m)
    robot_motion_basis: np.ndarray | None = None  # shared by all robots; None = full space
    robot_positions: np.ndarray | None = None  # default: uniform in region
    drop_probability: float = 0.0

    def __post_init__(self):
        if self.n_robots < 1 or self.n_beacons < 0:
            raise ValueError("need at least one robot and a non-negative beacon count")
        if self.comm_radius <= 0:
            raise ValueError("communication radius must be positive")
        if self.d_max < 0:
            raise ValueError("d_max must be non-negative")
        if self.region.dim != self.dim:
            raise ValueError(f"region is {self.region.dim}-D but dim={self.dim}")
        if self.beacon_motion not in ("static", "random"):
            raise ValueError(f"unknown beacon motion {self.beacon_motion!r}")


def _random_direction(rng: np.random.Generator, basis: np.ndarray | None, dim: int) -> np.ndarray:
    if basis is None:
        k = dim
    else:
        k = len(basis)
    if k == 0:
        return np.zeros(dim)
    if k == 1:
        u = np.array([1.0 if rng.uniform() < 0.5 else -1.0])
    elif k == 2:
        th = rng.uniform(0.0, 2 * math.pi)
        if basis is None:
            return np.array([math.cos(th), math.sin(th)])
        u = np.array([math.cos(th), math.sin(th)])
    else:
        g = rng.standard_normal(k)
        u = g / np.linalg.norm(g)
    return u if basis is None else u @ basis


def step_motion(
    node: NodeState,
    rng: np.random.Generator,
    region: Region,
    d_max: float,
) -> tuple[NodeState, np.ndarray]:
    """One random step: length ~ U[0, d_max], direction uniform in the motion subspace.

    Steps leaving the region are redrawn, length and direction both.
    """
    x = node.true_position
    if node.motion_basis is None and len(x) == 2:
        # common planar case with plain floats; same draws as the general path
        (x0, x1), (lo0, lo1), (hi0, hi1) = x.tolist(), region.low, region.high
        for _ in range(MAX_RESAMPLES):
            d = rng.uniform(0.0, d_max) if d_max > 0 else 0.0
            th = rng.uniform(0.0, 2 * math.pi)
            s0, s1 = d * math.cos(th), d * math.sin(th)
            if lo0 <= x0 + s0 <= hi0 and lo1 <= x1 + s1 <= hi1:
                step = np.array([s0, s1])
                return NodeState(node.id, node.role, x + step, node.cumulative_distance + d), step
        log.warning("node %d: no admissible step after %d draws, staying put", node.id, MAX_RESAMPLES)
        return node, np.zeros(2)
    for _ in range(MAX_RESAMPLES):
        d = rng.uniform(0.0, d_max) if d_max > 0 else 0.0
        step = d * _random_direction(rng, node.motion_basis, node.dim)
        if region.contains(x + step):
            break
    else:  # pragma: no cover - needs a degenerate region/basis combination
        log.warning("node %d: no admissible step after %d draws, staying put", node.id, MAX_RESAMPLES)
        d, step = 0.0, np.zeros_like(x)
    moved = NodeState(node.id, node.role, x + step, node.cumulative_distance + d, node.motion_basis)
    return moved, step


def _odometry(true: np.ndarray, D: float, noise: NoiseConfig, rng: np.random.Generator) -> np.ndarray:
    if noise.model is NoiseModel.NONE:
        return true.copy()
    if noise.model is NoiseModel.MODEL1:
        sd_d = noise.k_d * math.sqrt(D)
        sd_th = noise.k_theta * math.sqrt(D)
        d = math.sqrt(float(true @ true))
        dn = d + sd_d * rng.standard_normal()
        if len(true) == 1:
            return np.array([math.copysign(dn, true[0] if d else 1.0)])
        if len(true) == 2:
            th = math.atan2(true[1], true[0]) + sd_th * rng.standard_normal()
            return np.array([dn * math.cos(th), dn * math.sin(th)])
        az = math.atan2(true[1], true[0]) + sd_th * rng.standard_normal()
        pol = math.acos(true[2] / d if d else 1.0) + sd_th * rng.standard_normal()
        return dn * np.array(
            [math.sin(pol) * math.cos(az), math.sin(pol) * math.sin(az), math.cos(pol)]
        )
    f = noise.proportional_fraction
    return true * (1.0 + rng.uniform(-f, f, size=true.shape))


def measure_motion(
    sample_true,
    node: NodeState,
    noise: NoiseConfig,
    rng: np.random.Generator,
) -> MotionSample:
    """Odometry reading of a true displacement.

    ``node.cumulative_distance`` is the distance travelled before this step;
    Model 1 scales both the length and the heading variance with it.
    """
    true = np.asarray(sample_true, dtype=float)
    measured = _odometry(true, node.cumulative_distance, noise, rng)
    return MotionSample(true_motion=true, measured_motion=measured, noise=measured - true)


def ranging_noise(true_distance, k: int, noise: NoiseConfig, rng: np.random.Generator):
    """Additive noise for one or many distance readings at iteration ``k``."""
    true_distance = np.asarray(true_distance, dtype=float)
    if noise.model is NoiseModel.MODEL1:
        return noise.k_r * math.sqrt(k) * rng.standard_normal(true_distance.shape)
    if noise.model is NoiseModel.MODEL2:
        f = noise.proportional_fraction
        return true_distance * rng.uniform(-f, f, size=true_distance.shape)
    return np.zeros_like(true_distance)


class World:
    """Mutable ground truth: node positions, iteration counter, RNG streams."""

    def __init__(self, cfg: WorldConfig, noise: NoiseConfig | None = None):
        self.cfg = cfg
        self.noise = noise or NoiseConfig()
        self.k = 0
        N, M, m = cfg.n_robots, cfg.n_beacons, cfg.dim
        seed = cfg.rng_seed
        self._motion_rng = [substream(seed, Stream.MOTION, i) for i in range(N + M)]
        self._odo_rng = [substream(seed, Stream.ODOMETRY, i) for i in range(N)]
        self._range_rng = [substream(seed, Stream.RANGING, i) for i in range(N)]
        self._drop_rng = substream(seed, Stream.DROP)

        if cfg.robot_positions is not None:
            robots = np.asarray(cfg.robot_positions, dtype=float).reshape(N, m)
        else:
            robots = cfg.region.uniform(substream(seed, Stream.PLACEMENT), N)
        if cfg.beacon_trajectory is not None:
            beacons = np.asarray(cfg.beacon_trajectory(0), dtype=float).reshape(M, m)
        elif cfg.beacon_positions is not None:
            beacons = np.asarray(cfg.beacon_positions, dtype=float).reshape(M, m)
        else:
            beacons = np.tile(cfg.region.center, (M, 1))
        basis = None if cfg.robot_motion_basis is None else np.atleast_2d(cfg.robot_motion_basis)
        self.nodes: list[NodeState] = [
            NodeState(i, Role.ROBOT, robots[i].copy(), motion_basis=basis) for i in range(N)
        ]
        beacon_basis = None if cfg.beacon_motion == "random" else np.zeros((0, m))
        self.nodes += [
            NodeState(N + j, Role.BEACON, beacons[j].copy(), motion_basis=beacon_basis)
            for j in range(M)
        ]
        for n in self.nodes:
            if not cfg.region.contains(n.true_position):
                raise ValueError(f"node {n.id} starts outside the region")

    @property
    def n_robots(self) -> int:
        return self.cfg.n_robots

    @property
    def n_beacons(self) -> int:
        return self.cfg.n_beacons

    @property
    def positions(self) -> np.ndarray:
        return np.array([n.true_position for n in self.nodes])

    @property
    def robot_positions(self) -> np.ndarray:
        return self.positions[: self.n_robots]

    @property
    def beacon_positions(self) -> np.ndarray:
        return self.positions[self.n_robots :]

    def is_beacon(self, i: int) -> bool:
        return i >= self.n_robots

    def true_distances(self) -> np.ndarray:
        p = self.positions
        return np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))

    def neighbor_mask(self, dist: np.ndarray | None = None) -> np.ndarray:
        dist = self.true_distances() if dist is None else dist
        mask = dist <= self.cfg.comm_radius
        np.fill_diagonal(mask, False)
        return mask

    def neighbors(self, i: int) -> set[int]:
        """Ids within the closed communication ball of node ``i``."""
        return set(np.flatnonzero(self.neighbor_mask()[i]).tolist())

    def step(self) -> tuple[np.ndarray, np.ndarray]:
        """Advance all nodes one motion step.

        Returns the true and measured displacement of every robot, both (N, m).
        """
        N = self.n_robots
        true = np.zeros((N, self.cfg.dim))
        measured = np.zeros_like(true)
        for i in range(N):
            before = self.nodes[i]
            after, step = step_motion(before, self._motion_rng[i], self.cfg.region, self.cfg.d_max)
            self.nodes[i] = after
            true[i] = step
            measured[i] = _odometry(step, before.cumulative_distance, self.noise, self._odo_rng[i])
        self.k += 1
        if self.cfg.beacon_trajectory is not None:
            new = np.asarray(self.cfg.beacon_trajectory(self.k), dtype=float).reshape(self.n_beacons, -1)
            for j in range(self.n_beacons):
                b = self.nodes[N + j]
                d = float(np.linalg.norm(new[j] - b.true_position))
                self.nodes[N + j] = replace(
                    b, true_position=new[j].copy(), cumulative_distance=b.cumulative_distance + d
                )
        elif self.cfg.beacon_motion == "random":
            for j in range(N, N + self.n_beacons):
                self.nodes[j], _ = step_motion(
                    self.nodes[j], self._motion_rng[j], self.cfg.region, self.cfg.d_max
                )
        return true, measured

    def measure_distance(self, i: int, j: int) -> DistanceMeasurement:
        """One noisy reading by robot ``i`` of its distance to node ``j``."""
        d = float(np.linalg.norm(self.nodes[i].true_position - self.nodes[j].true_position))
        if d > self.cfg.comm_radius:
            raise OutOfRangeError(f"node {j} is {d:.3f} m from {i}, radius {self.cfg.comm_radius}")
        if self.is_beacon(i):
            return DistanceMeasurement(i, j, d, d, 0.0)
        r = float(ranging_noise(d, self.k, self.noise, self._range_rng[i]))
        measured = max(d + r, 0.0)
        return DistanceMeasurement(i, j, d, measured, measured - d)

    def measured_distances(self, dist: np.ndarray | None = None) -> np.ndarray:
        """Distances as reported this iteration, NaN where nobody can measure.

        Entry [a, b] is node a's reading of node b. Every robot takes one fresh
        reading of each node in range. Beacons know each other's positions
        exactly and take no readings of robots.
        """
        dist = self.true_distances() if dist is None else dist
        N = self.n_robots
        out = np.where(self.neighbor_mask(dist), dist, np.nan)
        np.fill_diagonal(out, 0.0)
        out[N:, N:] = dist[N:, N:]
        out[N:, :N] = np.nan
        if self.noise.model is NoiseModel.MODEL1:
            sd = self.noise.k_r * math.sqrt(self.k)
            n = len(dist)
            r = np.stack([rng.standard_normal(n) for rng in self._range_rng])
            out[:N] = np.maximum(out[:N] + sd * r, 0.0)
        elif self.noise.noisy:
            for i in range(N):
                r = ranging_noise(dist[i], self.k, self.noise, self._range_rng[i])
                out[i] = np.maximum(out[i] + r, 0.0)
        if self.noise.noisy:
            np.fill_diagonal(out[:N, :N], 0.0)
        return out

    def dropped(self) -> np.ndarray:
        """Robots that lose communication this iteration."""
        p = self.cfg.drop_probability
        if p <= 0:
            return np.zeros(self.n_robots, dtype=bool)
        return self._drop_rng.uniform(size=self.n_robots) < p
