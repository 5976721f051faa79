"""Linear time-varying view of the localizer.

Stacking all estimates, an iteration reads x_{k+1} = P_k x_k + B_k u_k + motion,
where P_k (N x N) holds weights on robot estimates and B_k (N x M) weights on
beacon positions. Without noise the error obeys e_{k+1} = P_k e_k, so the
estimates converge exactly when the product of the P_k vanishes. This module
builds those matrices from update records, cuts the stream into slices, and
checks the convergence and feasibility conditions on observed traces.
"""
from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .localizer import UpdateRecord

CONVEXITY_TOL = 1e-12


class MatrixKind(enum.Enum):
    IDENTITY = "identity"
    STOCHASTIC = "stochastic"
    SUBSTOCHASTIC = "substochastic"


class ConvexityError(ValueError):
    """Update weights do not form a convex combination."""


@dataclass(frozen=True)
class SystemMatrices:
    P: np.ndarray
    B: np.ndarray
    kind: MatrixKind
    updated_rows: tuple[int, ...] = ()

    @property
    def row_deficit(self) -> np.ndarray:
        """1 - row sums of P, computed from B so that no cancellation occurs."""
        return self.B.sum(axis=1)


def _row(records: Sequence[UpdateRecord], i: int, N: int, M: int) -> tuple[np.ndarray, np.ndarray]:
    # fold a chain of same-iteration updates of robot i into one row
    p = np.zeros(N)
    b = np.zeros(M)
    p[i] = 1.0
    for rec in records:
        a = rec.alpha_k
        p *= a
        b *= a
        for j, w in rec.robot_weights.items():
            p[j] += (1 - a) * w
        for j, w in rec.beacon_weights.items():
            b[j - N] += (1 - a) * w
    return p, b


def _kind(B: np.ndarray, rows: Sequence[int]) -> MatrixKind:
    if not rows:
        return MatrixKind.IDENTITY
    return MatrixKind.SUBSTOCHASTIC if np.any(B > 0) else MatrixKind.STOCHASTIC


def _matrix(rows: dict[int, list[UpdateRecord]], N: int, M: int) -> SystemMatrices:
    P = np.eye(N)
    B = np.zeros((N, M))
    for i, recs in rows.items():
        P[i], B[i] = _row(recs, i, N, M)
    return SystemMatrices(P, B, _kind(B, list(rows)), tuple(sorted(rows)))


def _order(groups: dict[int, list[UpdateRecord]]) -> list[int] | None:
    """Robot order in which single-row factors reproduce the frozen-snapshot update.

    Robot i must be applied before any updating robot whose estimate it read.
    Returns None when the reads form a cycle.
    """
    reads = {i: {j for r in recs for j in r.robot_weights} & groups.keys() for i, recs in groups.items()}
    order, done = [], set()
    pending = sorted(groups)
    while pending:
        # i is ready once no pending robot still needs to read i's old value
        ready = [i for i in pending if not any(i in reads[j] for j in pending if j != i)]
        if not ready:
            return None
        i = ready[0]
        order.append(i)
        pending.remove(i)
        done.add(i)
    return order


def check_convexity(rec: UpdateRecord, tol: float = CONVEXITY_TOL):
    if rec.convexity_gap > tol:
        raise ConvexityError(
            f"robot {rec.robot} at k={rec.iteration}: weights sum off by {rec.convexity_gap:.3g}"
        )
    if any(w < 0 for w in rec.robot_weights.values()) or any(w < 0 for w in rec.beacon_weights.values()):
        raise ConvexityError(f"robot {rec.robot} at k={rec.iteration}: negative weight")


def assemble_matrices(
    records: Iterable[UpdateRecord],
    n_robots: int,
    n_beacons: int,
    strict: bool = True,
) -> list[SystemMatrices]:
    """System matrices of one iteration, in application order.

    Each record becomes its own single-row matrix whenever some ordering of
    the updating robots makes the product of those factors equal to the
    simultaneous update (always the case with one updating robot). If the
    robots read each other's estimates in a cycle, the iteration is returned
    as one matrix with every updating row folded in.
    """
    N, M = n_robots, n_beacons
    records = list(records)
    if strict:
        for rec in records:
            check_convexity(rec)
    if not records:
        return [SystemMatrices(np.eye(N), np.zeros((N, M)), MatrixKind.IDENTITY)]
    groups: dict[int, list[UpdateRecord]] = defaultdict(list)
    for rec in records:
        groups[rec.robot].append(rec)
    order = _order(groups)
    if order is None:
        return [_matrix(groups, N, M)]
    return [_matrix({i: [rec]}, N, M) for i in order for rec in groups[i]]


def product(mats: Sequence[SystemMatrices]) -> np.ndarray:
    """P_last ... P_first for matrices listed in application order."""
    out = np.eye(mats[0].P.shape[0])
    for s in mats:
        out = s.P @ out
    return out


def slice_norm_bound(length: int, beta1: float, deficit: float) -> float:
    """Upper bound 1 - beta1^(length-1) * deficit on a slice's infinity norm.

    ``deficit`` is how far below one a sub-stochastic row sum is guaranteed
    to stay. With self weight beta and least beacon weight alpha an update
    with a beacon leaves a row sum of at most 1 - (1 - beta) * alpha, so the
    localizer's deficit is (1 - beta) * alpha.
    """
    if length < 1:
        raise ValueError("slice length must be at least 1")
    return 1.0 - beta1 ** (length - 1) * deficit


def slice_deficit_bound(length: int, beta1: float, deficit: float) -> float:
    """The same bound expressed as a least row deficit; avoids rounding to 1."""
    return beta1 ** (length - 1) * deficit


def growth_bound(i: int, beta1: float, deficit: float, gamma1: float, gamma2: float) -> float:
    """Largest admissible length of a slice at index ``i`` under the growth condition.

    ln((1 - exp(-gamma2 * i^-gamma1)) / deficit) / ln(beta1) + 1. Since ln(beta1)
    is negative the bound grows with ``i`` when gamma1 > 0: later slices may
    be longer.
    """
    if not (0 <= gamma1 <= 1) or gamma2 <= 0:
        raise ValueError("need gamma1 in [0, 1] and gamma2 > 0")
    x = -math.expm1(-gamma2 * i ** (-gamma1))
    return math.log(x / deficit) / math.log(beta1) + 1.0


@dataclass(frozen=True)
class SliceSummary:
    index: int
    start: int  # position of the first matrix in the stream
    length: int
    product_inf_norm: float
    min_row_deficit: float
    bound: float
    deficit_bound: float

    @property
    def subunit(self) -> bool:
        return self.min_row_deficit > 0

    def within_bound(self, tol: float = 1e-12) -> bool:
        return self.min_row_deficit + tol >= self.deficit_bound


@dataclass
class SliceState:
    n_robots: int
    beta1: float
    deficit: float
    current_start: int | None = None
    length: int = 0
    seen: int = 0  # matrices consumed so far
    running: np.ndarray | None = None
    running_deficit: np.ndarray | None = None
    rows_substochastic: np.ndarray = None
    completed: list[SliceSummary] = field(default_factory=list)

    def __post_init__(self):
        if self.rows_substochastic is None:
            self.rows_substochastic = np.zeros(self.n_robots, dtype=bool)

    @property
    def open(self) -> bool:
        return self.current_start is not None


def _advance_one(state: SliceState, mat: SystemMatrices) -> SliceSummary | None:
    state.seen += 1
    b = mat.row_deficit
    if not state.open:
        if mat.kind is not MatrixKind.SUBSTOCHASTIC:
            return None
        state.current_start = state.seen - 1
        state.running = mat.P.copy()
        state.running_deficit = b.copy()
        state.length = 1
    else:
        state.running = mat.P @ state.running
        # 1 - (P R) 1 = b + P (1 - R 1): all terms non-negative
        state.running_deficit = b + mat.P @ state.running_deficit
        state.length += 1
    state.rows_substochastic = state.running_deficit > 0
    if not state.rows_substochastic.all():
        return None
    L = state.length
    summary = SliceSummary(
        index=len(state.completed),
        start=state.current_start,
        length=L,
        product_inf_norm=float(np.abs(state.running).sum(axis=1).max()),
        min_row_deficit=float(state.running_deficit.min()),
        bound=slice_norm_bound(L, state.beta1, state.deficit),
        deficit_bound=slice_deficit_bound(L, state.beta1, state.deficit),
    )
    state.completed.append(summary)
    state.current_start = None
    state.running = None
    state.running_deficit = None
    state.length = 0
    state.rows_substochastic = np.zeros(state.n_robots, dtype=bool)
    return summary


def advance_slice(
    state: SliceState, mats: SystemMatrices | Sequence[SystemMatrices]
) -> tuple[SliceState, list[SliceSummary]]:
    """Feed matrices into the slice segmentation; returns slices that closed.

    A slice opens on the first sub-stochastic matrix and closes once every
    row of the running product sums to less than one. A row gets there either
    by updating with a beacon or by updating with robots already informed in
    the same slice; both show up as a positive running row deficit.
    """
    if isinstance(mats, SystemMatrices):
        mats = [mats]
    closed = []
    for mat in mats:
        s = _advance_one(state, mat)
        if s is not None:
            closed.append(s)
    return state, closed


class Theorem1Mode(enum.Enum):
    BOUNDED = "bounded"
    INFINITE_BOUNDED = "infinite_bounded"
    GROWTH = "growth"


@dataclass(frozen=True)
class Theorem1Report:
    mode: Theorem1Mode
    satisfied: bool | None  # None: nothing to judge
    witnesses: tuple[int, ...]
    detail: dict


def check_theorem1(
    summaries: Sequence[SliceSummary],
    mode: Theorem1Mode | str,
    L: int | None = None,
    gamma1: float | None = None,
    gamma2: float | None = None,
    beta1: float | None = None,
    deficit: float | None = None,
) -> Theorem1Report:
    """Check one of the three sufficient slice-length conditions on a finite trace.

    BOUNDED(L): every slice has length <= L; witnesses are the offending slices.
    INFINITE_BOUNDED(L): slices of length <= L keep occurring, judged as at
    least one such slice in the later half of the trace; a finite trace can
    only give frequencies, which are reported.
    GROWTH(gamma1, gamma2): for every index i some slice j >= i is no longer
    than growth_bound(i); witnesses are the indices i with no such slice.
    """
    mode = Theorem1Mode(mode)
    lengths = [s.length for s in summaries]
    if not lengths:
        return Theorem1Report(mode, None, (), {"slices": 0})
    n = len(lengths)
    detail = {"slices": n, "max_length": max(lengths), "mean_length": float(np.mean(lengths))}
    if mode is Theorem1Mode.BOUNDED:
        if L is None:
            raise ValueError("BOUNDED needs L")
        bad = tuple(j for j, ln in enumerate(lengths) if ln > L)
        return Theorem1Report(mode, not bad, bad, {**detail, "L": L})
    if mode is Theorem1Mode.INFINITE_BOUNDED:
        if L is None:
            raise ValueError("INFINITE_BOUNDED needs L")
        short = [j for j, ln in enumerate(lengths) if ln <= L]
        late = [j for j in short if j >= n // 2]
        detail.update(L=L, frequency=len(short) / n, late_frequency=len(late) / max(1, n - n // 2))
        return Theorem1Report(mode, bool(late), tuple(short), detail)
    if None in (gamma1, gamma2, beta1, deficit):
        raise ValueError("GROWTH needs gamma1, gamma2, beta1 and deficit")
    # suffix minimum: shortest slice at or after each index
    suffix_min = np.minimum.accumulate(np.array(lengths)[::-1])[::-1]
    bounds = [growth_bound(i + 1, beta1, deficit, gamma1, gamma2) for i in range(n)]
    bad = tuple(i for i in range(n) if suffix_min[i] > bounds[i])
    return Theorem1Report(mode, not bad, bad, {**detail, "gamma1": gamma1, "gamma2": gamma2})


def verify_error_dynamics(
    e_k: np.ndarray,
    mats: SystemMatrices | Sequence[SystemMatrices],
    e_next: np.ndarray,
    noisy: bool = False,
) -> float | None:
    """Infinity norm of e_{k+1} - P_k e_k, or None when noise voids the identity."""
    if noisy:
        return None
    if isinstance(mats, SystemMatrices):
        mats = [mats]
    P = product(mats)
    r = np.asarray(e_next) - P @ np.asarray(e_k)
    return float(np.abs(r).sum(axis=1).max()) if r.ndim == 2 else float(np.abs(r).max())


def error_dynamics_tolerance(e_k: np.ndarray) -> float:
    return 1e-9 * (1.0 + float(np.abs(np.atleast_2d(e_k)).sum(axis=1).max()))


@dataclass(frozen=True)
class FeasibilityInput:
    n_beacons: int
    n_robots: int
    dim: int
    dim_robot_motion: int
    dim_beacon_motion: int

    def __post_init__(self):
        for d in (self.dim_robot_motion, self.dim_beacon_motion):
            if not 0 <= d <= self.dim:
                raise ValueError(f"motion dimension {d} outside 0..{self.dim}")


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violated_conditions: tuple[str, ...]
    detail: dict


def check_feasibility(f: FeasibilityInput) -> FeasibilityReport:
    """Necessary conditions on beacon count, node count and motion dimension.

    - at least one beacon;
    - beacons + robots >= m + 2, so a robot can have m + 1 neighbours;
    - beacons + dim(robot motion) + dim(beacon motion) >= m + 1.
    """
    checks = {
        "at_least_one_beacon": f.n_beacons >= 1,
        "enough_nodes": f.n_beacons + f.n_robots >= f.dim + 2,
        "enough_motion": f.n_beacons + f.dim_robot_motion + f.dim_beacon_motion >= f.dim + 1,
    }
    violated = tuple(k for k, ok in checks.items() if not ok)
    detail = {
        "beacons": f.n_beacons,
        "nodes": f.n_beacons + f.n_robots,
        "required_nodes": f.dim + 2,
        "motion_budget": f.n_beacons + f.dim_robot_motion + f.dim_beacon_motion,
        "required_motion_budget": f.dim + 1,
    }
    return FeasibilityReport(not violated, violated, detail)
