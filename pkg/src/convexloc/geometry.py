"""Distance-only simplex geometry.

Volumes come from Cayley-Menger determinants of squared pairwise distances,
so no coordinates are ever needed. Everything here works for m in {1, 2, 3};
the batched helpers accept arbitrary leading dimensions so a robot can test
all of its candidate triangulation sets with a handful of numpy calls.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

NOISELESS_TOLERANCE = 1e-9
INTERIOR_FLOOR = 1e-12


class GeometryError(ValueError):
    """Raised for malformed distance input or a dimension outside 0..3."""


class ContractError(RuntimeError):
    """Raised when an operation is called on input it does not accept."""


class Verdict(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    DEGENERATE = "degenerate"


def coefficient_s(m: int) -> float:
    """Normalizing coefficient s_m = 2^m (m!)^2 / (-1)^(m+1).

    The squared hypervolume of an m-simplex is its Cayley-Menger determinant
    divided by s_m: -1, 2, -16, 288 for m = 0..3.
    """
    if not isinstance(m, (int, np.integer)) or not 0 <= m <= 3:
        raise GeometryError(f"dimension m must be in 0..3, got {m!r}")
    m = int(m)
    return float(2**m * math.factorial(m) ** 2 * (-1) ** (m + 1))


def _dim_of(D: np.ndarray) -> int:
    if D.ndim < 2 or D.shape[-1] != D.shape[-2]:
        raise GeometryError(f"expected square distance matrices, got shape {D.shape}")
    m = D.shape[-1] - 1
    if not 0 <= m <= 3:
        raise GeometryError(f"matrix of {m + 1} points implies m={m}; only 0..3 supported")
    return m


def _small_det(G: np.ndarray) -> np.ndarray:
    # closed forms keep exact zeros for exactly degenerate integer input
    m = G.shape[-1]
    if m == 0:
        return np.ones(G.shape[:-2])
    if m == 1:
        return G[..., 0, 0]
    if m == 2:
        return G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    return (
        G[..., 0, 0] * (G[..., 1, 1] * G[..., 2, 2] - G[..., 1, 2] * G[..., 2, 1])
        - G[..., 0, 1] * (G[..., 1, 0] * G[..., 2, 2] - G[..., 1, 2] * G[..., 2, 0])
        + G[..., 0, 2] * (G[..., 1, 0] * G[..., 2, 1] - G[..., 1, 1] * G[..., 2, 0])
    )


def _triangle_determinant(D: np.ndarray):
    # -16 A^2 = -(a+b+c)(-a+b+c)(a-b+c)(a+b-c), factored in Kahan's order
    # (a >= b >= c) so that needle-shaped triangles keep full relative accuracy
    sides = np.sqrt(np.stack([D[..., 0, 1], D[..., 1, 2], D[..., 0, 2]], axis=-1))
    sides = np.sort(sides, axis=-1)
    c, b, a = sides[..., 0], sides[..., 1], sides[..., 2]
    det = -((a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c)))
    return float(det) if np.ndim(det) == 0 else det


def cayley_menger_determinant(D) -> np.ndarray | float:
    """Signed determinant of the bordered matrix [[0, 1^T], [1, D]].

    ``D`` holds squared distances, shape (..., m+1, m+1). The bordered
    determinant is evaluated through the equivalent m x m form
    (-1)^(m+1) det(d_0j + d_0k - d_jk), which is smaller and better
    conditioned than expanding the (m+2) x (m+2) matrix. Triangles use the
    factored side-length form instead, which avoids cancellation on slivers.
    """
    D = np.asarray(D, dtype=float)
    m = _dim_of(D)
    if m == 2:
        return _triangle_determinant(D)
    d0 = D[..., 0, 1:]
    G = d0[..., :, None] + d0[..., None, :] - D[..., 1:, 1:]
    det = (-1.0) ** (m + 1) * _small_det(G)
    return float(det) if np.ndim(det) == 0 else det


def volumes_from_determinants(det, m: int, sign_screen: bool = True):
    """Map CM determinants to (volume, valid) arrays.

    With ``sign_screen`` a determinant whose sign disagrees with s_m is
    flagged invalid and its volume set to NaN. Without it the magnitude is
    used, which is what an unscreened implementation would do.
    """
    s = coefficient_s(m)
    ratio = np.asarray(det, dtype=float) / s
    valid = ratio >= 0.0
    if sign_screen:
        vol = np.where(valid, np.sqrt(np.where(valid, ratio, 0.0)), np.nan)
    else:
        vol = np.sqrt(np.abs(ratio))
        valid = np.ones_like(valid)
    return vol, valid


@dataclass(frozen=True)
class SimplexVolumeResult:
    raw_determinant: float
    volume: float | None
    valid: bool


def validate_squared_distances(D, atol: float = 0.0) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    _dim_of(D)
    if not np.all(np.isfinite(D)):
        raise GeometryError("squared distances must be finite")
    if np.any(D < 0):
        raise GeometryError("squared distances must be non-negative")
    if not np.allclose(D, np.swapaxes(D, -1, -2), rtol=0.0, atol=atol):
        raise GeometryError("squared distance matrix is not symmetric")
    if np.any(np.diagonal(D, axis1=-2, axis2=-1) != 0):
        raise GeometryError("squared distance matrix needs a zero diagonal")
    return D


def simplex_volume(D, sign_screen: bool = True) -> SimplexVolumeResult:
    """Hypervolume of the simplex whose squared edge lengths are ``D``."""
    D = validate_squared_distances(D)
    m = _dim_of(D)
    det = cayley_menger_determinant(D)
    vol, valid = volumes_from_determinants(det, m, sign_screen)
    valid = bool(valid)
    return SimplexVolumeResult(
        raw_determinant=float(det) + 0.0,  # no negative zero
        volume=float(vol) if valid else None,
        valid=valid,
    )


def substituted_matrices(outer: np.ndarray, candidate: np.ndarray) -> np.ndarray:
    """Build the m+1 matrices with the candidate point replacing vertex j.

    ``outer`` has shape (..., m+1, m+1) and ``candidate`` (..., m+1) holds
    squared distances from the candidate to each vertex. Result has shape
    (..., m+1, m+1, m+1) with axis -3 indexing the replaced vertex.
    """
    n = outer.shape[-1]
    sub = np.repeat(outer[..., None, :, :], n, axis=-3).copy()
    idx = np.arange(n)
    sub[..., idx, idx, :] = candidate[..., None, :]
    cols = np.swapaxes(sub, -1, -2)  # view, writes through
    cols[..., idx, idx, :] = candidate[..., None, :]
    sub[..., idx, idx, idx] = 0.0
    return sub


@dataclass(frozen=True)
class InclusionBatch:
    """Array form of many inclusion tests sharing one dimension."""

    outer_volume: np.ndarray
    sub_volumes: np.ndarray
    relative_error: np.ndarray
    verdict: np.ndarray  # object array of Verdict
    outer_valid: np.ndarray
    subs_valid: np.ndarray

    @property
    def sub_sum(self) -> np.ndarray:
        return self.sub_volumes.sum(axis=-1)


def inclusion_batch(
    outer,
    candidate,
    tolerance: float = NOISELESS_TOLERANCE,
    interior_floor: float = INTERIOR_FLOOR,
    sign_screen: bool = True,
) -> InclusionBatch:
    """Vectorized inclusion test, see :func:`inclusion_test`."""
    outer = np.asarray(outer, dtype=float)
    candidate = np.asarray(candidate, dtype=float)
    m = _dim_of(outer)
    if candidate.shape != outer.shape[:-1]:
        raise GeometryError(
            f"candidate distances shape {candidate.shape} does not match {outer.shape[:-1]}"
        )
    outer_det = cayley_menger_determinant(outer)
    sub_det = cayley_menger_determinant(substituted_matrices(outer, candidate))
    outer_vol, outer_ok = volumes_from_determinants(outer_det, m, sign_screen)
    sub_vol, sub_ok = volumes_from_determinants(sub_det, m, sign_screen)
    outer_vol = np.asarray(outer_vol, dtype=float)
    sub_vol = np.asarray(sub_vol, dtype=float)
    subs_ok = np.all(sub_ok, axis=-1)

    total = sub_vol.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(total - outer_vol) / outer_vol
    usable = np.asarray(outer_ok & subs_ok & (outer_vol > 0))
    rel = np.where(usable, rel, np.nan)
    interior = np.all(sub_vol > interior_floor * outer_vol[..., None], axis=-1)

    verdict = np.full(outer_vol.shape, Verdict.DEGENERATE, dtype=object)
    inside = usable & (rel <= tolerance) & interior
    outside = usable & ~inside & (total >= outer_vol * (1.0 - tolerance))
    verdict[inside] = Verdict.INSIDE
    verdict[outside] = Verdict.OUTSIDE
    return InclusionBatch(
        outer_volume=outer_vol,
        sub_volumes=sub_vol,
        relative_error=rel,
        verdict=verdict,
        outer_valid=np.asarray(outer_ok),
        subs_valid=np.asarray(subs_ok),
    )


@dataclass(frozen=True)
class InclusionResult:
    verdict: Verdict
    outer_volume: float
    sub_volumes: tuple[float, ...]
    relative_error: float

    @property
    def sub_sum(self) -> float:
        return math.fsum(self.sub_volumes)


def inclusion_test(
    outer,
    candidate_distances: Sequence[float],
    tolerance: float = NOISELESS_TOLERANCE,
    interior_floor: float = INTERIOR_FLOOR,
    sign_screen: bool = True,
) -> InclusionResult:
    """Decide whether a point lies strictly inside a simplex from distances alone.

    Args:
        outer: squared distances among the m+1 simplex vertices.
        candidate_distances: squared distances from the point to each vertex.
        tolerance: largest admissible relative mismatch between the summed
            sub-simplex volumes and the outer volume.
        interior_floor: each sub-volume must exceed this fraction of the
            outer volume, which rejects points on the boundary.
        sign_screen: discard determinants with an impossible sign.

    Returns:
        INSIDE when the sub-volumes add up to the outer volume and all are
        positive; OUTSIDE when they add up to more (or the point sits on the
        boundary); DEGENERATE when the outer simplex is flat, a determinant
        fails the sign screen, or the sum falls short of the outer volume,
        which no Euclidean configuration can produce.
    """
    outer = validate_squared_distances(outer, atol=1e-12)
    cand = np.asarray(candidate_distances, dtype=float)
    if cand.shape != (outer.shape[0],):
        raise GeometryError(
            f"need {outer.shape[0]} candidate distances for m={outer.shape[0] - 1}, "
            f"got shape {cand.shape}"
        )
    if np.any(cand < 0):
        raise GeometryError("squared distances must be non-negative")
    b = inclusion_batch(outer, cand, tolerance, interior_floor, sign_screen)
    sub = np.where(np.isnan(b.sub_volumes), 0.0, b.sub_volumes)
    return InclusionResult(
        verdict=b.verdict[()],
        outer_volume=float(np.nan_to_num(b.outer_volume, nan=0.0)),
        sub_volumes=tuple(float(v) for v in sub),
        relative_error=float(b.relative_error),
    )


@dataclass(frozen=True)
class BarycentricWeights:
    ids: tuple
    weights: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.ids, self.weights.tolist()))

    def __getitem__(self, key):
        return self.weights[self.ids.index(key)]


def normalize_exact(w: np.ndarray) -> np.ndarray:
    """Scale positive weights so that their exactly rounded sum is 1."""
    w = np.asarray(w, dtype=float) / math.fsum(w)
    for _ in range(3):
        gap = 1.0 - math.fsum(w)
        if gap == 0.0:
            break
        k = int(np.argmax(w))
        w[k] += gap
    return w


def barycentric_coordinates(
    incl: InclusionResult,
    ids: Sequence[Hashable] | None = None,
    normalize: bool = True,
) -> BarycentricWeights:
    """Weights a_j = A_{j replaced by point} / A_outer for an INSIDE result.

    With ``normalize`` (the default) the weights are rescaled to sum to one,
    which restores convexity when noisy volumes do not add up.
    """
    if incl.verdict is not Verdict.INSIDE:
        raise ContractError(f"barycentric coordinates need an INSIDE verdict, got {incl.verdict}")
    n = len(incl.sub_volumes)
    ids = tuple(range(n)) if ids is None else tuple(ids)
    if len(ids) != n:
        raise GeometryError(f"{len(ids)} ids for {n} vertices")
    w = np.asarray(incl.sub_volumes, dtype=float) / incl.outer_volume
    if normalize:
        w = normalize_exact(w)
    return BarycentricWeights(ids=ids, weights=w)
