import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from convexloc.geometry import (
    ContractError,
    GeometryError,
    Verdict,
    barycentric_coordinates,
    cayley_menger_determinant,
    coefficient_s,
    inclusion_batch,
    inclusion_test,
    normalize_exact,
    simplex_volume,
)

from .oracles import (
    barycentric_oracle,
    bordered_determinant,
    kahan_heron,
    random_simplices,
    shape_quality,
    shoelace,
    sq_dists,
)


# --- coefficient and determinant -------------------------------------------------


@pytest.mark.parametrize("m,expected", [(0, -1), (1, 2), (2, -16), (3, 288)])
def test_coefficient_values(m, expected):
    assert coefficient_s(m) == expected


@pytest.mark.parametrize("m", [-1, 4, 2.0])
def test_coefficient_domain(m):
    with pytest.raises(GeometryError):
        coefficient_s(m)


def test_cm_345_triangle_matches_cofactor_oracle():
    D = [[0, 9, 16], [9, 0, 25], [16, 25, 0]]
    assert bordered_determinant(D) == -576
    assert cayley_menger_determinant(D) == -576


def test_cm_regular_tetrahedron():
    D = np.ones((4, 4)) - np.eye(4)
    assert bordered_determinant(D.astype(int).tolist()) == 4
    assert cayley_menger_determinant(D) == pytest.approx(4, rel=1e-14)


def test_cm_all_zero_is_zero():
    assert cayley_menger_determinant(np.zeros((3, 3))) == 0


def test_cm_batched_shape():
    D = np.stack([sq_dists(np.random.default_rng(s).uniform(size=(3, 2))) for s in range(4)])
    out = cayley_menger_determinant(D)
    assert out.shape == (4,)
    for q in range(4):
        assert out[q] == pytest.approx(cayley_menger_determinant(D[q]), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 3),
    st.lists(st.integers(-6, 6), min_size=12, max_size=12),
)
def test_cm_agrees_with_exact_cofactor_expansion(m, coords):
    pts = np.array(coords[: (m + 1) * m]).reshape(m + 1, m)
    D = sq_dists(pts).astype(int)
    exact = bordered_determinant(D.tolist())
    assert cayley_menger_determinant(D) == pytest.approx(float(exact), abs=1e-9 * (1 + abs(exact)))


# --- volumes ---------------------------------------------------------------------


def test_volume_345():
    r = simplex_volume([[0, 9, 16], [9, 0, 25], [16, 25, 0]])
    assert r.valid and r.volume == pytest.approx(6, rel=1e-12)
    assert r.raw_determinant == -576


def test_volume_unit_tetrahedron():
    r = simplex_volume(np.ones((4, 4)) - np.eye(4))
    assert r.volume == pytest.approx(1 / (6 * math.sqrt(2)), rel=1e-12)


def test_volume_collinear_is_zero_and_valid():
    # sides 1, 2, 3 on a line
    r = simplex_volume([[0, 1, 9], [1, 0, 4], [9, 4, 0]])
    assert r.raw_determinant == 0 and r.volume == 0 and r.valid


def test_volume_impossible_triangle_is_screened():
    # 1, 1, 3 violates the triangle inequality: determinant has the wrong sign
    r = simplex_volume([[0, 1, 9], [1, 0, 1], [9, 1, 0]])
    assert not r.valid and r.volume is None and r.raw_determinant > 0
    loose = simplex_volume([[0, 1, 9], [1, 0, 1], [9, 1, 0]], sign_screen=False)
    assert loose.valid and loose.volume > 0


def test_volume_segment():
    assert simplex_volume([[0, 6.25], [6.25, 0]]).volume == pytest.approx(2.5)


@pytest.mark.parametrize(
    "D",
    [
        [[0, 1], [2, 0]],
        [[1, 1], [1, 0]],
        [[0, -1], [-1, 0]],
        [[0, np.nan], [np.nan, 0]],
        np.zeros((5, 5)),
        np.zeros((2, 3)),
    ],
)
def test_malformed_distance_matrices(D):
    with pytest.raises(GeometryError):
        simplex_volume(D)


def test_heron_consistency_random_triangles():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-5, 5, size=(10_000, 3, 2))
    D = ((pts[:, :, None] - pts[:, None]) ** 2).sum(-1)
    a, b, c = (np.sqrt(D[:, i, j]) for i, j in ((0, 1), (1, 2), (0, 2)))
    area = np.sqrt(cayley_menger_determinant(D) / coefficient_s(2))
    np.testing.assert_allclose(area, kahan_heron(a, b, c), rtol=1e-12)
    # textbook Heron agrees too, away from needle-shaped triangles
    s = (a + b + c) / 2
    heron = np.sqrt(np.maximum(s * (s - a) * (s - b) * (s - c), 0))
    ok = heron > 1.0
    np.testing.assert_allclose(area[ok], heron[ok], rtol=1e-11)


def test_area_matches_shoelace_on_integer_triangles():
    rng = np.random.default_rng(2)
    pts = rng.integers(-20, 20, size=(2000, 3, 2)).astype(float)
    D = ((pts[:, :, None] - pts[:, None]) ** 2).sum(-1)
    shoe = np.array([shoelace(p) for p in pts])
    area = np.sqrt(np.maximum(cayley_menger_determinant(D) / coefficient_s(2), 0))
    # side lengths go through a square root, so exactness is lost on slivers
    np.testing.assert_allclose(area, shoe, rtol=1e-10, atol=1e-12)


# --- inclusion test --------------------------------------------------------------

TRI = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])


def _test_point(simplex, p, **kw):
    return inclusion_test(sq_dists(simplex), ((np.asarray(simplex) - p) ** 2).sum(1), **kw)


def test_inside_example():
    r = _test_point(TRI, np.array([1.0, 1.0]))
    assert r.verdict is Verdict.INSIDE
    assert r.outer_volume == pytest.approx(8)
    np.testing.assert_allclose(r.sub_volumes, [4, 2, 2], rtol=1e-12)
    assert r.relative_error == pytest.approx(0, abs=1e-15)


def test_outside_example():
    r = _test_point(TRI, np.array([3.0, 3.0]))
    assert r.verdict is Verdict.OUTSIDE
    np.testing.assert_allclose(r.sub_volumes, [4, 6, 6], rtol=1e-12)
    assert r.sub_sum == pytest.approx(16)


def test_coincident_vertices_degenerate():
    r = inclusion_test(np.zeros((3, 3)), [1.0, 1.0, 1.0])
    assert r.verdict is Verdict.DEGENERATE


def test_boundary_point_is_not_inside():
    r = _test_point(TRI, np.array([2.0, 0.0]))
    assert r.verdict is Verdict.OUTSIDE
    r = _test_point(TRI, np.array([0.0, 0.0]))
    assert r.verdict is Verdict.OUTSIDE


def test_undershoot_is_degenerate():
    # sub-volumes summing to less than the outer one cannot come from real geometry
    D = sq_dists(TRI)
    r = inclusion_test(D, [3.0, 6.0, 14.0])
    assert all(v > 0 for v in r.sub_volumes)
    assert r.sub_sum < r.outer_volume * (1 - 1e-3)
    assert r.verdict is Verdict.DEGENERATE


def test_dimension_mismatch():
    with pytest.raises(GeometryError):
        inclusion_test(sq_dists(TRI), [1.0, 2.0])


def test_noisy_tolerance_admits_small_mismatch():
    D = sq_dists(TRI)
    cand = ((TRI - [1.0, 1.0]) ** 2).sum(1) * np.array([1.02, 0.99, 1.01])
    assert inclusion_test(D, cand).verdict is not Verdict.INSIDE
    assert inclusion_test(D, cand, tolerance=0.2).verdict is Verdict.INSIDE


@pytest.mark.parametrize("x,verdict", [(1.0, Verdict.INSIDE), (3.5, Verdict.OUTSIDE), (2.0, Verdict.OUTSIDE)])
def test_segment_betweenness(x, verdict):
    ends = np.array([[0.0], [2.0]])
    assert _test_point(ends, np.array([x])).verdict is verdict


def test_tetrahedron_inside():
    V = np.array([[0, 0, 0], [3, 0, 0], [0, 3, 0], [0, 0, 3]], float)
    r = _test_point(V, np.array([0.5, 0.5, 0.5]))
    assert r.verdict is Verdict.INSIDE
    assert r.outer_volume == pytest.approx(4.5)


def test_tetrahedron_outside():
    V = np.array([[0, 0, 0], [3, 0, 0], [0, 3, 0], [0, 0, 3]], float)
    assert _test_point(V, np.array([2.0, 2.0, 2.0])).verdict is Verdict.OUTSIDE


def _random_instances(m, n, seed):
    rng = np.random.default_rng(seed)
    V = random_simplices(rng, n, m)
    x = rng.uniform(0, 10, (n, m))
    # half the points are drawn inside, so both verdicts are well represented
    lam = rng.dirichlet(np.ones(m + 1), size=n)
    inner = np.einsum("nj,njd->nd", lam, V)
    x[: n // 2] = inner[: n // 2]
    return V, x


@pytest.mark.parametrize("m", [2, 3])
def test_oracle_agreement_batch(m):
    V, x = _random_instances(m, 2000, seed=m)
    D = ((V[:, :, None] - V[:, None]) ** 2).sum(-1)
    c = ((V - x[:, None]) ** 2).sum(-1)
    res = inclusion_batch(D, c)
    lam = barycentric_oracle(V, x)
    inside = res.verdict == Verdict.INSIDE
    np.testing.assert_array_equal(inside, np.all(lam > 0, axis=1))
    w = res.sub_volumes[inside] / res.outer_volume[inside, None]
    np.testing.assert_allclose(w, lam[inside], atol=1e-9)


# --- properties ------------------------------------------------------------------

coord = st.floats(-10, 10, allow_nan=False)


def _well_shaped(V, p=None):
    if not shape_quality(V[None])[0] >= 0.05:  # also catches NaN from a point simplex
        return False
    # keep away from the boundary, where the verdict hinges on rounding
    return p is None or np.abs(barycentric_oracle(V[None], p[None])).min() > 1e-6


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 3), st.lists(coord, min_size=15, max_size=15), st.permutations(range(4)))
def test_permutation_equivariance(m, xs, perm):
    V = np.array(xs[: (m + 1) * m]).reshape(m + 1, m)
    p = np.array(xs[12 : 12 + m])
    assume(_well_shaped(V, p))
    perm = [i for i in perm if i <= m]
    a = _test_point(V, p)
    b = _test_point(V[perm], p)
    assert a.verdict is b.verdict
    np.testing.assert_allclose(np.array(a.sub_volumes)[perm], b.sub_volumes, rtol=1e-9, atol=1e-9)
    if a.verdict is Verdict.INSIDE:
        wa = barycentric_coordinates(a).weights
        wb = barycentric_coordinates(b).weights
        np.testing.assert_allclose(wa[perm], wb, rtol=0, atol=1e-9)


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 3), st.lists(coord, min_size=15, max_size=15), st.floats(0.1, 10))
def test_scale_covariance(m, xs, c):
    V = np.array(xs[: (m + 1) * m]).reshape(m + 1, m)
    p = np.array(xs[12 : 12 + m])
    assume(_well_shaped(V, p))
    a = _test_point(V, p)
    b = _test_point(V * c, p * c)
    assert a.verdict is b.verdict
    assert b.outer_volume == pytest.approx(a.outer_volume * c**m, rel=1e-9)
    if a.verdict is Verdict.INSIDE:
        np.testing.assert_allclose(
            barycentric_coordinates(a).weights, barycentric_coordinates(b).weights, rtol=0, atol=1e-9
        )


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 3), st.lists(coord, min_size=12, max_size=12), st.lists(st.floats(0.05, 1), min_size=4, max_size=4))
def test_interior_points_reconstruct(m, xs, raw):
    V = np.array(xs[: (m + 1) * m]).reshape(m + 1, m)
    assume(_well_shaped(V))
    lam = np.array(raw[: m + 1]) / sum(raw[: m + 1])
    p = lam @ V
    r = _test_point(V, p)
    assert r.verdict is Verdict.INSIDE
    w = barycentric_coordinates(r).weights
    assert np.all(w > 0)
    np.testing.assert_allclose(w @ V, p, atol=1e-9)


# --- barycentric coordinates -----------------------------------------------------


def test_barycentric_example():
    w = barycentric_coordinates(_test_point(TRI, np.array([1.0, 1.0])), ids=("a", "b", "c"))
    np.testing.assert_allclose(w.weights, [0.5, 0.25, 0.25], atol=1e-15)
    assert w["a"] == pytest.approx(0.5)
    assert w.as_dict() == pytest.approx({"a": 0.5, "b": 0.25, "c": 0.25})


def test_barycentric_centroid():
    rng = np.random.default_rng(3)
    V = rng.uniform(0, 5, (3, 2))
    w = barycentric_coordinates(_test_point(V, V.mean(0)))
    np.testing.assert_allclose(w.weights, [1 / 3] * 3, atol=1e-12)


def test_barycentric_requires_inside():
    with pytest.raises(ContractError):
        barycentric_coordinates(_test_point(TRI, np.array([3.0, 3.0])))


def test_barycentric_noisy_outer_normalizes_exactly():
    from convexloc.geometry import InclusionResult

    incl = InclusionResult(Verdict.INSIDE, 8.1, (4.0, 2.0, 2.0), 0.1 / 8.1)
    w = barycentric_coordinates(incl)
    assert math.fsum(w.weights) == 1.0
    raw = barycentric_coordinates(incl, normalize=False)
    assert math.fsum(raw.weights) == pytest.approx(8 / 8.1)


@settings(max_examples=200)
@given(st.lists(st.floats(1e-6, 1e6), min_size=2, max_size=4))
def test_normalize_exact_sums_to_one(w):
    out = normalize_exact(np.array(w))
    assert math.fsum(out) == 1.0
    assert np.all(out > 0)
    np.testing.assert_allclose(out, np.array(w) / sum(w), rtol=1e-12)


def test_fraction_oracle_is_exact():
    # the oracle itself: the bordered 3x3 for a segment of squared length d is 2d
    assert bordered_determinant([[0, 7], [7, 0]]) == 14
    assert isinstance(bordered_determinant([[0, Fraction(1, 2)], [Fraction(1, 2), 0]]), Fraction)
