"""Independent reference implementations used only by the tests."""
from fractions import Fraction

import numpy as np


def _laplace(M):
    # plain cofactor expansion along the first row, exact for ints and Fractions
    n = len(M)
    if n == 1:
        return M[0][0]
    total = 0
    for c in range(n):
        if M[0][c] == 0:
            continue
        minor = [row[:c] + row[c + 1 :] for row in M[1:]]
        total += (-1) ** c * M[0][c] * _laplace(minor)
    return total


def bordered_determinant(D):
    """Determinant of [[0, 1^T], [1, D]] by cofactor expansion."""
    n = len(D)
    M = [[0] + [1] * n] + [[1] + list(D[i]) for i in range(n)]
    return _laplace(M)


def sq_dists(P):
    P = np.asarray(P, dtype=float)
    return ((P[:, None] - P[None]) ** 2).sum(-1)


def shoelace(tri):
    (x0, y0), (x1, y1), (x2, y2) = tri
    return abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)) / 2


def barycentric_oracle(V, x):
    """Barycentric coordinates of points x (n, m) in simplices V (n, m+1, m) by a linear solve."""
    V = np.asarray(V, dtype=float)
    x = np.asarray(x, dtype=float)
    T = np.swapaxes(V[:, 1:] - V[:, :1], 1, 2)
    lam = np.linalg.solve(T, (x - V[:, 0])[..., None])[..., 0]
    return np.concatenate([1 - lam.sum(1, keepdims=True), lam], axis=1)


def fraction_matrix(D):
    return [[Fraction(v) for v in row] for row in D]


def kahan_heron(a, b, c):
    """Triangle area from side lengths, stable for needle-shaped triangles."""
    a, b, c = np.sort(np.stack([a, b, c]), axis=0)[::-1]  # a >= b >= c
    return 0.25 * np.sqrt((a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c)))


def shape_quality(V):
    """|det(edge matrix)| / longest_edge^m for simplices V (n, m+1, m).

    About 0.87 for an equilateral triangle and 0.71 for a regular
    tetrahedron; tends to zero as a simplex flattens.
    """
    V = np.asarray(V, dtype=float)
    m = V.shape[-1]
    E = V[:, 1:] - V[:, :1]
    longest = np.sqrt(((V[:, :, None] - V[:, None]) ** 2).sum(-1).max(axis=(1, 2)))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.abs(np.linalg.det(E)) / longest**m


# simplices flatter than this are treated as degenerate in oracle comparisons:
# rounding of the squared distances alone then moves the summed sub-volumes by
# more than a 1e-9 relative tolerance
MIN_QUALITY = 1e-2


def random_simplices(rng, n, m, low=0.0, high=10.0):
    """n non-degenerate simplices with vertices uniform in a box."""
    out = np.empty((0, m + 1, m))
    while len(out) < n:
        V = rng.uniform(low, high, (2 * n, m + 1, m))
        out = np.concatenate([out, V[shape_quality(V) >= MIN_QUALITY]])
    return out[:n]
