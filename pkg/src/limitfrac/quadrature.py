"""Fixed quadrature rules on the reference triangle and the unit interval."""

import math

import numpy as np


def _radon7():
    r = math.sqrt(15.0)
    a1, b1 = (6.0 - r) / 21.0, (9.0 + 2.0 * r) / 21.0
    a2, b2 = (6.0 + r) / 21.0, (9.0 - 2.0 * r) / 21.0
    w1, w2 = (155.0 - r) / 1200.0, (155.0 + r) / 1200.0
    bary = [(1 / 3, 1 / 3, 1 / 3)]
    bary += [(b1, a1, a1), (a1, b1, a1), (a1, a1, b1)]
    bary += [(b2, a2, a2), (a2, b2, a2), (a2, a2, b2)]
    weights = [9.0 / 40.0] + [w1] * 3 + [w2] * 3
    return np.array(bary), np.array(weights)


# Barycentric points and weights (summing to 1); exact for degree 5.
TRI_POINTS, TRI_WEIGHTS = _radon7()

# Three-point rule at edge midpoints, exact for degree 2.
TRI3_POINTS = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
TRI3_WEIGHTS = np.full(3, 1.0 / 3.0)


def gauss_interval(n: int):
    """Gauss-Legendre points in [0, 1] and weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
