"""1D polynomial building blocks on the unit interval.

Three families, all vectorized over sample points:

* Gauss-Legendre quadrature mapped to [0, 1].
* Shifted Legendre polynomials P_j(2x-1), the discontinuous (L2) line.
* Hierarchical H1 functions: the two hat functions plus integrated
  Legendre bubbles, whose derivatives reproduce the Legendre line.

The derivative identity d/dx h_m = P_{m-1}(2x-1) (m >= 2) is what makes
the tensorized 3D families an exact sequence; tests rely on it.
"""

import numpy as np
from numpy.polynomial import legendre as _leg


def gauss_rule(n):
    """n-point Gauss-Legendre rule on [0, 1]: (points, weights)."""
    if n < 1:
        raise ValueError("need at least one quadrature point")
    x, w = _leg.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def legendre_table(pmax, x):
    """P_j(2x-1) for j = 0..pmax; shape (pmax+1, len(x))."""
    x = np.asarray(x, dtype=float)
    t = 2.0 * x - 1.0
    return _leg.legvander(t, pmax).T.copy()


def legendre_deriv_table(pmax, x):
    """d/dx P_j(2x-1); shape (pmax+1, len(x))."""
    x = np.asarray(x, dtype=float)
    t = 2.0 * x - 1.0
    P = _leg.legvander(t, pmax).T
    out = np.zeros_like(P)
    # dP_j/dt = dP_{j-2}/dt + (2j-1) P_{j-1}
    for j in range(1, pmax + 1):
        prev = out[j - 2] if j >= 2 else 0.0
        out[j] = prev + (2.0 * j - 1.0) * P[j - 1]
    return 2.0 * out


def h1_table(pmax, x):
    """Hierarchical H1 basis values, shape (pmax+1, len(x)).

    Index 0: 1-x, index 1: x, index m >= 2: integrated Legendre
    bubble (P_m - P_{m-2})(2x-1) / (2(2m-1)), which vanishes at both
    endpoints and has parity (-1)^m about x = 1/2.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((pmax + 1, len(x)))
    out[0] = 1.0 - x
    if pmax >= 1:
        out[1] = x
    if pmax >= 2:
        P = legendre_table(pmax, x)
        for m in range(2, pmax + 1):
            out[m] = (P[m] - P[m - 2]) / (2.0 * (2.0 * m - 1.0))
    return out


def h1_deriv_table(pmax, x):
    """d/dx of h1_table entries; dh_m/dx = P_{m-1}(2x-1) for m >= 2."""
    x = np.asarray(x, dtype=float)
    out = np.empty((pmax + 1, len(x)))
    out[0] = -1.0
    if pmax >= 1:
        out[1] = 1.0
    if pmax >= 2:
        P = legendre_table(pmax - 1, x)
        for m in range(2, pmax + 1):
            out[m] = P[m - 1]
    return out
