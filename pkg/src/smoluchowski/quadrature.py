"""Small vectorised Gauss-Legendre helpers shared by the model and estimators."""

from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre


class QuadratureError(ArithmeticError):
    """Adaptive refinement could not reach the requested tolerance."""


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Nodes and weights of the n-point Gauss-Legendre rule on [0, 1]."""
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def panel_integral(fun, edges, n):
    """Integrate ``fun`` over consecutive panels, row by row.

    ``edges`` has shape (rows, k+1); each row holds nondecreasing panel
    boundaries.  ``fun`` is called with an array of abscissae of shape
    (rows, k*n) and must return values of the same shape.
    """
    edges = np.atleast_2d(np.asarray(edges, dtype=float))
    x, w = gauss_legendre(n)
    lo = edges[:, :-1, None]
    width = (edges[:, 1:] - edges[:, :-1])[:, :, None]
    nodes = lo + width * x
    rows, k = edges.shape[0], edges.shape[1] - 1
    vals = fun(nodes.reshape(rows, k * n)).reshape(rows, k, n)
    return np.sum(vals * w * width, axis=(1, 2))


def adaptive_panel_integral(fun, edges, n0=128, tol=1e-9, n_max=2 ** 14):
    """Gauss-Legendre on panels, doubling the node count until two estimates agree."""
    edges = np.atleast_2d(np.asarray(edges, dtype=float))
    prev = panel_integral(fun, edges, n0)
    n = n0
    while n < n_max:
        n *= 2
        cur = panel_integral(fun, edges, n)
        if np.all(np.abs(cur - prev) <= tol * np.maximum(1.0, np.abs(cur))):
            return cur
        prev = cur
    raise QuadratureError(f"Gauss-Legendre refinement did not reach tol={tol} with {n_max} nodes")
