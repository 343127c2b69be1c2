"""Mean speed from the one-sided slope of the covariance at zero."""

from dataclasses import dataclass
import math

import numpy as np
from numpy.polynomial import polynomial as P

from ..quadrature import gauss_legendre
from ..reports import EstimateReport, record_provenance
from .corr import estimate_covariance


class BandwidthError(ValueError):
    pass


@dataclass(frozen=True)
class DerivKernel:
    """Polynomial kernel on [0, 1] with int K = 0 and int x K = 1."""

    coef: tuple  # increasing powers

    def __call__(self, x):
        return P.polyval(np.asarray(x, dtype=float), self.coef)

    def moment(self, j):
        c = P.polyint(P.polymul(self.coef, [0.0] * j + [1.0]))
        return float(P.polyval(1.0, c) - P.polyval(0.0, c))

    @property
    def m0(self):
        return self.moment(0)

    @property
    def m1(self):
        return self.moment(1)

    @property
    def c_k(self):
        """int_0^1 x^2 |K(x)| dx, split at the real roots in (0, 1)."""
        roots = P.polyroots(self.coef) if len(self.coef) > 1 else np.array([])
        cuts = sorted({0.0, 1.0, *(float(z.real) for z in np.atleast_1d(roots)
                                   if abs(z.imag) < 1e-14 and 0 < z.real < 1)})
        anti = P.polyint(P.polymul(self.coef, [0.0, 0.0, 1.0]))
        return float(sum(abs(P.polyval(b, anti) - P.polyval(a, anti)) for a, b in zip(cuts[:-1], cuts[1:])))


def make_deriv_kernel():
    """K(x) = 12 x - 6, the linear solution of int K = 0, int x K = 1."""
    # [[int 1, int x], [int x, int x^2]] c = [0, 1]
    a = np.array([[1.0, 0.5], [0.5, 1.0 / 3.0]])
    coef = np.linalg.solve(a, [0.0, 1.0])
    kern = DerivKernel(tuple(float(c) for c in np.round(coef, 12)))
    assert abs(kern.m0) <= 1e-12 and abs(kern.m1 - 1.0) <= 1e-12
    return kern


def mean_speed_window(T):
    """Admissible bandwidth window [(ln T)^2 / T, 1 / (sqrt(T) ln T)]; may be empty."""
    lt = math.log(T)
    return lt * lt / T, 1.0 / (math.sqrt(T) * lt)


def default_bandwidth_mean_speed(T):
    """h = T^(-3/4) (ln T)^(1/2), falling back to the geometric mean of the window ends.

    The candidate equals that geometric mean identically, so the fallback never
    changes the value; the window itself is empty for T below about 2.4e7.
    """
    if not T > math.e ** 2:
        raise BandwidthError("horizon must exceed e^2")
    lo, hi = mean_speed_window(T)
    cand = T ** -0.75 * math.sqrt(math.log(T))
    if lo <= cand <= hi:
        return cand
    return math.sqrt(lo * hi)


def kernel_integral(kernel, h, r_fun, n=64):
    """int_0^h K(t/h) R(t) dt with n Gauss-Legendre nodes."""
    x, w = gauss_legendre(n)
    return h * float(np.dot(w * kernel(x), r_fun(h * x)))


def estimate_mean_speed(record, rho, ball, h=None, kernel=None, n_nodes=64):
    """mu_hat = -(r B((d+1)/2, 1/2) / (rho h^2)) int_0^h K(t/h) R_hat(t) dt."""
    kernel = kernel or make_deriv_kernel()
    T = record.T
    h = default_bandwidth_mean_speed(T) if h is None else float(h)
    if not 0 < h < T:
        raise BandwidthError("bandwidth must lie in (0, T)")
    integral = kernel_integral(kernel, h, lambda t: estimate_covariance(record, rho, t).r_hat, n_nodes)
    mu = -ball.radius * ball.half_beta / (rho * h * h) * integral
    lo, hi = mean_speed_window(T)
    seed, rep = record_provenance(record)
    return EstimateReport(
        "mean_speed", mu, "speed",
        tuning={"h": h, "kernel": list(kernel.coef), "nodes": n_nodes},
        T=T, rho=rho, seed=seed, replicate=rep,
        diagnostics={"window": [lo, hi], "window_empty": lo > hi, "h_in_window": lo <= h <= hi},
    )
