"""Speed cdf at a point by Mellin inversion of H(t) = int w(t x) dF(x).

With phi a smoothed indicator of [0, x0] and psi solving
int_0^inf psi(t) w(t x) dt = phi(x), we get int psi H dt = int phi dF ~ F(x0).
psi is obtained from its Mellin transform phi~(1-z)/w~(1-z) on the line
Re z = s, evaluated on a geometric t grid with chirp-z transforms.
"""

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np
from numpy.polynomial import legendre as L
from scipy.signal import czt

from .. import model
from ..quadrature import QuadratureError, adaptive_panel_integral, gauss_legendre, panel_integral
from ..reports import EstimateReport, record_provenance
from .corr import estimate_covariance


class KernelConditioningError(ArithmeticError):
    pass


class TruncationError(ArithmeticError):
    """The inversion integrand did not decay below the target on the omega grid."""


def _bump(y):
    y = np.asarray(y, dtype=float)
    inside = (y > 0) & (y < 1)
    yy = np.where(inside, y, 0.5)
    return np.where(inside, np.exp(-1.0 / (yy * (1.0 - yy))), 0.0)


@dataclass(frozen=True, eq=False)
class FlatKernel:
    """K(y) = q(y) exp(-1/(y(1-y))) on (0, 1) with int K = 1 and int y^j K = 0, j = 1..m.

    Among polynomials of degree <= m meeting these conditions, q is the one
    of least norm in L2(bump): the reproducing kernel at y = 0 of the
    polynomials p_k (k <= m) orthonormal under the bump weight,
    q(y) = sum_k p_k(0) p_k(y).  It is stored through the p_k recurrence.
    """

    m: int
    rec_a: np.ndarray
    rec_b: np.ndarray  # rec_b[0] = sqrt(int bump), rec_b[k] couples p_k and p_{k-1}
    alpha: np.ndarray  # p_k(0)

    def _basis(self, y):
        p_prev = np.zeros_like(y)
        p = np.full_like(y, 1.0 / self.rec_b[0])
        out = [p]
        for k in range(self.alpha.size - 1):
            nxt = ((y - self.rec_a[k]) * p - (self.rec_b[k] if k else 0.0) * p_prev) / self.rec_b[k + 1]
            p_prev, p = p, nxt
            out.append(p)
        return out

    def q(self, y):
        y = np.asarray(y, dtype=float)
        return sum(a * p for a, p in zip(self.alpha, self._basis(y)))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.q(y) * _bump(y)

    def cumulative(self, y):
        """int_0^y K, clipped to y in [0, 1]."""
        y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
        x, w = gauss_legendre(128)
        pts = y[..., None] * x
        return y * np.sum(w * self(pts), axis=-1)

    def _flat_integral(self, fun, panels=16):
        # the integrand is flat at both ends: a fixed high-order rule is exact to roundoff
        return float(panel_integral(fun, [np.linspace(0.0, 1.0, panels + 1)], 128)[0])

    def moment(self, j):
        return self._flat_integral(lambda y: y ** j * self(y))

    @cached_property
    def abs_integral(self):
        return self._flat_integral(lambda y: np.abs(self(y)), panels=256)

    @cached_property
    def log_moment(self):
        """int_0^1 ln(y) K(y) dy."""
        return self._flat_integral(lambda y: np.log(y) * self(y))


def _bump_nodes():
    x, w = gauss_legendre(128)
    edges = np.linspace(0.0, 1.0, 33)
    nodes = (edges[:-1, None] + np.diff(edges)[:, None] * x).ravel()
    weights = (np.diff(edges)[:, None] * w).ravel() * _bump(nodes)
    return nodes, weights


def make_flat_kernel(m):
    if int(m) != m or not 1 <= m <= 12:
        raise ValueError("m must be an integer in [1, 12]")
    m = int(m)
    n = m + 1
    x, wt = _bump_nodes()
    # conditioning of the equivalent moment system in the shifted Legendre basis
    P = np.stack([L.legval(2.0 * x - 1.0, np.eye(n + 1)[k]) for k in range(n + 1)])
    cond = np.linalg.cond((P * wt) @ P.T)
    if cond > 1e12:
        raise KernelConditioningError(f"moment matrix condition number {cond:.3g} exceeds 1e12")
    # discrete Stieltjes procedure for the orthonormal recurrence
    rec_a = np.zeros(n)
    rec_b = np.zeros(n + 1)
    rec_b[0] = math.sqrt(wt.sum())
    p_prev = np.zeros_like(x)
    p = np.full_like(x, 1.0 / rec_b[0])
    for k in range(n):
        rec_a[k] = np.sum(wt * x * p * p)
        nxt = (x - rec_a[k]) * p - (rec_b[k] if k else 0.0) * p_prev
        rec_b[k + 1] = math.sqrt(np.sum(wt * nxt * nxt))
        p_prev, p = p, nxt / rec_b[k + 1]
    probe = FlatKernel(m, rec_a, rec_b, np.ones(n))
    alpha = np.array([v[0] for v in probe._basis(np.zeros(1))])
    kern = FlatKernel(m, rec_a, rec_b, alpha)
    if abs(kern.moment(0) - 1.0) > 1e-10 or max(abs(kern.moment(j)) for j in range(1, m + 1)) > 1e-10:
        raise KernelConditioningError("flat kernel moments not reproduced")
    return kern


def default_kernel_order(beta):
    """Smallest safe vanishing-moment order for smoothness beta: ceil(beta) + 2."""
    return int(math.ceil(beta)) + 2


# ---------------------------------------------------------------------------
# transforms of K at arbitrary points


def _osc_panels(zim, lo, hi, scale=1.0):
    span = abs(zim) * scale * (hi - lo)
    k = 4 if span <= 10 else int(min(4096, math.ceil(span / (2 * math.pi)) + 4))
    return np.linspace(lo, hi, k + 1)


def kernel_laplace(kern, z):
    """K^(z) = int_0^1 exp(-z t) K(t) dt."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape, dtype=complex)
    for idx, zz in np.ndenumerate(z):
        edges = _osc_panels(zz.imag, 0.0, 1.0)
        out[idx] = adaptive_panel_integral(lambda t: np.exp(-zz * t) * kern(t), [edges], n0=32, tol=1e-12)[0]
    return out[()] if out.ndim == 0 else out


_U_LOW = -6.0  # K(e^u) ~ exp(-e^{-u}) is below 1e-170 for u < -6


def kernel_mellin(kern, z):
    """K~(z) = int_0^1 t^(z-1) K(t) dt, computed in u = ln t."""
    z = np.asarray(z, dtype=complex)
    if np.any(~(z.real > 0)):
        raise ValueError("kernel_mellin: Re(z) must be positive")
    out = np.empty(z.shape, dtype=complex)
    for idx, zz in np.ndenumerate(z):
        edges = _osc_panels(zz.imag, _U_LOW, 0.0)
        out[idx] = adaptive_panel_integral(lambda u: np.exp(zz * u) * kern(np.exp(u)), [edges],
                                           n0=32, tol=1e-12)[0]
    return out[()] if out.ndim == 0 else out


def phi(x0, h, x, kern):
    """Smoothed indicator phi(x) = C(x/h) - C(ln(x/x0)/h), C the cumulative of K."""
    _check_phi_args(x0, h)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be nonnegative")
    with np.errstate(divide="ignore"):
        lg = np.where(x > 0, np.log(np.where(x > 0, x, 1.0) / x0) / h, -np.inf)
    val = kern.cumulative(x / h) - kern.cumulative(np.maximum(lg, 0.0))
    return val[()] if val.ndim == 0 else val


def _check_phi_args(x0, h):
    if not 0 < h < 0.5:
        raise ValueError("h must lie in (0, 1/2)")
    if not x0 > 2 * h:
        raise ValueError("need x0 > 2h")


def mellin_phi(x0, h, z, kern):
    """phi~(z) = (1/z)[x0^z K^(-z h) - h^z K~(z + 1)], with its limit at z = 0.

    For |z| < 1/2 the bracket is merged into one integral,
    int K(t) t^z h^z expm1(z c(t)) / z dt with c(t) = ln(x0 / h) + h t - ln t,
    which has no cancellation as z -> 0.
    """
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape, dtype=complex)
    small = np.abs(z) < 0.5
    for idx in np.ndindex(z.shape):
        if small[idx]:
            out[idx] = _mellin_phi_small(x0, h, complex(z[idx]), kern)
    big = ~small
    if np.any(big):
        zb = z[big]
        out[big] = (x0 ** zb * kernel_laplace(kern, -zb * h) - h ** zb * kernel_mellin(kern, zb + 1.0)) / zb
    return out[()] if out.ndim == 0 else out


def _mellin_phi_small(x0, h, z, kern):
    def f(t):
        with np.errstate(divide="ignore", invalid="ignore"):
            lt = np.log(np.where(t > 0, t, 1.0))
            c = math.log(x0 / h) + h * t - lt
            g = c if z == 0 else np.expm1(z * c) / z
            val = kern(t) * np.exp(z * (lt + math.log(h))) * g
        return np.where(t > 0, val, 0.0)

    edges = [np.linspace(0.0, 1.0, 17)]
    return complex(panel_integral(lambda t: f(t).real, edges, 128)[0]
                   + 1j * panel_integral(lambda t: f(t).imag, edges, 128)[0])


# ---------------------------------------------------------------------------
# inversion kernel psi


@dataclass(frozen=True)
class MellinLine:
    """Inversion line Re = s in the psi integral; omega grid k * omega_step, k < omega_max / omega_step."""

    s: float
    omega_step: float = 2.0 * math.pi / 64.0
    omega_max: float = None  # None: chosen automatically

    def __post_init__(self):
        if not self.s < 1:
            raise ValueError("s must be below 1")
        if not self.omega_step > 0:
            raise ValueError("omega_step must be positive")
        if self.omega_max is not None:
            ratio = self.omega_max / self.omega_step
            k = int(round(ratio))
            if abs(ratio - k) > 1e-9 * ratio or k & (k - 1):
                raise ValueError("omega_max / omega_step must be a power of two")

    @classmethod
    def for_horizon(cls, T, **kw):
        """Line with offset eps = 1 / ln T, i.e. s = 1 - 1 / ln T."""
        return cls(1.0 - 1.0 / math.log(T), **kw)


def _trap_czt(vals, step, x_start, freq_step, n_freq):
    """sum_j c_j vals_j exp(-i k freq_step x_j) step, x_j = x_start + j step, trapezoid ends."""
    v = np.asarray(vals, dtype=complex).copy()
    v[0] *= 0.5
    v[-1] *= 0.5
    # czt: X_k = sum_j v_j w^(jk) with a = 1
    out = czt(v, m=n_freq, w=np.exp(-1j * freq_step * step), a=1.0)
    return step * out * np.exp(-1j * freq_step * x_start * np.arange(n_freq))


def _line_transforms(kern, x0, h, eps, omega_step, n_omega):
    """phi~(eps - i omega_k) for omega_k = k omega_step, k = 0..n_omega-1."""
    om_max = omega_step * n_omega
    # K^(-z h) with z = eps - i w: int e^{eps h t} e^{-i w h t} K(t) dt
    nt = int(2 ** math.ceil(math.log2(max(4096, 8 * om_max * h / math.pi))))
    t = np.linspace(0.0, 1.0, nt + 1)
    lap = _trap_czt(np.exp(eps * h * t) * kern(t), t[1] - t[0], 0.0, omega_step * h, n_omega)
    # K~(z + 1) = int e^{(1+eps) u} e^{-i w u} K(e^u) du
    nu = int(2 ** math.ceil(math.log2(max(8192, 8 * om_max * (-_U_LOW) / math.pi))))
    u = np.linspace(_U_LOW, 0.0, nu + 1)
    mel = _trap_czt(np.exp((1.0 + eps) * u) * kern(np.exp(u)), u[1] - u[0], _U_LOW, omega_step, n_omega)
    om = omega_step * np.arange(n_omega)
    z = eps - 1j * om
    return (np.exp(z * math.log(x0)) * lap - np.exp(z * math.log(h)) * mel) / z


def _ratio_direct(x0, h, ball, kern, eps, om):
    z = eps - 1j * np.asarray(om, dtype=float)
    return mellin_phi(x0, h, z, kern) / model.mellin_w(z, ball)


def _choose_omega_max(x0, h, ball, kern, line, tol=1e-10, max_steps=2 ** 20):
    if line.omega_max is not None:
        return line.omega_max
    eps = 1.0 - line.s
    ratio = lambda om: np.abs(_ratio_direct(x0, h, ball, kern, eps, om))
    # 1/w~ grows like w^((d+3)/2), so the peak can sit well beyond 1/h; track it as the range grows
    peak = np.max(ratio(np.linspace(0.0, 4.0 / h, 33)))
    lo = 0.0
    n = 2 ** 10
    while n <= max_steps:
        om_max = n * line.omega_step
        peak = max(peak, np.max(ratio(np.linspace(lo, om_max, 33))))
        if np.max(ratio(np.linspace(0.75 * om_max, om_max, 9))) < tol * peak:
            return om_max
        lo = om_max
        n *= 2
    raise TruncationError("inversion integrand does not decay within 2^20 omega steps; h too small")


def psi_on_grid(x0, h, ball, kern, line, t_grid):
    """psi(t) = (1/2 pi) int phi~(1-s-i w) / w~(1-s-i w) t^(-s-i w) dw on a geometric t grid."""
    _check_phi_args(x0, h)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2 or np.any(t_grid <= 0):
        raise ValueError("t_grid must be a positive 1-d array")
    u = np.log(t_grid)
    du = (u[-1] - u[0]) / (u.size - 1)
    if not np.allclose(np.diff(u), du, rtol=1e-8, atol=1e-12):
        raise ValueError("t_grid must be geometric")
    eps = 1.0 - line.s
    om_max = _choose_omega_max(x0, h, ball, kern, line)
    n_om = int(round(om_max / line.omega_step))
    om = line.omega_step * np.arange(n_om)
    g = _line_transforms(kern, x0, h, eps, line.omega_step, n_om) / model.mellin_w(eps - 1j * om, ball)
    g[0] *= 0.5
    # sum_k g_k exp(-i w_k u_j): czt with a = exp(i dw u0), w = exp(-i dw du)
    acc = czt(g, m=u.size, w=np.exp(-1j * line.omega_step * du), a=np.exp(1j * line.omega_step * u[0]))
    return np.exp(-line.s * u) * line.omega_step / math.pi * acc.real


MAX_GRID = 1 << 22


def geometric_grid(t_min, t_max, du):
    n = int(math.ceil(math.log(t_max / t_min) / du)) + 1
    if n > MAX_GRID:
        raise TruncationError(f"ln t grid needs {n} nodes (limit {MAX_GRID}); h too small")
    return t_min * np.exp(np.linspace(0.0, math.log(t_max / t_min), n))


def default_t_min(x0, ball):
    return 1e-4 * 2.0 * ball.radius / x0


_PSI_CACHE = {}


def _cached_psi(x0, h, ball, kern, line, t_min, t_max, du):
    key = (x0, h, ball, id(kern), line, t_min, t_max, du)
    hit = _PSI_CACHE.get(key)
    if hit is None or hit[0] is not kern:
        if len(_PSI_CACHE) > 32:
            _PSI_CACHE.clear()
        t = geometric_grid(t_min, t_max, du)
        hit = (kern, t, psi_on_grid(x0, h, ball, kern, line, t))
        _PSI_CACHE[key] = hit
    return hit[1], hit[2]


def cdf_functional(corr_fun, T, x0, h, ball, kern, line, t_min=None, du=None):
    """int_{t_min}^{T/2} psi(t) C(t) dt for a correlation function C (trapezoid in ln t).

    psi oscillates on the scale h in ln t; the default step h/128 keeps the
    trapezoid error near 1e-10 for smooth C.
    """
    t_min = default_t_min(x0, ball) if t_min is None else t_min
    du = min(h, 1.0) / 128.0 if du is None else du
    t, psi = _cached_psi(x0, h, ball, kern, line, t_min, T / 2.0, du)
    # psi vanishes below 2r/(x0 e^h) and decays fast: skip C on the head and tail
    # whose total |psi| t du mass is below 1e-10 (the dropped part is < 1e-10 sup|C|)
    mass = np.abs(psi) * t * du
    head = np.cumsum(mass)
    tail = np.cumsum(mass[::-1])[::-1]
    live = (head > 1e-10) & (tail > 1e-10)
    c = np.zeros(t.size)
    if np.any(live):
        c[live] = np.asarray(corr_fun(t[live]), dtype=float)
    f = psi * c * t
    ln = np.log(t)
    val = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(ln)))
    return val, t, psi


def reproducing_identity(x0, h, ball, kern, line, x, du=2.5e-4, t_span=(1e-3, 1e4)):
    """int_0^inf psi(t) w(t x) dt, on a ln t grid with a node at the kink t = 2r/x."""
    kink = math.log(2.0 * ball.radius / x)
    j_lo = math.ceil((kink - math.log(t_span[0])) / du)
    j_hi = math.ceil((math.log(t_span[1]) - kink) / du)
    t = np.exp(kink + du * np.arange(-j_lo, j_hi + 1))
    psi = psi_on_grid(x0, h, ball, kern, line, t)
    f = psi * model.w_eval(t * x, ball) * t
    total = float(np.sum(0.5 * (f[1:] + f[:-1])) * du)
    # Euler-Maclaurin correction for the derivative jump at the kink (node j_lo)
    left = (3.0 * f[j_lo] - 4.0 * f[j_lo - 1] + f[j_lo - 2]) / (2.0 * du)
    right = (-3.0 * f[j_lo] + 4.0 * f[j_lo + 1] - f[j_lo + 2]) / (2.0 * du)
    return total - du * du / 12.0 * (left - right)


def estimate_cdf_at(record, rho, ball, x0, h, kern=None, line=None, t_min=None, clamp=False):
    """F_hat_h(x0) = int_{t_min}^{T/2} psi(t) H_hat(t) dt with the raw (unclipped) H_hat."""
    T = record.T
    kern = kern or make_flat_kernel(3)
    line = line or MellinLine.for_horizon(T)
    val, t, psi = cdf_functional(lambda tt: estimate_covariance(record, rho, tt).h_hat,
                                 T, x0, h, ball, kern, line, t_min)
    raw = val
    if clamp:
        val = min(max(val, 0.0), 1.0)
    seed, rep = record_provenance(record)
    return EstimateReport(
        "cdf", val, "probability",
        tuning={"x0": x0, "h": h, "m": kern.m, "s": line.s, "omega_step": line.omega_step,
                "t_min": float(t[0]), "t_max": float(t[-1]), "grid_points": int(t.size)},
        T=T, rho=rho, seed=seed, replicate=rep,
        diagnostics={"raw": raw, "clamped": bool(clamp), "outside_unit_interval": not 0.0 <= raw <= 1.0},
    )


def default_bandwidth_cdf(T, beta=1.0, A=1.0, M=1.0, alpha_mem=1.0, rho=1.0, ball=None, x0=1.0):
    """h* = [A^-2 (x0^beta + 1)^-2 (1 + 1/rho)(r + M r^{max(1, 1+alpha)}) eta_T ln T / T]^{1/(2 beta + d + 2)}."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    if not A > 0:
        raise ValueError("A must be positive")
    if not (alpha_mem > -1 and rho > 0 and T > 1):
        raise ValueError("need alpha_mem > -1, rho > 0, T > 1")
    r, d = ball.radius, ball.dim
    if alpha_mem < 0:
        eta = T ** (-alpha_mem)
    elif alpha_mem == 0:
        eta = math.log(T)
    else:
        eta = 1.0
    base = (A ** -2 * (x0 ** beta + 1.0) ** -2 * (1.0 + 1.0 / rho)
            * (r + M * r ** max(1.0, 1.0 + alpha_mem)) * eta * math.log(T) / T)
    return base ** (1.0 / (2.0 * beta + d + 2.0))


__all__ = [
    "FlatKernel", "MellinLine", "QuadratureError", "TruncationError", "KernelConditioningError",
    "make_flat_kernel", "kernel_laplace", "kernel_mellin", "phi", "mellin_phi", "psi_on_grid",
    "estimate_cdf_at", "default_bandwidth_cdf", "cdf_functional", "geometric_grid",
]
