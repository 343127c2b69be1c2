"""Diffusion coefficient estimators for Brownian particles."""

from dataclasses import dataclass
import math

import numpy as np

from .. import model
from ..quadrature import panel_integral
from ..reports import EstimateReport, record_provenance
from .corr import estimate_covariance, grid_lag_index


class ResolutionError(ValueError):
    """The requested lag is finer than the record's grid."""


@dataclass(frozen=True)
class DiffusionTuning:
    alpha: float = None
    b: float = None
    tau: float = None
    sigma_bar: float = None

    def __post_init__(self):
        if self.alpha is not None and not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 1/2)")
        if self.b is not None and not self.b > 0:
            raise ValueError("b must be positive")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.sigma_bar is not None and not self.sigma_bar > 0:
            raise ValueError("sigma_bar must be positive")


def relative_delta(x, y):
    """|x - y| / (x + y) for x, y > 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(~(x > 0)) or np.any(~(y > 0)):
        raise ValueError("relative_delta needs positive arguments")
    val = np.abs(x - y) / (x + y)
    return val[()] if val.ndim == 0 else val


def psi_functional(corr_fun, alpha, b, n_nodes=256):
    """int_0^b C(t) t^(alpha-1) dt = (1/alpha) int_0^{b^alpha} C(u^(1/alpha)) du.

    Composite Gauss-Legendre with ``n_nodes`` nodes in total (8 panels).
    """
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    panels = 8
    edges = np.linspace(0.0, b ** alpha, panels + 1)
    val = panel_integral(lambda u: np.asarray(corr_fun(u.ravel() ** (1.0 / alpha))).reshape(u.shape),
                         edges[None, :], n_nodes // panels)
    return float(val[0]) / alpha


def _h_plus_fun(record, rho, b):
    """t -> max(H_hat(t), 0) on [0, b].

    Event records are evaluated exactly.  Grid records are interpolated
    linearly between the grid lags 0, dt, ..., which keeps the small-t part
    of the integral (weighted by t^(alpha-1)) free of snapping bias.
    """
    if record.is_event:
        return lambda t: np.maximum(estimate_covariance(record, rho, t).h_hat, 0.0)
    dt = record.form.dt
    k_max = int(math.ceil(b / dt))
    n = record.form.counts.size - 1
    if k_max >= n:
        raise ValueError("b must be below T - dt")
    lags = np.arange(k_max + 1) * dt
    h = np.maximum(estimate_covariance(record, rho, lags).h_hat, 0.0)
    return lambda t: np.interp(t, lags, h)


def estimate_psi_functional(record, rho, alpha, b, n_nodes=256):
    """Psi_hat_{alpha,b} = int_0^b H_hat_+(t) t^(alpha-1) dt."""
    if not 0 < b < record.T:
        raise ValueError("b must lie in (0, T)")
    return psi_functional(_h_plus_fun(record, rho, b), alpha, b, n_nodes)


def default_alpha(T):
    return 1.0 / math.log(T)


def default_b(T, d):
    lt = math.log(T)
    if d > 2:
        return (T / lt ** 2) ** (1.0 / d)
    if d == 2:
        return (T / lt ** 3) ** 0.5
    return math.sqrt(T) / lt ** 2


def sigma2_from_psi(psi_hat, alpha, ball):
    """(J_alpha / Psi_hat)^(1/alpha); None when Psi_hat is not positive."""
    if not psi_hat > 0:
        return None
    return (model.j_alpha(alpha, ball) / psi_hat) ** (1.0 / alpha)


def estimate_sigma2(record, rho, ball, alpha=None, b=None):
    """sigma_hat^2 = (J_alpha / Psi_hat_{alpha,b})^(1/alpha) with alpha = 1/ln T and the default b."""
    T = record.T
    if not T > math.e ** 2:
        raise ValueError("T must exceed e^2")
    alpha = default_alpha(T) if alpha is None else alpha
    b = default_b(T, ball.dim) if b is None else b
    psi_hat = estimate_psi_functional(record, rho, alpha, b)
    s2 = sigma2_from_psi(psi_hat, alpha, ball)
    seed, rep = record_provenance(record)
    return EstimateReport(
        "sigma2", s2 if s2 is not None else math.nan, "length^2/time",
        tuning={"alpha": alpha, "b": b},
        T=T, rho=rho, seed=seed, replicate=rep,
        diagnostics={"psi_hat": psi_hat, "j_alpha": model.j_alpha(alpha, ball),
                     "failure": None if s2 is not None else "no positive correlation mass"},
        failed=s2 is None,
    )


def default_tau(T, ball, sigma_bar):
    return 4.0 * ball.radius ** 2 / (sigma_bar ** 2 * math.log(T))


def sigma_from_corr(h_tau, tau, ball):
    """sqrt(2 pi) r / sqrt(tau) * (1 - H(tau))."""
    return math.sqrt(2.0 * math.pi) * ball.radius / math.sqrt(tau) * (1.0 - h_tau)


def estimate_sigma_d1(record, rho, ball, sigma_bar, tau=None):
    """Short-lag estimator for d = 1 at tau = 4 r^2 / (sigma_bar^2 ln T)."""
    if ball.dim != 1:
        raise ValueError("estimate_sigma_d1 requires d = 1")
    if not sigma_bar > 0:
        raise ValueError("sigma_bar must be positive")
    T = record.T
    tau_req = default_tau(T, ball, sigma_bar) if tau is None else tau
    if record.is_event:
        tau_used = tau_req
    else:
        dt = record.form.dt
        if tau_req < dt:
            raise ResolutionError(f"tau = {tau_req:.3g} is below the grid step {dt:.3g}")
        tau_used = float(grid_lag_index(record, [tau_req])[0] * dt)
    h_tau = float(estimate_covariance(record, rho, [tau_used]).h_hat[0])
    seed, rep = record_provenance(record)
    return EstimateReport(
        "sigma_d1", sigma_from_corr(h_tau, tau_used, ball), "length/sqrt(time)",
        tuning={"tau": tau_req, "tau_used": tau_used, "sigma_bar": sigma_bar},
        T=T, rho=rho, seed=seed, replicate=rep,
        diagnostics={"h_hat_tau": h_tau},
    )
