"""Closed-form theory: speed laws, correlation functions, Mellin transform of w,
memory integrals, the diffusion functional J_alpha and transition pmfs.

Everything here is deterministic except :func:`mc_joint_persistence`, which
takes a caller-owned ``numpy.random.Generator``.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import special, stats

from . import geometry, specfun
from .quadrature import adaptive_panel_integral

_HALF_PI = 0.5 * math.pi


# ---------------------------------------------------------------------------
# speed laws


class SpeedLaw:
    """Distribution of the particle speed |v| on [0, inf)."""

    name = "speed"

    def cdf(self, x):
        raise NotImplementedError

    def density(self, x):
        raise NotImplementedError

    def mean(self):
        raise NotImplementedError

    def mean_inverse(self):
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    def sample_size_biased(self, rng, size=None):
        """Draw from the law with density proportional to x dF(x)."""
        raise NotImplementedError

    def kinks(self):
        """Points where the cdf is not smooth (used to split quadrature panels)."""
        return ()

    def spec(self):
        """Compact string form, e.g. ``rayleigh:1``; inverse of :func:`parse_speed_law`."""
        raise NotImplementedError


@dataclass(frozen=True)
class Degenerate(SpeedLaw):
    v0: float
    name = "degenerate"

    def __post_init__(self):
        if not self.v0 >= 0:
            raise ValueError("Degenerate speed must be nonnegative")

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.v0, 1.0, 0.0)

    def density(self, x):
        return np.where(np.asarray(x, dtype=float) == self.v0, np.inf, 0.0)

    def mean(self):
        return float(self.v0)

    def mean_inverse(self):
        return math.inf if self.v0 == 0 else 1.0 / self.v0

    def sample(self, rng, size=None):
        return np.full(size, float(self.v0)) if size is not None else float(self.v0)

    def sample_size_biased(self, rng, size=None):
        return self.sample(rng, size)

    def kinks(self):
        return (self.v0,)

    def spec(self):
        return f"degenerate:{self.v0!r}"


@dataclass(frozen=True)
class Rayleigh(SpeedLaw):
    scale: float
    name = "rayleigh"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("Rayleigh scale must be positive")

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-0.5 * (x / self.scale) ** 2)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        s2 = self.scale ** 2
        return np.where(x >= 0, x / s2 * np.exp(-0.5 * x * x / s2), 0.0)

    def mean(self):
        return self.scale * math.sqrt(_HALF_PI)

    def mean_inverse(self):
        return math.sqrt(_HALF_PI) / self.scale

    def sample(self, rng, size=None):
        return rng.rayleigh(self.scale, size)

    def sample_size_biased(self, rng, size=None):
        # x^2 exp(-x^2/2s^2): Maxwell, i.e. s * chi_3
        return self.scale * np.sqrt(rng.chisquare(3, size))

    def spec(self):
        return f"rayleigh:{self.scale!r}"


@dataclass(frozen=True)
class HalfNormal(SpeedLaw):
    scale: float
    name = "halfnormal"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("HalfNormal scale must be positive")

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return special.erf(x / (self.scale * math.sqrt(2.0)))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        c = math.sqrt(2.0 / math.pi) / self.scale
        return np.where(x >= 0, c * np.exp(-0.5 * (x / self.scale) ** 2), 0.0)

    def mean(self):
        return self.scale * math.sqrt(2.0 / math.pi)

    def mean_inverse(self):
        return math.inf

    def sample(self, rng, size=None):
        return np.abs(rng.normal(0.0, self.scale, size))

    def sample_size_biased(self, rng, size=None):
        return rng.rayleigh(self.scale, size)

    def spec(self):
        return f"halfnormal:{self.scale!r}"


@dataclass(frozen=True)
class UniformInterval(SpeedLaw):
    a: float
    b: float
    name = "uniform"

    def __post_init__(self):
        if not 0 <= self.a < self.b:
            raise ValueError("UniformInterval requires 0 <= a < b")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)

    def mean(self):
        return 0.5 * (self.a + self.b)

    def mean_inverse(self):
        if self.a == 0:
            return math.inf
        return math.log(self.b / self.a) / (self.b - self.a)

    def sample(self, rng, size=None):
        return rng.uniform(self.a, self.b, size)

    def sample_size_biased(self, rng, size=None):
        u = rng.random(size)
        return np.sqrt(self.a ** 2 + u * (self.b ** 2 - self.a ** 2))

    def kinks(self):
        return (self.a, self.b)

    def spec(self):
        return f"uniform:{self.a!r},{self.b!r}"


def parse_speed_law(text):
    """Parse ``degenerate:v``, ``rayleigh:s``, ``halfnormal:s`` or ``uniform:a,b``."""
    try:
        kind, _, args = text.partition(":")
        vals = [float(v) for v in args.split(",")] if args else []
        kind = kind.strip().lower()
        if kind == "degenerate" and len(vals) == 1:
            return Degenerate(vals[0])
        if kind == "rayleigh" and len(vals) == 1:
            return Rayleigh(vals[0])
        if kind == "halfnormal" and len(vals) == 1:
            return HalfNormal(vals[0])
        if kind == "uniform" and len(vals) == 2:
            return UniformInterval(vals[0], vals[1])
    except ValueError as exc:
        raise ValueError(f"bad speed law {text!r}: {exc}") from None
    raise ValueError(f"bad speed law {text!r}")


# ---------------------------------------------------------------------------
# displacement models


@dataclass(frozen=True)
class UniformMotion:
    law: SpeedLaw
    kind = "uniform"


@dataclass(frozen=True)
class Brownian:
    sigma: float
    kind = "brownian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("Brownian sigma must be positive")


# ---------------------------------------------------------------------------
# correlation functions
#
# Both correlation integrals have the form
#   (1/B) int_0^1 g(y) (1-y)^((d-1)/2) y^(-1/2) dy,  B = B((d+1)/2, 1/2).
# With y = sin^2(theta) this becomes (2/B) int_0^{pi/2} g(sin^2 theta) cos^d(theta) d theta,
# which is smooth at both ends for every d.


def _theta_integral(ball, t, inner, breaks):
    """(2/B) int_0^{pi/2} inner(theta, t) cos^d(theta) d theta for each t.

    ``breaks(t)`` returns an (nt, k) array of extra panel boundaries in (0, pi/2).
    """
    d = ball.dim
    t = np.asarray(t, dtype=float)
    extra = np.sort(np.clip(breaks(t), 0.0, _HALF_PI), axis=1)
    edges = np.column_stack([np.zeros(len(t)), extra, np.full(len(t), _HALF_PI)])

    def fun(theta):
        return inner(theta, t[:, None]) * np.cos(theta) ** d

    return 2.0 / ball.half_beta * adaptive_panel_integral(fun, edges)


def _vectorize_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("times must be finite and nonnegative")
    return t, np.atleast_1d(t).ravel()


def w_eval(t, ball):
    """w(t) = g_B(t)/vol(B) = I((d+1)/2, 1/2; 1 - t^2/(4r^2)) for t <= 2r, else 0."""
    val = np.asarray(geometry.covariogram(ball, t)) / geometry.ball_volume(ball)
    return val[()] if val.ndim == 0 else val


def corr_uniform(t, ball, law):
    """Correlation function H(t) under undeviated uniform motion with speed law ``law``."""
    t_in, tt = _vectorize_t(t)
    out = np.ones(tt.shape)
    pos = tt > 0
    if isinstance(law, Degenerate):
        out[pos] = w_eval(law.v0 * tt[pos], ball)
    elif np.any(pos):
        r = ball.radius
        kinks = np.array([k for k in law.kinks() if k > 0], dtype=float)

        def breaks(ts):
            if kinks.size == 0:
                return np.zeros((len(ts), 0))
            s = np.clip(kinks[None, :] * ts[:, None] / (2.0 * r), 0.0, 1.0)
            return np.arcsin(s)

        def inner(theta, ts):
            # tiny t overflows the argument to inf, where the cdf is 1
            with np.errstate(over="ignore"):
                return law.cdf(2.0 * r * np.sin(theta) / ts)

        out[pos] = _theta_integral(ball, tt[pos], inner, breaks)
    out = np.clip(out, 0.0, 1.0).reshape(t_in.shape)
    return out[()] if out.ndim == 0 else out


def corr_brownian(t, ball, sigma):
    """Correlation function H(t) under Brownian displacement with coefficient ``sigma``."""
    t_in, tt = _vectorize_t(t)
    out = np.ones(tt.shape)
    pos = tt > 0
    if np.any(pos):
        r, s = ball.radius, ball.dim / 2.0
        scale = 2.0 * r * r / (sigma * sigma)

        def breaks(ts):
            # split where the gamma argument passes 1 and 50
            lev = np.array([1.0, 50.0])
            sn = np.sqrt(np.clip(lev[None, :] * ts[:, None] / scale, 0.0, 1.0))
            return np.arcsin(sn)

        def inner(theta, ts):
            return specfun.reg_lower_inc_gamma(s, scale * np.sin(theta) ** 2 / ts)

        out[pos] = _theta_integral(ball, tt[pos], inner, breaks)
    out = np.clip(out, 0.0, 1.0).reshape(t_in.shape)
    return out[()] if out.ndim == 0 else out


def correlation(t, ball, disp):
    """Dispatch to the correlation function of a displacement model."""
    if isinstance(disp, UniformMotion):
        return corr_uniform(t, ball, disp.law)
    if isinstance(disp, Brownian):
        return corr_brownian(t, ball, disp.sigma)
    raise TypeError(f"unknown displacement model {disp!r}")


def brownian_small_t(t, ball, sigma):
    """Leading term of 1 - H(t) as t -> 0 for d = 1: sigma sqrt(t) / (sqrt(2 pi) r)."""
    return sigma * np.sqrt(t) / (math.sqrt(2.0 * math.pi) * ball.radius)


def brownian_large_t(t, ball, sigma):
    """Leading term of H(t) as t -> infinity."""
    d, r = ball.dim, ball.radius
    c = math.gamma((d + 1) / 2.0) / (math.gamma(d + 1.0) * math.gamma(0.5))
    return c * (math.sqrt(2.0) * r / (sigma * np.sqrt(t))) ** d


def brownian_upper_bound(t, ball, sigma):
    """Bound on H(t) valid for every t > 0."""
    d, r = ball.dim, ball.radius
    c = 2.0 ** (d / 2.0) * math.gamma((d + 1) / 2.0) / (math.gamma(d + 1.0) * math.gamma(0.5))
    return c * (r * r / (sigma * sigma * np.asarray(t, dtype=float))) ** (d / 2.0)


def brownian_integral_bound(T, ball, sigma):
    """Bound on int_0^T H(t) dt; finite in T only for d > 2."""
    d, r = ball.dim, ball.radius
    if d > 2:
        return 4.0 * r * r / (sigma * sigma * (d * d - 4.0))
    if d == 2:
        return 1.0 + r * r / (2.0 * sigma * sigma) * math.log(T)
    return 2.0 * math.sqrt(2.0) * r / (math.sqrt(math.pi) * sigma) * math.sqrt(T)


# ---------------------------------------------------------------------------
# Mellin transform of w


def mellin_w(z, ball):
    """Mellin transform of w: (2r)^z / z * B((d+1)/2, (z+1)/2) / B((d+1)/2, 1/2)."""
    z = np.asarray(z, dtype=complex)
    if np.any(~(z.real > 0)):
        raise ValueError("mellin_w: Re(z) must be positive")
    a = (ball.dim + 1) / 2.0
    val = np.exp(z * math.log(2.0 * ball.radius)) / z
    val = val * np.asarray(specfun.beta_fn_c(a, (z + 1.0) / 2.0)) / ball.half_beta
    return val[()] if val.ndim == 0 else val


# ---------------------------------------------------------------------------
# memory integrals and the Brownian scale functional


def memory_integral_uniform(ball, law):
    """int_0^inf H(t) dt under uniform motion; +inf when E[1/|v|] diverges."""
    d, r = ball.dim, ball.radius
    m = law.mean_inverse()
    if math.isinf(m):
        return math.inf
    return 2.0 * r * float(specfun.beta_fn((d + 1) / 2.0, 1.0)) / ball.half_beta * m


def _check_alpha(alpha, ball):
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    if not alpha < ball.dim / 2.0:
        raise ValueError("alpha must be below d/2")


def j_alpha(alpha, ball):
    """J_alpha = int_0^inf J(t) t^(alpha-1) dt, J the unit-sigma Brownian correlation."""
    _check_alpha(alpha, ball)
    d, r = ball.dim, ball.radius
    num = (2.0 * r * r) ** alpha * math.exp(
        float(specfun.log_gamma(d / 2.0 - alpha)) - float(specfun.log_gamma(d / 2.0))
    )
    num *= float(specfun.beta_fn(0.5 + alpha, (d + 1) / 2.0))
    return num / (alpha * ball.half_beta)


def psi_alpha_true(alpha, ball, sigma):
    """Psi_alpha = int_0^inf H(t) t^(alpha-1) dt = sigma^(-2 alpha) J_alpha."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return sigma ** (-2.0 * alpha) * j_alpha(alpha, ball)


# ---------------------------------------------------------------------------
# transition probabilities


def _poisson_cutoff(mu, tail=1e-16):
    if mu <= 0:
        return 0
    return int(stats.poisson.isf(tail, mu)) + 1


def transition_pmf(m, n, corr, rho):
    """P{N(s+t) = n | N(s) = m} when H(t) = corr and E N = rho.

    Binomial(m, corr) survivors convolved with Poisson(rho (1 - corr)) newcomers.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    if not 0 <= corr <= 1:
        raise ValueError("corr must lie in [0, 1]")
    m, n = int(m), int(n)
    if m < 0 or n < 0:
        return 0.0
    j = np.arange(0, min(m, n) + 1)
    stay = stats.binom.pmf(j, m, corr)
    new = stats.poisson.pmf(n - j, rho * (1.0 - corr)) if corr < 1 else (n - j == 0).astype(float)
    return float(np.sum(stay * new))


def transition_row(m, corr, rho, n_max=None):
    """Vector of transition_pmf(m, n, corr, rho) for n = 0..n_max.

    The default n_max leaves at most 1e-16 Poisson tail mass beyond m.
    """
    if n_max is None:
        n_max = m + _poisson_cutoff(rho * (1.0 - corr))
    return np.array([transition_pmf(m, n, corr, rho) for n in range(n_max + 1)])


def joint_pmf(m, n, corr, rho):
    """P{N(s) = m, N(s+t) = n}."""
    return float(stats.poisson.pmf(m, rho)) * transition_pmf(m, n, corr, rho)


# ---------------------------------------------------------------------------
# Monte Carlo for the joint persistence mean


def _uniform_in_ball(rng, dim, radius, size):
    g = rng.normal(size=(size, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = radius * rng.random(size) ** (1.0 / dim)
    return g * rad[:, None]


def _uniform_direction(rng, dim, size):
    g = rng.normal(size=(size, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def displacement_paths(disp, dim, times, rng, size):
    """Sample displacement Y at the given sorted times; shape (size, len(times), dim)."""
    times = np.asarray(times, dtype=float)
    if isinstance(disp, UniformMotion):
        speed = np.asarray(disp.law.sample(rng, size), dtype=float)
        vel = _uniform_direction(rng, dim, size) * speed[:, None]
        return vel[:, None, :] * times[None, :, None]
    if isinstance(disp, Brownian):
        dt = np.diff(np.concatenate([[0.0], times]))
        steps = rng.normal(size=(size, len(times), dim)) * (disp.sigma * np.sqrt(dt))[None, :, None]
        return np.cumsum(steps, axis=1)
    raise TypeError(f"unknown displacement model {disp!r}")


def mc_joint_persistence(ball, disp, times, lam, rng, n_samples=200_000):
    """Monte Carlo estimate of lam * E vol{ intersection of B(Y_t) over t in times }.

    Returns ``(estimate, standard_error)``.  For a single time this is rho; for
    two times it is rho * H(t2 - t1); in general it is the Poisson mean of the
    number of particles inside B at every listed time.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be a nonempty sorted sequence")
    paths = displacement_paths(disp, ball.dim, times, rng, n_samples)
    pts = paths[:, 0, :] + _uniform_in_ball(rng, ball.dim, ball.radius, n_samples)
    dist = np.linalg.norm(pts[:, None, :] - paths, axis=2)
    inside = np.all(dist <= ball.radius, axis=1).astype(float)
    scale = lam * geometry.ball_volume(ball)
    return scale * inside.mean(), scale * inside.std(ddof=1) / math.sqrt(n_samples)
