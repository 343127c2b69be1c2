"""Simulation of N(t) on [0, T] for uniform-motion and Brownian particles.

Only particles that can visit B during [0, T] are generated.

Uniform motion is exact: a particle with speed v can visit B iff its initial
position lies in the capsule B + [-vT, 0] e (e the direction of motion), whose
volume is V_d r^d + V_{d-1} r^{d-1} v T.  The Poisson mean of relevant particles
is therefore lambda (V_d r^d + V_{d-1} r^{d-1} T E v), and the (speed, position)
law splits into a ball part (speed ~ F, position in the two end caps) and a
cylinder part (speed ~ size-biased F, position in the cylinder).

Brownian particles are simulated through their distance to the centre, which
is a Bessel process and is all that membership in B depends on.  On the grid
it is advanced by exact transitions.  Outside B the time to come back to
radius r is drawn from its exact law (d = 1, 3) so that excursions cost O(1);
other dimensions leap ahead in steps too short to reach B except with
probability ~ 2 Phi(-c).
"""

from dataclasses import dataclass, asdict
import math

import numba
import numpy as np
from scipy import special

from . import geometry
from .geometry import ObservationBall
from .model import Brownian, UniformMotion, parse_speed_law
from .records import CountRecord, EventForm, GridForm

DEFAULT_CAPACITY = 10 ** 8


class CapacityError(RuntimeError):
    """The expected number of relevant particles exceeds the configured cap."""


def stream(seed, replicate=0):
    """Counter-based generator for replicate ``replicate`` of base seed ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    ball: ObservationBall
    disp: object
    lam: float
    T: float
    grid_dt: float = None
    seed: int = 0
    replicate: int = 0
    brownian_margin_c: float = 6.0
    speed_tail_eps: float = 1e-9
    capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.grid_dt is not None and not 0 < self.grid_dt < self.T:
            raise ValueError("grid_dt must lie in (0, T)")
        if self.brownian_margin_c < 3:
            raise ValueError("brownian_margin_c must be at least 3")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def rho(self):
        return self.lam * geometry.ball_volume(self.ball)

    def effective_dt(self):
        """Grid step actually used: T / n with n = ceil(T / requested dt)."""
        if self.grid_dt is not None:
            req = self.grid_dt
        elif isinstance(self.disp, Brownian):
            req = min(self.T / 4096.0, (self.ball.radius / (10.0 * self.disp.sigma)) ** 2)
        else:
            req = self.T / 4096.0
        n = max(1, int(math.ceil(self.T / req * (1.0 - 1e-12))))
        return self.T / n, n

    def to_dict(self):
        out = asdict(self)
        out["ball"] = {"dim": self.ball.dim, "radius": self.ball.radius}
        if isinstance(self.disp, UniformMotion):
            out["disp"] = {"model": "uniform", "speed_law": self.disp.law.spec()}
        else:
            out["disp"] = {"model": "brownian", "sigma": self.disp.sigma}
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["ball"] = ObservationBall(int(d["ball"]["dim"]), float(d["ball"]["radius"]))
        disp = d["disp"]
        if disp["model"] == "uniform":
            d["disp"] = UniformMotion(parse_speed_law(disp["speed_law"]))
        else:
            d["disp"] = Brownian(float(disp["sigma"]))
        return cls(**d)


def simulate(config):
    if isinstance(config.disp, UniformMotion):
        return simulate_uniform(config)
    if isinstance(config.disp, Brownian):
        return simulate_brownian(config)
    raise TypeError(f"unknown displacement model {config.disp!r}")


# ---------------------------------------------------------------------------
# uniform motion


def _ball_coords(rng, d, r, size):
    """Coordinate along e and squared orthogonal norm of uniform points in B."""
    if d == 1:
        return rng.uniform(-r, r, size), np.zeros(size)
    g = rng.normal(size=(size, d))
    rad = r * rng.random(size) ** (1.0 / d) / np.linalg.norm(g, axis=1)
    x = g * rad[:, None]
    return x[:, 0], np.sum(x[:, 1:] ** 2, axis=1)


def _merge_events(times, deltas):
    order = np.argsort(times, kind="stable")
    times, deltas = times[order], deltas[order]
    uniq, start = np.unique(times, return_index=True)
    net = np.add.reduceat(deltas, start) if times.size else deltas
    keep = net != 0
    return uniq[keep], net[keep]


def simulate_uniform(config):
    """Exact EventForm record for undeviated uniform motion."""
    ball, law, T = config.ball, config.disp.law, config.T
    d, r = ball.dim, ball.radius
    rng = stream(config.seed, config.replicate)

    w_ball = geometry.unit_ball_volume(d) * r ** d
    w_cyl = geometry.unit_ball_volume(d - 1) * r ** (d - 1) * T * law.mean()
    mean_m = config.lam * (w_ball + w_cyl)
    if mean_m > config.capacity:
        raise CapacityError(f"expected {mean_m:.3g} particles exceeds cap {config.capacity}")
    m_ball = rng.poisson(config.lam * w_ball)
    m_cyl = rng.poisson(config.lam * w_cyl) if w_cyl > 0 else 0

    # ball part: x uniform in B, shifted back by vT when behind the centre plane
    v_b = np.asarray(law.sample(rng, m_ball), dtype=float).reshape(m_ball)
    x1_b, perp_b = _ball_coords(rng, d, r, m_ball)
    x1_b = np.where(x1_b < 0, x1_b - v_b * T, x1_b)

    # cylinder part: x1 uniform on [-vT, 0], orthogonal part uniform in the (d-1)-ball
    v_c = np.asarray(law.sample_size_biased(rng, m_cyl), dtype=float).reshape(m_cyl)
    x1_c = -v_c * T * rng.random(m_cyl)
    perp_c = (r * r * rng.random(m_cyl) ** (2.0 / (d - 1))) if d > 1 else np.zeros(m_cyl)

    v = np.concatenate([v_b, v_c])
    x1 = np.concatenate([x1_b, x1_c])
    half = np.sqrt(np.maximum(r * r - np.concatenate([perp_b, perp_c]), 0.0))

    moving = v > 0
    enter = np.where(moving, (-half - x1) / np.where(moving, v, 1.0), -np.inf)
    leave = np.where(moving, (half - x1) / np.where(moving, v, 1.0), np.inf)
    enter = np.clip(enter, 0.0, T)
    leave = np.clip(leave, 0.0, T)
    # static particles sit inside B forever iff |x1| <= half
    static_in = ~moving & (np.abs(x1) <= half)
    enter = np.where(moving, enter, 0.0)
    leave = np.where(moving, leave, np.where(static_in, T, 0.0))

    visit = leave > enter
    n0 = int(np.sum(visit & (enter == 0.0)))
    up = enter[visit & (enter > 0.0)]
    down = leave[visit & (leave < T)]
    times = np.concatenate([up, down])
    deltas = np.concatenate([np.ones(up.size, np.int64), -np.ones(down.size, np.int64)])
    jt, net = _merge_events(times, deltas)
    values = n0 + np.concatenate([[0], np.cumsum(net)])

    meta = {
        "config": config.to_dict(),
        "particles": int(v.size),
        "speed_truncation": 0.0,
    }
    return CountRecord(EventForm(jt, values), T, meta)


# ---------------------------------------------------------------------------
# Brownian motion


@numba.njit(cache=True)
def _bessel_step(rad, eps, d):
    z = rad + eps * np.random.standard_normal()
    if d == 1:
        return abs(z)
    return math.sqrt(z * z + eps * eps * np.random.chisquare(d - 1))


@numba.njit(cache=True)
def _passage_time(rad, r, sigma, d):
    """Time for the radial process to fall from rad > r to r (inf if never)."""
    if d == 3 and np.random.random() * rad > r:
        return np.inf
    z = np.random.standard_normal()
    if z == 0.0:
        return np.inf
    u = (rad - r) / (sigma * z)
    return u * u


@numba.njit(cache=True)
def _run_particles(seed, radii, starts, start_offsets, r, sigma, d, dt, n, margin, counts):
    """Advance every particle and add its grid-time memberships to ``counts``.

    Particle i is at radius radii[i] at time starts[i] * dt + start_offsets[i]
    (start_offsets > 0 means the particle sits on the sphere at a continuous
    time inside the grid cell ending at starts[i]).
    """
    np.random.seed(seed)
    exact = d == 1 or d == 3
    steps = 0
    for i in range(radii.size):
        k = starts[i]
        if k > n:
            continue
        rad = radii[i]
        if start_offsets[i] > 0.0:
            rad = _bessel_step(r, sigma * math.sqrt(start_offsets[i]), d)
        eps = sigma * math.sqrt(dt)
        while k <= n:
            if rad <= r:
                counts[k] += 1
                if k == n:
                    break
                rad = _bessel_step(rad, eps, d)
                k += 1
                steps += 1
            elif exact:
                tau = _passage_time(rad, r, sigma, d)
                t_hit = k * dt + tau
                if not t_hit < n * dt:
                    break
                j = int(math.floor(t_hit / dt)) + 1
                if j > n:
                    break
                rad = _bessel_step(r, sigma * math.sqrt(j * dt - t_hit), d)
                k = j
                steps += 1
            else:
                gap = (rad - r) / (margin * sigma)
                m = int(gap * gap / dt)
                if m < 1:
                    m = 1
                if m > n - k:
                    m = n - k
                if m == 0:
                    break
                rad = _bessel_step(rad, sigma * math.sqrt(m * dt), d)
                k += m
                steps += 1
    return steps


def _outside_mean(lam, r, s, d):
    """Mean number of particles outside B at time 0 that enter B by T = s^2 / sigma^2 (d = 1, 3)."""
    if d == 1:
        return 4.0 * lam * s / math.sqrt(2.0 * math.pi)
    return 8.0 * math.pi * lam * r * (r * s / math.sqrt(2.0 * math.pi) + 0.25 * s * s)


def _first_entries(rng, lam, r, s, d, sigma, dt, n):
    """Particles outside B at time 0 that reach radius r by T = s^2 / sigma^2.

    Returns (grid index after the hitting time, time from hit to that grid point).
    """
    mean = _outside_mean(lam, r, s, d)
    m = rng.poisson(mean)
    if d == 1:
        delta = s * rng.random(m) * rng.rayleigh(1.0, m)
    else:
        wa = r * s / math.sqrt(2.0 * math.pi)
        wb = 0.25 * s * s
        pick_a = rng.random(m) * (wa + wb) < wa
        u_a = rng.random(m) * rng.rayleigh(1.0, m)
        u_b = np.sqrt(rng.random(m)) * np.sqrt(rng.chisquare(3, m))
        delta = s * np.where(pick_a, u_a, u_b)
    # hitting time conditioned to be <= T: |Z| >= a with a = delta / s
    a = delta / s
    absz = -special.ndtri(rng.random(m) * special.ndtr(-a))
    tau = (delta / (sigma * absz)) ** 2
    tau = np.minimum(tau, n * dt)
    j = np.floor(tau / dt).astype(np.int64) + 1
    return j, j * dt - tau, mean


def simulate_brownian(config):
    """GridForm record for Brownian particles."""
    ball, sigma, T = config.ball, config.disp.sigma, config.T
    d, r = ball.dim, ball.radius
    dt, n = config.effective_dt()
    rng = stream(config.seed, config.replicate)
    s = sigma * math.sqrt(T)
    c = config.brownian_margin_c

    if d in (1, 3):
        expected = config.rho + _outside_mean(config.lam, r, s, d)
        if expected > config.capacity:
            raise CapacityError(f"expected {expected:.3g} particles exceeds cap {config.capacity}")
        j, off, _ = _first_entries(rng, config.lam, r, s, d, sigma, dt, n)
        n_in = rng.poisson(config.rho)
        radii = np.concatenate([r * rng.random(n_in) ** (1.0 / d), np.full(j.size, r)])
        starts = np.concatenate([np.zeros(n_in, np.int64), j])
        offsets = np.concatenate([np.zeros(n_in), off])
        advisory = "exact radial transitions and first-passage times"
    else:
        big = r + c * s
        mean = config.lam * geometry.unit_ball_volume(d) * big ** d
        if mean > config.capacity:
            raise CapacityError(f"expected {mean:.3g} particles exceeds cap {config.capacity}")
        m = rng.poisson(mean)
        radii = big * rng.random(m) ** (1.0 / d)
        starts = np.zeros(m, np.int64)
        offsets = np.zeros(m)
        advisory = (f"initial ball radius r + {c:g} sigma sqrt(T); outside B the radius leaps in "
                    f"steps that reach B with probability below {2 * special.ndtr(-c):.1e}")

    counts = np.zeros(n + 1, np.int64)
    nb_seed = int(rng.integers(0, 2 ** 31 - 1))
    _run_particles(nb_seed, radii, starts, offsets, r, sigma, d, dt, n, c, counts)
    meta = {
        "config": config.to_dict(),
        "particles": int(radii.size),
        "dt": dt,
        "advisory": advisory,
    }
    return CountRecord(GridForm(dt, counts), T, meta)
