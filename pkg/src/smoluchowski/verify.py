"""Self-checks tying the simulators and estimators to the closed-form model."""

from dataclasses import dataclass, field
import math
import time

import numpy as np
from scipy import integrate, stats

from . import geometry, model
from .estimators import cdf
from .geometry import ObservationBall
from .mc import mean_and_se, replicate_covariances, replicate_values
from .model import Brownian, Degenerate, Rayleigh, UniformMotion
from .simulate import SimConfig, simulate


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} ({self.seconds:.1f}s) {self.detail}"


def _timed(name, fn, *args, **kw):
    t0 = time.perf_counter()
    passed, detail = fn(*args, **kw)
    return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)


def _unit_config(d, disp, rho, T, seed, **kw):
    ball = ObservationBall(d, 1.0)
    return SimConfig(ball, disp, rho / geometry.ball_volume(ball), T, seed=seed, **kw)


# (a) -----------------------------------------------------------------------


def poisson_chisquare(values, rho, min_expected=5.0):
    """Chi-square goodness of fit of pooled counts to Poisson(rho); returns (stat, p)."""
    values = np.asarray(values).ravel()
    n = values.size
    top = int(stats.poisson.isf(1e-12, rho)) + 1
    probs = stats.poisson.pmf(np.arange(top + 1), rho)
    # merge bins from both ends until each expected count is large enough
    edges = [0]
    acc = 0.0
    for k in range(top + 1):
        acc += probs[k] * n
        if acc >= min_expected:
            edges.append(k + 1)
            acc = 0.0
    edges[-1] = top + 1
    obs = np.array([np.sum((values >= a) & (values < b)) for a, b in zip(edges[:-1], edges[1:])], float)
    obs[-1] += np.sum(values >= top + 1)
    exp = np.array([probs[a:b].sum() for a, b in zip(edges[:-1], edges[1:])]) * n
    exp[-1] += stats.poisson.sf(top, rho) * n
    exp *= n / exp.sum()
    return stats.chisquare(obs, exp)


def check_poisson_marginals(seed, replicates, jobs=1, rho=5.0):
    """Pooled chi-square of N(t) at three well separated times, for both motion models."""
    detail = {}
    ok = True
    setups = {
        "uniform": (_unit_config(1, UniformMotion(Degenerate(1.0)), rho, 10.0, seed), [0.0, 5.0, 10.0]),
        # exact radial transitions: a coarse grid leaves the marginals exact
        "brownian": (_unit_config(1, Brownian(1.0), rho, 200.0, seed, grid_dt=1.0), [0.0, 100.0, 200.0]),
    }
    for name, (cfg, times) in setups.items():
        vals = replicate_values(cfg, times, replicates, jobs)
        stat, p = poisson_chisquare(vals, rho)
        detail[name] = {"p": float(p), "mean": float(vals.mean())}
        ok &= p > 1e-3
    return ok, detail


# (b) -----------------------------------------------------------------------


def covariance_oracle(cfg, lags, replicates, jobs=1, z=3.0):
    r = replicate_covariances(cfg, lags, replicates, jobs)
    mean, se = mean_and_se(r)
    target = cfg.rho * model.correlation(lags, cfg.ball, cfg.disp)
    dev = np.abs(mean - target) / se
    return bool(np.all(dev <= z)), {"max_z": float(dev.max()), "mean": mean.tolist(), "target": target.tolist()}


def check_covariance(seed, replicates, jobs=1):
    ok_u, det_u = covariance_oracle(_unit_config(1, UniformMotion(Degenerate(1.0)), 5.0, 50.0, seed),
                                    np.linspace(0.0, 2.5, 10), replicates, jobs)
    ok_b, det_b = covariance_oracle(_unit_config(2, Brownian(1.0), 5.0, 20.0, seed),
                                    np.linspace(0.0, 3.0, 10), replicates, jobs)
    return ok_u and ok_b, {"uniform_d1": det_u["max_z"], "brownian_d2": det_b["max_z"]}


# (c) -----------------------------------------------------------------------


def joint_pmf_table(corr, rho, size):
    m = np.arange(size)
    table = np.zeros((size, size))
    prior = stats.poisson.pmf(m, rho)
    for i in range(size):
        table[i] = prior[i] * model.transition_row(i, corr, rho, size - 1)[:size]
    return table


def check_transition(seed, pairs=100_000, rho=4.0, lag=0.5):
    """TV distance between empirical (N(s), N(s+lag)) frequencies and the binomial-Poisson formula."""
    cfg = _unit_config(1, UniformMotion(Degenerate(1.0)), rho, 4.0 * pairs, seed)
    rec = simulate(cfg)
    # particles stay in B for at most 2 time units, so pairs 4 apart are independent
    s = 4.0 * np.arange(pairs)
    a = rec.value_at(s)
    b = rec.value_at(s + lag)
    size = int(max(a.max(), b.max(), stats.poisson.isf(1e-14, rho))) + 2
    emp = np.zeros((size, size))
    np.add.at(emp, (a, b), 1.0)
    emp /= pairs
    theo = joint_pmf_table(float(model.corr_uniform(lag, cfg.ball, cfg.disp.law)), rho, size)
    tv = 0.5 * (np.abs(emp - theo).sum() + max(0.0, 1.0 - theo.sum()))
    return tv <= 0.02, {"tv": float(tv), "pairs": pairs}


# (d) -----------------------------------------------------------------------


def check_gaussian(seed, replicates, jobs=1, rho=100.0):
    """KS test of continuity-corrected standardized counts against N(0, 1)."""
    detail = {}
    ok = True
    setups = {
        "uniform": _unit_config(1, UniformMotion(Rayleigh(1.0)), rho, 1.0, seed),
        "brownian": _unit_config(1, Brownian(1.0), rho, 1.0, seed, grid_dt=0.5),
    }
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2 ** 31,)))
    for name, cfg in setups.items():
        vals = replicate_values(cfg, [0.5], replicates, jobs).ravel()
        # uniform jitter spreads each integer over a unit cell: Var = rho + 1/12
        zs = (vals + rng.random(vals.size) - 0.5 - rho) / math.sqrt(rho + 1.0 / 12.0)
        p = stats.kstest(zs, "norm").pvalue
        detail[name] = float(p)
        ok &= p > 1e-3
    return ok, detail


# (e) -----------------------------------------------------------------------


def mellin_w_quadrature(z, ball):
    """int_0^{2r} t^(z-1) w(t) dt by adaptive quadrature (Re z > 0).

    With t = 2r e^(-v) and w(0) = 1 subtracted, the integrand becomes
    e^(-v Re z) (w - 1) times a cosine/sine weight, which quad handles directly.
    """
    a = 2.0 * ball.radius
    x, y = z.real, z.imag
    g = lambda v: math.exp(-v * x) * (float(model.w_eval(a * math.exp(-v), ball)) - 1.0)
    v_max = 40.0 / min(x + 1.0, 1.0) + 40.0
    kw = dict(limit=400, epsabs=1e-12, epsrel=1e-10)
    if y == 0.0:
        re, im = integrate.quad(g, 0.0, v_max, **kw)[0], 0.0
    else:
        re = integrate.quad(g, 0.0, v_max, weight="cos", wvar=y, **kw)[0]
        im = -integrate.quad(g, 0.0, v_max, weight="sin", wvar=y, **kw)[0]
    return a ** z * (re + 1j * im) + a ** z / z


def check_mellin(seed=0, T=3200.0, x0=1.0):
    rng = np.random.default_rng(seed)
    worst_w = 0.0
    for d in (1, 2, 3):
        ball = ObservationBall(d, 1.0)
        n = 7 if d < 3 else 6
        zs = rng.uniform(0.3, 3.0, n) + 1j * rng.uniform(-5.0, 5.0, n)
        for z in zs:
            worst_w = max(worst_w, abs(model.mellin_w(z, ball) - mellin_w_quadrature(z, ball)))
    ball = ObservationBall(1, 1.0)
    kern = cdf.make_flat_kernel(3)
    h = cdf.default_bandwidth_cdf(T, rho=5.0, ball=ball, x0=x0)
    line = cdf.MellinLine.for_horizon(T)
    rep = max(abs(cdf.reproducing_identity(x0, h, ball, kern, line, x) - cdf.phi(x0, h, x, kern))
              for x in (0.5 * x0, x0, 1.2 * x0))
    law = Rayleigh(1.0)
    val, _, _ = cdf.cdf_functional(lambda t: model.corr_uniform(t, ball, law), T, x0, h, ball, kern, line)
    ref = integrate.quad(lambda x: cdf.phi(x0, h, x, kern) * law.density(x), 0.0, x0 * math.exp(h),
                         limit=200, epsabs=1e-13)[0]
    detail = {"mellin_w_err": float(worst_w), "reproducing_err": float(rep), "noise_free_err": float(abs(val - ref))}
    return worst_w <= 1e-8 and rep <= 1e-4 and abs(val - ref) <= 1e-4, detail


# (f) -----------------------------------------------------------------------


def j_alpha_quadrature(alpha, ball, sigma=1.0):
    """int_0^inf H(t) t^(alpha-1) dt for Brownian H, with the t^(-d/2) tail integrated in closed form."""
    f = lambda t: model.corr_brownian(t, ball, sigma) * t ** (alpha - 1.0)
    t_split = 1e6 * ball.radius ** 2 / sigma ** 2
    head = integrate.quad(f, 0.0, 1.0, limit=400, epsrel=1e-12, epsabs=0)[0]
    head += integrate.quad(lambda v: f(math.exp(v)) * math.exp(v), 0.0, math.log(t_split),
                           limit=400, epsrel=1e-12, epsabs=0)[0]
    # beyond t_split H(t) = c t^(-d/2) (1 + O(1/t)); integrate that form exactly
    c = float(model.corr_brownian(t_split, ball, sigma)) * t_split ** (ball.dim / 2.0)
    tail = c * t_split ** (alpha - ball.dim / 2.0) / (ball.dim / 2.0 - alpha)
    return head + tail


def check_psi_identity():
    worst = 0.0
    for d in (1, 2, 3):
        ball = ObservationBall(d, 1.0)
        for a in (0.05, 0.1, 0.2):
            j = model.j_alpha(a, ball)
            worst = max(worst, abs(j_alpha_quadrature(a, ball) / j - 1.0))
            worst = max(worst, abs(model.psi_alpha_true(a, ball, 1.7) * 1.7 ** (2 * a) / j - 1.0))
    return worst <= 1e-6, {"max_rel_err": worst}


# ---------------------------------------------------------------------------

LEVELS = {
    "quick": {"marginal": 500, "cov": 400, "gauss": 2000},
    "full": {"marginal": 2000, "cov": 2000, "gauss": 10_000},
}


def verify_suite(level="quick", seed=0, jobs=1):
    """Run checks (a)-(f); returns a list of CheckResult."""
    n = LEVELS[level]
    return [
        _timed("a_poisson_marginals", check_poisson_marginals, seed, n["marginal"], jobs),
        _timed("b_covariance_oracle", check_covariance, seed, n["cov"], jobs),
        _timed("c_transition_pmf", check_transition, seed),
        _timed("d_gaussian", check_gaussian, seed, n["gauss"], jobs),
        _timed("e_mellin", check_mellin, seed),
        _timed("f_psi_identity", check_psi_identity),
    ]
