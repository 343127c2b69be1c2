import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from smoluchowski import geometry
from smoluchowski.estimators import corr, speed
from smoluchowski.geometry import ObservationBall
from smoluchowski.mc import McStudySpec, run_study
from smoluchowski.model import Degenerate, Rayleigh, UniformMotion
from smoluchowski.records import CountRecord, EventForm
from smoluchowski.simulate import SimConfig, simulate


def test_deriv_kernel():
    k = speed.make_deriv_kernel()
    assert k.coef == (-6.0, 12.0)
    assert abs(integrate.quad(k, 0.0, 1.0)[0]) <= 1e-14
    assert_allclose(integrate.quad(lambda x: x * k(x), 0.0, 1.0)[0], 1.0, rtol=1e-14)
    oracle = sum(integrate.quad(lambda x: x * x * abs(k(x)), a, b, epsabs=1e-15)[0] for a, b in [(0, 0.5), (0.5, 1)])
    assert_allclose(k.c_k, 9.0 / 8.0, rtol=1e-12)
    assert_allclose(oracle, 9.0 / 8.0, rtol=1e-12)


def _synthetic(monkeypatch, r_fun):
    def fake(record, rho, lags):
        lags = np.atleast_1d(np.asarray(lags, dtype=float))
        r = r_fun(lags)
        return corr.CorrelationCurve(lags, r, r / rho)
    monkeypatch.setattr(speed, "estimate_covariance", fake)


def test_constant_covariance(monkeypatch):
    _synthetic(monkeypatch, lambda t: np.full_like(t, 3.7))
    rec = CountRecord(EventForm([], [1]), 100.0)
    rep = speed.estimate_mean_speed(rec, 5.0, ObservationBall(2, 1.0), h=0.3)
    assert abs(rep.estimate) <= 1e-13


@pytest.mark.parametrize("d", [1, 2, 3])
def test_linear_covariance(monkeypatch, d):
    rho, beta, h = 5.0, 0.8, 0.2
    _synthetic(monkeypatch, lambda t: rho * (1.0 - beta * t))
    ball = ObservationBall(d, 1.3)
    rec = CountRecord(EventForm([], [1]), 100.0)
    rep = speed.estimate_mean_speed(rec, rho, ball, h=h)
    assert_allclose(rep.estimate, beta * 1.3 * ball.half_beta, rtol=1e-12)


def test_bandwidth_examples():
    lo, hi = speed.mean_speed_window(1e4)
    assert_allclose(lo, math.log(1e4) ** 2 / 1e4)
    h = speed.default_bandwidth_mean_speed(1e4)
    assert_allclose(h, math.sqrt(lo * hi), rtol=1e-14)
    assert_allclose(h, 1e-3 * math.sqrt(math.log(1e4)), rtol=1e-14)
    lo, hi = speed.mean_speed_window(1e8)
    assert_allclose([lo, hi], [3.393e-6, 5.429e-6], rtol=1e-3)
    assert lo <= speed.default_bandwidth_mean_speed(1e8) <= hi
    assert_allclose(speed.default_bandwidth_mean_speed(1e8), 4.292e-6, rtol=1e-3)
    with pytest.raises(speed.BandwidthError):
        speed.default_bandwidth_mean_speed(5.0)


def test_window_admissibility():
    # the window [(ln T)^2 / T, 1 / (sqrt(T) ln T)] is nonempty only when (ln T)^3 <= sqrt(T)
    for T in np.geomspace(100.0, 1e12, 200):
        lo, hi = speed.mean_speed_window(T)
        h = speed.default_bandwidth_mean_speed(T)
        if math.log(T) ** 3 <= math.sqrt(T):
            assert lo <= h <= hi
        else:
            assert lo > hi
    assert speed.mean_speed_window(2.3e7)[0] > speed.mean_speed_window(2.3e7)[1]
    assert speed.mean_speed_window(2.5e7)[0] < speed.mean_speed_window(2.5e7)[1]


def test_report_fields():
    ball = ObservationBall(1, 1.0)
    rec = simulate(SimConfig(ball, UniformMotion(Rayleigh(1.0)), 2.5, 500.0, seed=3))
    rep = speed.estimate_mean_speed(rec, 5.0, ball)
    d = rep.to_dict()
    assert d["schema"] == 1 and d["estimator"] == "mean_speed" and d["seed"] == 3
    assert d["diagnostics"]["window_empty"] is True
    assert set(d["tuning"]) >= {"h", "kernel"}


def test_scale_equivariance():
    ball = ObservationBall(2, 1.0)
    lam = 5.0 / geometry.ball_volume(ball)
    c = 2.0
    a = SimConfig(ball, UniformMotion(Rayleigh(1.0)), lam, 400.0, seed=8)
    b = replace(a, disp=UniformMotion(Rayleigh(c)), T=400.0 / c)
    h = 0.05
    mu_a = speed.estimate_mean_speed(simulate(a), 5.0, ball, h=h).estimate
    mu_b = speed.estimate_mean_speed(simulate(b), 5.0, ball, h=h / c).estimate
    assert_allclose(mu_b, c * mu_a, rtol=1e-9)


def test_degenerate_mean_speed_mc():
    ball = ObservationBall(1, 1.0)
    base = SimConfig(ball, UniformMotion(Degenerate(1.0)), 2.5, 3200.0, seed=2)
    reps = run_study(McStudySpec(base, "mean-speed", replicates=200))
    mean = np.mean([r.estimate for r in reps])
    assert 0.9 <= mean <= 1.1
