from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose

from smoluchowski import geometry, model
from smoluchowski.estimators import corr
from smoluchowski.geometry import ObservationBall
from smoluchowski.mc import replicate_covariances
from smoluchowski.model import Brownian, Degenerate, Rayleigh, UniformMotion
from smoluchowski.records import CountRecord, EventForm, GridForm
from smoluchowski.simulate import SimConfig, simulate


def _exact_cov(jumps, values, T, rho, t):
    """Piecewise integration in rational arithmetic."""
    jumps = [Fraction(j) for j in jumps]
    T, rho, t = Fraction(T), Fraction(rho), Fraction(t)

    def n_at(s):
        k = sum(1 for j in jumps if j <= s)
        return values[k]

    cuts = sorted({Fraction(0), T - t, *[j for j in jumps if j < T - t], *[j - t for j in jumps if 0 < j - t < T - t]})
    total = Fraction(0)
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = (a + b) / 2
        total += (b - a) * (n_at(mid) - rho) * (n_at(mid + t) - rho)
    return total / (T - t)


def test_three_jump_record_exact():
    jumps, values, T, rho = [0.75, 1.5, 3.25], [2, 3, 1, 4], 5.0, 2.5
    rec = CountRecord(EventForm(jumps, values), T)
    lags = [0.0, 0.25, 0.75, 1.0, 2.0, 3.3, 4.9]
    got = corr.estimate_covariance(rec, rho, lags).r_hat
    want = [float(_exact_cov(jumps, values, T, rho, Fraction(l))) for l in lags]
    assert_allclose(got, want, rtol=0, atol=1e-14)


def test_constant_record():
    rec = CountRecord(EventForm([], [3]), 50.0)
    assert np.all(corr.estimate_covariance(rec, 3.0, [0.0, 1.0, 20.0]).r_hat == 0.0)
    rec = CountRecord(GridForm(0.5, np.full(101, 3)), 50.0)
    assert np.all(corr.estimate_covariance(rec, 3.0, [0.0, 1.0, 20.0]).r_hat == 0.0)


def test_cosine_signal():
    # N(s) = rho + cos(s), represented piecewise-constant on a fine grid
    T, w = 1000.0, 1.0
    starts = np.arange(0.0, T, 1e-3)
    vals = 3.0 + np.cos(w * (starts + 5e-4))
    r0 = corr._event_cov(starts, vals, T, np.array([0.0, np.pi]), 3.0)
    assert abs(r0[0] - 0.5) <= 0.01
    assert abs(r0[1] + 0.5) <= 0.01


def test_grid_rectangle_rule():
    rng = np.random.default_rng(0)
    c = rng.poisson(4.0, 401)
    rec = CountRecord(GridForm(0.25, c), 100.0)
    for k in (0, 1, 7, 100):
        x = c[:-1].astype(float) - 4.0
        n = x.size
        want = np.dot(x[: n - k], x[k:]) / (n - k)
        got = corr.estimate_covariance(rec, 4.0, [k * 0.25]).r_hat[0]
        assert_allclose(got, want, rtol=1e-13)
    # lags snap to the nearest grid multiple
    curve = corr.estimate_covariance(rec, 4.0, [0.3, 0.6])
    assert curve.meta["snapped_lags"] == [0.25, 0.5]


@pytest.mark.parametrize("grid", [False, True])
def test_time_reversal(grid):
    ball = ObservationBall(2, 1.0)
    disp = Brownian(1.0) if grid else UniformMotion(Rayleigh(1.0))
    rec = simulate(SimConfig(ball, disp, 1.5, 80.0, seed=4, grid_dt=0.1 if grid else None))
    lags = np.linspace(0.0, 10.0, 11)
    a = corr.estimate_covariance(rec, 4.7, lags).r_hat
    b = corr.estimate_covariance(rec.time_reversed(), 4.7, lags).r_hat
    assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_lag_errors():
    rec = CountRecord(EventForm([1.0], [0, 1]), 5.0)
    for lags in ([-0.1], [5.0], [np.nan]):
        with pytest.raises(corr.LagError):
            corr.estimate_covariance(rec, 1.0, lags)
    with pytest.raises(ValueError):
        corr.estimate_covariance(rec, 0.0, [0.0])


def test_clip_positive():
    curve = corr.CorrelationCurve(np.array([0.0, 1.0, 2.0]), np.array([1.0, -0.2, 0.1]),
                                  np.array([1.0, -0.2, 0.1]))
    c1 = corr.clip_positive(curve)
    assert c1.h_hat.tolist() == [1.0, 0.0, 0.1] and c1.clipped
    c2 = corr.clip_positive(c1)
    assert np.array_equal(c2.h_hat, c1.h_hat)
    pos = corr.CorrelationCurve(np.array([0.0]), np.array([0.3]), np.array([0.3]))
    assert corr.clip_positive(pos).h_hat.tolist() == [0.3]


def test_curve_csv():
    rec = CountRecord(EventForm([1.0, 2.0], [1, 2, 0]), 4.0)
    text = corr.estimate_covariance(rec, 1.0, [0.0, 0.5]).to_csv_text()
    lines = text.splitlines()
    assert lines[0].startswith("# ") and lines[1] == "lag,r_hat,h_hat" and len(lines) == 4


def test_variance_diagnostic_formula():
    assert corr.variance_bound_diagnostic(100.0, 1.0, 5.0, 0.0) == 0.0
    a = corr.variance_bound_diagnostic(101.0, 1.0, 5.0, 1.0)
    b = corr.variance_bound_diagnostic(201.0, 1.0, 5.0, 1.0)
    assert_allclose(a, 2.0 * b)
    with pytest.raises(corr.LagError):
        corr.variance_bound_diagnostic(10.0, 10.0, 5.0, 1.0)


def test_variance_diagnostic_mc():
    ball = ObservationBall(1, 1.0)
    law = Degenerate(1.0)
    cfg = SimConfig(ball, UniformMotion(law), 2.5, 50.0, seed=17)
    t = 0.5
    r = replicate_covariances(cfg, [t], 2000)[:, 0]
    mse = np.mean((r - 5.0 * model.corr_uniform(t, ball, law)) ** 2)
    diag = corr.variance_bound_diagnostic(cfg.T, t, cfg.rho, model.memory_integral_uniform(ball, law))
    assert mse <= 20.0 * diag
