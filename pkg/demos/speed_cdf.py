"""Speed cdf at x0 = 1: noise-free functional, then a few simulated records."""

import math

import numpy as np

from smoluchowski import ObservationBall, SimConfig, UniformMotion, simulate
from smoluchowski.estimators import cdf
from smoluchowski.model import Rayleigh, corr_uniform

ball, law, T, x0 = ObservationBall(1, 1.0), Rayleigh(1.0), 3200.0, 1.0
h = cdf.default_bandwidth_cdf(T, rho=5.0, ball=ball, x0=x0)
kern = cdf.make_flat_kernel(3)
line = cdf.MellinLine.for_horizon(T)
exact, _, _ = cdf.cdf_functional(lambda t: corr_uniform(t, ball, law), T, x0, h, ball, kern, line)
print(f"h={h:.4f}  true H gives {exact:.6f}  F(x0)={1 - math.exp(-0.5):.6f}")

est = []
for rep in range(10):
    cfg = SimConfig(ball, UniformMotion(law), 2.5, T, seed=3, replicate=rep)
    est.append(cdf.estimate_cdf_at(simulate(cfg), cfg.rho, ball, x0, h, kern, line).estimate)
print("estimates", np.round(est, 3), "mean", round(float(np.mean(est)), 3))
