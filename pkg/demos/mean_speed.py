"""Mean speed from one uniform-motion record, against the true E|v|."""

import math

from smoluchowski import ObservationBall, SimConfig, UniformMotion, simulate
from smoluchowski.estimators import speed
from smoluchowski.model import Rayleigh

ball = ObservationBall(1, 1.0)
for T in (200.0, 800.0, 3200.0, 12800.0):
    cfg = SimConfig(ball, UniformMotion(Rayleigh(1.0)), 2.5, T, seed=1)
    rep = speed.estimate_mean_speed(simulate(cfg), cfg.rho, ball)
    print(f"T={T:>7.0f}  h={rep.tuning['h']:.4f}  mu_hat={rep.estimate:.4f}  true={math.sqrt(math.pi / 2):.4f}")
