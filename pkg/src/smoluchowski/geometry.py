"""Ball observation region: volumes, covariogram and capsule (reach set) volume."""

from dataclasses import dataclass
import math

import numpy as np

from . import specfun

MAX_DIM = 10


def unit_ball_volume(k):
    """Volume of the unit ball in R^k (V_0 = 1)."""
    if k < 0:
        raise ValueError("dimension must be nonnegative")
    return math.pi ** (k / 2.0) / math.gamma(k / 2.0 + 1.0)


@dataclass(frozen=True)
class ObservationBall:
    """Closed Euclidean ball of radius ``radius`` centred at the origin of R^dim."""

    dim: int
    radius: float

    def __post_init__(self):
        if int(self.dim) != self.dim or not 1 <= self.dim <= MAX_DIM:
            raise ValueError(f"dim must be an integer in [1, {MAX_DIM}], got {self.dim}")
        if not self.radius > 0 or not math.isfinite(self.radius):
            raise ValueError(f"radius must be positive, got {self.radius}")

    @property
    def volume(self):
        return ball_volume(self)

    @property
    def half_beta(self):
        """B((d+1)/2, 1/2), the normaliser shared by every covariogram formula."""
        return float(specfun.beta_fn((self.dim + 1) / 2.0, 0.5))


def ball_volume(ball):
    return unit_ball_volume(ball.dim) * ball.radius ** ball.dim


def covariogram(ball, displacement_norm):
    """vol{B intersected with B shifted by x}, as a function of |x|.

    Uses the spherical cap formula
    g(x) = vol(B) I((d+1)/2, 1/2; 1 - |x|^2 / (4 r^2)) for |x| <= 2r.
    """
    s = np.asarray(displacement_norm, dtype=float)
    if np.any(s < 0):
        raise ValueError("displacement norm must be nonnegative")
    arg = np.clip(1.0 - (s / (2.0 * ball.radius)) ** 2, 0.0, 1.0)
    val = ball_volume(ball) * np.asarray(specfun.reg_inc_beta((ball.dim + 1) / 2.0, 0.5, arg))
    val = np.where(s <= 2.0 * ball.radius, val, 0.0)
    return val[()] if val.ndim == 0 else val


def capsule_volume(ball, segment_length):
    """Volume of the Minkowski sum of B with a segment of the given length."""
    L = np.asarray(segment_length, dtype=float)
    if np.any(L < 0):
        raise ValueError("segment length must be nonnegative")
    d, r = ball.dim, ball.radius
    val = unit_ball_volume(d) * r ** d + unit_ball_volume(d - 1) * r ** (d - 1) * L
    return val[()] if np.ndim(val) == 0 else val
