"""Counts of moving particles in a ball: simulation, correlation and estimation."""

from .geometry import ObservationBall, ball_volume, covariogram
from .model import (Brownian, Degenerate, HalfNormal, Rayleigh, UniformInterval, UniformMotion,
                    correlation, parse_speed_law)
from .records import CountRecord, EventForm, GridForm
from .reports import EstimateReport
from .simulate import SimConfig, simulate

__all__ = [
    "ObservationBall", "ball_volume", "covariogram",
    "Brownian", "Degenerate", "HalfNormal", "Rayleigh", "UniformInterval", "UniformMotion",
    "correlation", "parse_speed_law",
    "CountRecord", "EventForm", "GridForm", "EstimateReport", "SimConfig", "simulate",
]
