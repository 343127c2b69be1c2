"""Seeded Monte Carlo replication across processes."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import math
import os

import numpy as np

from .estimators import cdf, diffusion, speed
from .estimators.corr import estimate_covariance
from .simulate import SimConfig, simulate

ESTIMATORS = ("mean-speed", "cdf", "sigma2", "sigma-tau")


def max_jobs(requested):
    """Requested worker count, capped by SMOLU_THREADS and the CPU count."""
    cap = os.environ.get("SMOLU_THREADS")
    n = max(1, int(requested))
    if cap:
        n = min(n, max(1, int(cap)))
    return min(n, os.cpu_count() or 1) if n > 1 else 1


def _map(fn, items, jobs):
    jobs = max_jobs(jobs)
    if jobs == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def replicate_configs(base, replicates):
    return [replace(base, replicate=i) for i in range(replicates)]


def map_replicates(fn, base, replicates, jobs=1):
    """[fn(config_i) for i < replicates]; config_i uses stream (seed, i). Order is by replicate."""
    return _map(fn, replicate_configs(base, replicates), jobs)


@dataclass(frozen=True)
class McStudySpec:
    base: SimConfig
    estimator: str
    tuning: dict = field(default_factory=dict)
    replicates: int = 1
    jobs: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")


def apply_estimator(name, record, rho, ball, tuning):
    tuning = {k: v for k, v in tuning.items() if v is not None}
    if name == "mean-speed":
        return speed.estimate_mean_speed(record, rho, ball, h=tuning.get("h"))
    if name == "cdf":
        x0 = tuning.get("x0", 1.0)
        beta = tuning.get("beta", 1.0)
        h = tuning.get("h") or cdf.default_bandwidth_cdf(
            record.T, beta, tuning.get("A", 1.0), tuning.get("M", 1.0), tuning.get("alpha_mem", 1.0),
            rho, ball, x0)
        kern = _kernel(int(tuning.get("m") or cdf.default_kernel_order(beta)))
        return cdf.estimate_cdf_at(record, rho, ball, x0, h, kern)
    if name == "sigma2":
        return diffusion.estimate_sigma2(record, rho, ball, tuning.get("alpha"), tuning.get("b"))
    if name == "sigma-tau":
        if "sigma_bar" not in tuning:
            raise ValueError("sigma-tau needs sigma_bar")
        return diffusion.estimate_sigma_d1(record, rho, ball, tuning["sigma_bar"])
    raise ValueError(f"unknown estimator {name!r}")


_KERNELS = {}


def _kernel(m):
    if m not in _KERNELS:
        _KERNELS[m] = cdf.make_flat_kernel(m)
    return _KERNELS[m]


class _StudyTask:
    def __init__(self, spec):
        self.spec = spec

    def __call__(self, config):
        rec = simulate(config)
        rep = apply_estimator(self.spec.estimator, rec, config.rho, config.ball, self.spec.tuning)
        rep.seed, rep.replicate = config.seed, config.replicate
        return rep


def run_study(spec):
    """EstimateReports for replicates 0..R-1, in replicate order."""
    return map_replicates(_StudyTask(spec), spec.base, spec.replicates, spec.jobs)


def study_csv_text(reports):
    lines = ["replicate,seed,estimate,failed"]
    for r in sorted(reports, key=lambda r: r.replicate):
        lines.append(f"{r.replicate},{r.seed},{r.estimate:.17g},{int(bool(r.failed))}")
    return "\n".join(lines) + "\n"


class _CovTask:
    def __init__(self, lags):
        self.lags = np.asarray(lags, dtype=float)

    def __call__(self, config):
        return estimate_covariance(simulate(config), config.rho, self.lags).r_hat


def replicate_covariances(base, lags, replicates, jobs=1):
    """(replicates, len(lags)) array of R_hat from independent replicates."""
    return np.array(map_replicates(_CovTask(lags), base, replicates, jobs))


class _ValueTask:
    def __init__(self, times):
        self.times = np.asarray(times, dtype=float)

    def __call__(self, config):
        return simulate(config).value_at(self.times)


def replicate_values(base, times, replicates, jobs=1):
    """(replicates, len(times)) array of N(t)."""
    return np.array(map_replicates(_ValueTask(times), base, replicates, jobs))


def mean_and_se(x, axis=0):
    x = np.asarray(x, dtype=float)
    return x.mean(axis=axis), x.std(axis=axis, ddof=1) / math.sqrt(x.shape[axis])
