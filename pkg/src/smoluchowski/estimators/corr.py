"""Empirical covariance and correlation of a count record."""

from dataclasses import dataclass, field, replace
import json

import numba
import numpy as np

from ..records import CountRecord


class LagError(ValueError):
    """Requested lag outside [0, T)."""


@dataclass(frozen=True)
class CorrelationCurve:
    lags: np.ndarray
    r_hat: np.ndarray
    h_hat: np.ndarray
    clipped: bool = False
    meta: dict = field(default_factory=dict)

    def to_csv_text(self):
        lines = ["# " + json.dumps({"clipped": self.clipped, "meta": self.meta}, sort_keys=True),
                 "lag,r_hat,h_hat"]
        lines.extend(f"{t:.17g},{r:.17g},{h:.17g}" for t, r, h in zip(self.lags, self.r_hat, self.h_hat))
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv_text())


@numba.njit(cache=True)
def _event_cov(starts, vals, T, lags, rho):
    npc = starts.size
    out = np.empty(lags.size)
    for q in range(lags.size):
        lag = lags[q]
        L = T - lag
        # piece containing s + lag at s = 0
        j = np.searchsorted(starts, lag, side="right") - 1
        i = 0
        s = 0.0
        acc = 0.0
        while s < L:
            end_i = starts[i + 1] if i + 1 < npc else T
            end_j = (starts[j + 1] if j + 1 < npc else T) - lag
            e = min(end_i, end_j, L)
            acc += (e - s) * (vals[i] - rho) * (vals[j] - rho)
            s = e
            if e >= end_i and i + 1 < npc:
                i += 1
            if e >= end_j and j + 1 < npc:
                j += 1
        out[q] = acc / L
    return out


@numba.njit(cache=True)
def _grid_cov(counts, ks, rho):
    n = counts.size - 1
    out = np.empty(ks.size)
    for q in range(ks.size):
        k = ks[q]
        acc = 0.0
        for i in range(n - k):
            acc += (counts[i] - rho) * (counts[i + k] - rho)
        out[q] = acc / (n - k)
    return out


def grid_lag_index(record, lags):
    """Nearest grid multiple of each lag (grid records only)."""
    return np.rint(np.asarray(lags, dtype=float) / record.form.dt).astype(np.int64)


def estimate_covariance(record, rho, lags):
    """R_hat(t) = (1/(T-t)) int_0^{T-t} (N(s) - rho)(N(s+t) - rho) ds and H_hat = R_hat / rho.

    Event records are integrated exactly; grid records use the rectangle rule
    with each lag snapped to the nearest grid multiple.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    T = record.T
    if np.any(lags < 0) or np.any(lags >= T) or not np.all(np.isfinite(lags)):
        raise LagError("lags must lie in [0, T)")
    meta = {"T": T, "rho": rho, "form": record.form.name}
    if record.is_event:
        starts = np.concatenate([[0.0], record.form.jump_times])
        r_hat = _event_cov(starts, record.form.values.astype(float), T, lags, float(rho))
    else:
        ks = grid_lag_index(record, lags)
        n = record.form.counts.size - 1
        if np.any(ks >= n):
            raise LagError("lag snaps onto the end of the grid")
        r_hat = _grid_cov(record.form.counts.astype(float), ks, float(rho))
        meta["snapped_lags"] = (ks * record.form.dt).tolist()
        meta["dt"] = record.form.dt
    return CorrelationCurve(lags, r_hat, r_hat / rho, False, meta)


def clip_positive(curve):
    """Positive part of the correlation estimate."""
    return replace(curve, h_hat=np.maximum(curve.h_hat, 0.0), clipped=True)


def variance_bound_diagnostic(T, t, rho, memory_integral):
    """Structural factor (rho^2 + rho) / (T - t) * int H of the mean squared error bound."""
    if not 0 <= t < T:
        raise LagError("need 0 <= t < T")
    if memory_integral == 0:
        return 0.0
    return (rho * rho + rho) / (T - t) * memory_integral
