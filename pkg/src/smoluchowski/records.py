"""Count records: one realization of N(t) on [0, T], plus CSV round-trip."""

from dataclasses import dataclass, field
import json

import numpy as np


@dataclass(frozen=True)
class EventForm:
    """Piecewise-constant path: ``values[0]`` on [0, jump_times[0]), ``values[i]`` from jump_times[i-1]."""

    jump_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        vals = np.asarray(self.values, dtype=np.int64)
        if vals.shape != (jt.size + 1,):
            raise ValueError("EventForm needs exactly one more value than jump times")
        if np.any(np.diff(jt) <= 0):
            raise ValueError("jump times must be strictly increasing")
        if np.any(vals < 0):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", vals)

    name = "event"


@dataclass(frozen=True)
class GridForm:
    """Counts observed at times 0, dt, 2 dt, ..., n dt = T."""

    dt: float
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("GridForm needs at least two counts")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "counts", c)

    name = "grid"


@dataclass(frozen=True)
class CountRecord:
    form: object
    T: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if isinstance(self.form, EventForm):
            jt = self.form.jump_times
            if jt.size and (jt[0] <= 0 or jt[-1] > self.T):
                raise ValueError("jump times must lie in (0, T]")
        elif isinstance(self.form, GridForm):
            n = self.form.counts.size - 1
            if abs(n * self.form.dt - self.T) > 1e-9 * self.T:
                raise ValueError("grid does not span [0, T]")
        else:
            raise TypeError("form must be EventForm or GridForm")

    @property
    def is_event(self):
        return isinstance(self.form, EventForm)

    def value_at(self, t):
        """N(t); for grid records the count at the nearest grid time at or before t."""
        t = np.asarray(t, dtype=float)
        if self.is_event:
            idx = np.searchsorted(self.form.jump_times, t, side="right")
            return self.form.values[idx]
        k = np.clip(np.floor(t / self.form.dt + 1e-9).astype(np.int64), 0, self.form.counts.size - 1)
        return self.form.counts[k]

    def pieces(self):
        """(starts, lengths, values) of the constant pieces covering [0, T]."""
        if self.is_event:
            starts = np.concatenate([[0.0], self.form.jump_times])
            ends = np.concatenate([self.form.jump_times, [self.T]])
            return starts, ends - starts, self.form.values
        c = self.form.counts[:-1]
        dt = self.form.dt
        return np.arange(c.size) * dt, np.full(c.size, dt), c

    def time_reversed(self):
        """Record of s -> N(T - s)."""
        if self.is_event:
            jt = self.T - self.form.jump_times[::-1]
            vals = self.form.values[::-1]
            if jt.size and jt[0] <= 0:
                # a jump at T leaves a zero-length final piece
                jt, vals = jt[1:], vals[1:]
            return CountRecord(EventForm(jt, vals), self.T, dict(self.meta))
        # grid counts are the rectangle-rule path c_k on [k dt, (k+1) dt); reverse that path
        # and close it with N(0), the reversed value at time T
        c = self.form.counts
        return CountRecord(GridForm(self.form.dt, np.concatenate([c[-2::-1], c[:1]])), self.T, dict(self.meta))

    # --- csv ------------------------------------------------------------

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv_text())

    def to_csv_text(self):
        head = {"form": self.form.name, "T": self.T, "meta": self.meta}
        if not self.is_event:
            head["dt"] = self.form.dt
        lines = ["# " + json.dumps(head, sort_keys=True), "time,count"]
        if self.is_event:
            times = np.concatenate([[0.0], self.form.jump_times])
            vals = self.form.values
        else:
            times = np.arange(self.form.counts.size) * self.form.dt
            vals = self.form.counts
        lines.extend(f"{t:.17g},{int(v)}" for t, v in zip(times, vals))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            return cls.from_csv_text(fh.read())

    @classmethod
    def from_csv_text(cls, text):
        head = None
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                if head is None:
                    head = json.loads(line[1:])
                continue
            if not line.strip() or line.startswith("time"):
                continue
            t, v = line.split(",")
            rows.append((float(t), int(v)))
        if head is None:
            raise ValueError("missing '#' JSON header")
        times = np.array([r[0] for r in rows])
        vals = np.array([r[1] for r in rows], dtype=np.int64)
        T = float(head["T"])
        if head["form"] == "event":
            form = EventForm(times[1:], vals)
        elif head["form"] == "grid":
            form = GridForm(float(head["dt"]), vals)
        else:
            raise ValueError(f"unknown record form {head['form']!r}")
        return cls(form, T, head.get("meta", {}))


def occupancy_integral(record):
    """int_0^T N(s) ds (exact for event records, rectangle rule for grid records)."""
    _, lengths, values = record.pieces()
    return float(np.dot(lengths, values))


def empirical_rho(record):
    """(1/T) int_0^T N(s) ds; diagnostic only, estimators take rho as given."""
    return occupancy_integral(record) / record.T
