"""Scalar estimate reports with JSON serialization."""

from dataclasses import dataclass, field, asdict
import json
import math

SCHEMA = 1


def _clean(x):
    # JSON has no inf/nan; keep them readable as strings
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _clean(x.item())
    return x


@dataclass
class EstimateReport:
    estimator: str
    estimate: float
    units: str
    tuning: dict = field(default_factory=dict)
    T: float = None
    rho: float = None
    seed: int = None
    replicate: int = None
    diagnostics: dict = field(default_factory=dict)
    failed: bool = False

    def to_dict(self):
        d = _clean(asdict(self))
        d["schema"] = SCHEMA
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k != "schema"}
        if isinstance(d.get("estimate"), str):
            d["estimate"] = float(d["estimate"])
        return cls(**d)


def record_provenance(record):
    """(seed, replicate) stored in a simulated record, if any."""
    cfg = record.meta.get("config", {}) if record.meta else {}
    return cfg.get("seed"), cfg.get("replicate")
