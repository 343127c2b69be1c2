"""Command line interface.

Option precedence: built-in defaults < ``--config`` JSON file < explicit flags.
Config keys are the long flag names without dashes, with inner dashes turned
into underscores (``speed_law``, ``alpha_mem``, ``sigma_bar``, ...).

Exit codes: 0 success, 2 usage error, 3 numerical failure.
"""

import argparse
import json
import math
import sys
import warnings

import numpy as np

from . import geometry, verify
from .estimators import cdf, corr, diffusion, speed
from .geometry import ObservationBall
from .mc import ESTIMATORS, McStudySpec, run_study, study_csv_text
from .model import Brownian, UniformMotion, parse_speed_law
from .quadrature import QuadratureError
from .records import CountRecord
from .simulate import CapacityError, SimConfig, simulate

NUMERICAL_ERRORS = (ArithmeticError, QuadratureError, cdf.TruncationError,
                    cdf.KernelConditioningError, CapacityError)

DEFAULTS = {
    "model": "uniform", "dim": 1, "radius": 1.0, "lambda": None, "T": None,
    "speed_law": "rayleigh:1", "sigma": 1.0, "dt": None, "seed": 0, "rho": None,
    "lags": None, "h": None, "x0": 1.0, "beta": 1.0, "A": 1.0, "M": 1.0, "alpha_mem": 1.0,
    "m": None, "alpha": None, "b": None, "sigma_bar": None, "replicates": 1, "jobs": 1,
    "out": None, "force_rho": False, "estimator": "mean-speed", "level": "quick",
    "psi_out": None, "clamp": False,
}


class UsageError(ValueError):
    pass


# --- parser ----------------------------------------------------------------


def _sim_flags(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--model", choices=("uniform", "brownian"))
    g.add_argument("--dim", type=int)
    g.add_argument("--radius", type=float)
    g.add_argument("--lambda", dest="lambda", type=float, help="particle intensity")
    g.add_argument("--rho", type=float, help="mean count lambda vol(B); alternative to --lambda")
    g.add_argument("--T", dest="T", type=float)
    g.add_argument("--speed-law", dest="speed_law",
                   help="degenerate:v | rayleigh:s | halfnormal:s | uniform:a,b")
    g.add_argument("--sigma", type=float)
    g.add_argument("--dt", type=float, help="grid step for Brownian records")
    g.add_argument("--seed", type=int)


def _record_flags(p):
    p.add_argument("record", help="count record CSV")
    p.add_argument("--rho", type=float)
    p.add_argument("--force-rho", dest="force_rho", action="store_true", default=None)
    p.add_argument("--dim", type=int, help="only needed if the record has no config header")
    p.add_argument("--radius", type=float, help="only needed if the record has no config header")


def _cdf_flags(p):
    p.add_argument("--h", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--A", dest="A", type=float)
    p.add_argument("--M", dest="M", type=float)
    p.add_argument("--alpha-mem", dest="alpha_mem", type=float)
    p.add_argument("--m", type=int, help="vanishing moment order of the flat kernel")


def build_parser():
    top = argparse.ArgumentParser(prog="smoluchowski", description=__doc__.splitlines()[0])
    top.add_argument("--config", help="JSON file of option values")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a count record")
    _sim_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("corr", help="empirical covariance and correlation")
    _record_flags(p)
    p.add_argument("--lags", help="comma list, or start:stop:n for n evenly spaced lags")
    p.add_argument("--out")

    p = sub.add_parser("mean-speed", help="mean speed estimate (uniform motion)")
    _record_flags(p)
    p.add_argument("--h", type=float)
    p.add_argument("--out")

    p = sub.add_parser("cdf", help="speed cdf at x0 (uniform motion)")
    _record_flags(p)
    _cdf_flags(p)
    p.add_argument("--clamp", action="store_true", default=None)
    p.add_argument("--psi-out", dest="psi_out", help="write the inversion weights t,psi as CSV")
    p.add_argument("--out")

    p = sub.add_parser("diffusion", help="diffusion coefficient (Brownian motion)")
    _record_flags(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--sigma-bar", dest="sigma_bar", type=float,
                   help="prior upper bound on sigma; selects the short-lag estimator (d = 1)")
    p.add_argument("--out")

    p = sub.add_parser("mc", help="Monte Carlo study of an estimator")
    _sim_flags(p)
    p.add_argument("--estimator", choices=ESTIMATORS)
    _cdf_flags(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--sigma-bar", dest="sigma_bar", type=float)
    p.add_argument("--replicates", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")

    p = sub.add_parser("verify", help="consistency checks against the closed-form model")
    p.add_argument("--level", choices=tuple(verify.LEVELS))
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    return top


def resolve_options(ns):
    """Merge defaults, the --config file and explicit flags."""
    opts = dict(DEFAULTS)
    if ns.config:
        with open(ns.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise UsageError("--config must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        opts.update(loaded)
    opts.update({k: v for k, v in vars(ns).items() if v is not None and k not in ("config", "command")})
    return opts


# --- helpers ---------------------------------------------------------------


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _sim_config(o):
    ball = ObservationBall(int(o["dim"]), float(o["radius"]))
    if o["model"] == "uniform":
        disp = UniformMotion(parse_speed_law(o["speed_law"]))
    else:
        disp = Brownian(float(o["sigma"]))
    if o["T"] is None:
        raise UsageError("--T is required")
    if o["lambda"] is not None:
        lam = float(o["lambda"])
        if o["rho"] is not None and not math.isclose(o["rho"], lam * geometry.ball_volume(ball), rel_tol=1e-12):
            raise UsageError("--lambda and --rho disagree")
    elif o["rho"] is not None:
        lam = float(o["rho"]) / geometry.ball_volume(ball)
    else:
        raise UsageError("--lambda or --rho is required")
    return SimConfig(ball, disp, lam, float(o["T"]), grid_dt=o["dt"], seed=int(o["seed"]))


def _load_record(o):
    """(record, rho, ball) with the header taking precedence over flags."""
    rec = CountRecord.from_csv(o["record"])
    cfg = rec.meta.get("config") if rec.meta else None
    if cfg:
        sc = SimConfig.from_dict(cfg)
        ball, head_rho = sc.ball, sc.rho
    else:
        if o["rho"] is None:
            raise UsageError("record has no config header: --rho is required")
        ball, head_rho = ObservationBall(int(o["dim"]), float(o["radius"])), None
    rho = o["rho"] if o["rho"] is not None else head_rho
    if head_rho is not None and o["rho"] is not None and not math.isclose(o["rho"], head_rho, rel_tol=1e-9):
        if o["force_rho"]:
            warnings.warn(f"--rho {o['rho']} overrides the record header value {head_rho}")
        else:
            warnings.warn(f"--rho {o['rho']} disagrees with the record header; using {head_rho}")
            rho = head_rho
    return rec, float(rho), ball


def _parse_lags(text, T):
    if text is None:
        return np.linspace(0.0, 0.25 * T, 26)
    if ":" in text:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n))
    return np.array([float(v) for v in text.split(",")])


def _tuning(o):
    keys = ("h", "x0", "beta", "A", "M", "alpha_mem", "m", "alpha", "b", "sigma_bar")
    return {k: o[k] for k in keys if o[k] is not None}


# --- commands --------------------------------------------------------------


def cli_simulate(o):
    _emit(simulate(_sim_config(o)).to_csv_text(), o["out"])


def cli_corr(o):
    rec, rho, _ = _load_record(o)
    _emit(corr.estimate_covariance(rec, rho, _parse_lags(o["lags"], rec.T)).to_csv_text(), o["out"])


def cli_mean_speed(o):
    rec, rho, ball = _load_record(o)
    _emit(speed.estimate_mean_speed(rec, rho, ball, h=o["h"]).to_json() + "\n", o["out"])


def cli_cdf(o):
    rec, rho, ball = _load_record(o)
    x0 = float(o["x0"])
    h = o["h"] or cdf.default_bandwidth_cdf(rec.T, o["beta"], o["A"], o["M"], o["alpha_mem"], rho, ball, x0)
    kern = cdf.make_flat_kernel(o["m"] or cdf.default_kernel_order(o["beta"]))
    line = cdf.MellinLine.for_horizon(rec.T)
    rep = cdf.estimate_cdf_at(rec, rho, ball, x0, h, kern, line, clamp=bool(o["clamp"]))
    rep.tuning.update({"beta": o["beta"], "A": o["A"], "M": o["M"], "alpha_mem": o["alpha_mem"]})
    _emit(rep.to_json() + "\n", o["out"])
    if o["psi_out"]:
        _, t, psi = cdf.cdf_functional(np.zeros_like, rec.T, x0, h, ball, kern, line)
        lines = ["t,psi"] + [f"{a:.17g},{b:.17g}" for a, b in zip(t, psi)]
        _emit("\n".join(lines) + "\n", o["psi_out"])


def cli_diffusion(o):
    rec, rho, ball = _load_record(o)
    if o["sigma_bar"] is not None:
        rep = diffusion.estimate_sigma_d1(rec, rho, ball, float(o["sigma_bar"]))
    else:
        rep = diffusion.estimate_sigma2(rec, rho, ball, o["alpha"], o["b"])
    _emit(rep.to_json() + "\n", o["out"])


def cli_mc(o):
    spec = McStudySpec(_sim_config(o), o["estimator"], _tuning(o), int(o["replicates"]), int(o["jobs"]))
    _emit(study_csv_text(run_study(spec)), o["out"])


def cli_verify(o):
    results = verify.verify_suite(o["level"], int(o["seed"]), int(o["jobs"]))
    _emit("".join(r.line() + "\n" for r in results), o["out"])
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "simulate": cli_simulate, "corr": cli_corr, "mean-speed": cli_mean_speed, "cdf": cli_cdf,
    "diffusion": cli_diffusion, "mc": cli_mc, "verify": cli_verify,
}


def _format_warning(message, category, filename, lineno, line=None):
    return f"warning: {message}\n"


def main(argv=None):
    warnings.formatwarning = _format_warning
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        opts = resolve_options(ns)
        code = COMMANDS[ns.command](opts)
    except NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
