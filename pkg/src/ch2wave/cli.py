"""Command-line front end.

Exit codes: 0 success, 1 domain or configuration error, 2 numerical abort
(including a blow-up flag in a run expected to stay regular), 3 I/O error.
Every failure is also reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .errors import Ch2WaveError, NumericalAbort, QuadratureError
from .evolve import SLOPE_EXCEEDED, RunConfig, evolve
from .experiments import ExperimentSpec, run_experiment
from .functionals import d_prime, d_second, d_value
from .params import A_LIMIT, Params, classify
from .profile import build_profile
from .spectral import (assemble_Hc, assemble_Kc, kernel_residual, liouville_eigenvalues,
                       spectral_half_length, spectrum_report)

log = logging.getLogger("ch2wave")

EXIT_OK, EXIT_DOMAIN, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

EXPERIMENT_KINDS = {
    "stability": "stability-run",
    "atlas": "classification-atlas",
    "sigma0-global": "sigma0-global",
    "breaking-probe": "breaking-probe",
}

# settings used when an experiment subcommand runs without a config file
EXPERIMENT_DEFAULTS = {
    "stability-run": {"sigma": [0.5], "A": [0.1], "c": [1.5]},
    "classification-atlas": {"sigma": {"linspace": [-2, 4, 60]}, "A": [0.1],
                             "c": {"linspace": [-5, 5, 40]}},
    "sigma0-global": {"A": [0.1]},
    "breaking-probe": {"sigma": [0.5, 1, 2], "A": [0.1]},
    "dc-scan": {"sigma": [0.5], "A": [0.1], "c": {"linspace": [1.0, 2.9, 10]}},
}


class Abort(Exception):
    """Numerical abort raised by a finished run whose outcome was flagged."""


def shear_strength(text: str) -> float:
    """Float, or ``0+`` / ``limit`` for the A -> 0 limit."""
    if text.strip().lower() in ("0+", "limit"):
        return A_LIMIT
    return float(text)


def _compact(obj) -> str:
    return json.dumps(io.jsonable(obj), separators=(",", ":"), allow_nan=True)


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must hold a JSON object")
    return data


def _scalars(args, cfg: dict) -> dict:
    """Config values overridden by any of --sigma, --A, --c."""
    out = dict(cfg)
    for key in ("sigma", "A", "c"):
        val = getattr(args, key)
        if val is not None:
            out[key] = val
    return out


def _params(args, cfg: dict) -> Params:
    vals = _scalars(args, cfg)
    missing = [k for k in ("sigma", "A", "c") if k not in vals]
    if missing:
        raise ValueError(f"missing parameters: {', '.join(missing)}")
    A = vals["A"]
    A = shear_strength(A) if isinstance(A, str) else float(A)
    return Params(float(vals["sigma"]), A, float(vals["c"]))


def _emit(obj) -> None:
    print(_compact(obj))


# ---------------------------------------------------------------------------
# subcommands


def cmd_classify(args, cfg):
    p = _params(args, cfg)
    branch = cfg.get("branch", args.branch or "smooth")
    if args.dry_run:
        return _emit({"params": p.as_dict(), "branch": branch})
    wc = classify(p, branch)
    _emit({**wc.as_dict(), **p.as_dict(), "branch": branch})


def cmd_profile(args, cfg):
    p = _params(args, cfg)
    branch = cfg.get("branch", args.branch)
    n = int(cfg.get("N", args.n_points or 4096))
    half = cfg.get("half_length")
    if args.dry_run:
        return _emit({"params": p.as_dict(), "branch": branch, "N": n, "half_length": half})
    pr = build_profile(p, branch, half, n)
    out = Path(args.output_dir)
    pr.to_csv(out / "profile.csv")
    pr.to_json(out / "profile.json")
    io.write_svg(out / "profile.svg", {"phi": pr.phi, "eta": pr.eta}, pr.x, title="profile")
    _emit(pr.metadata())


def cmd_dc_scan(args, cfg):
    if not any(k in cfg for k in ("sigma", "A", "c")) and args.c is not None:
        p = _params(args, cfg)
        if args.dry_run:
            return _emit({"params": p.as_dict()})
        row = {**p.as_dict(), "d": d_value(p), "d_prime": d_prime(p),
               "d_second_fd": d_second(p, "finite-difference")}
        try:
            row["d_second_integral"] = d_second(p, "integral")
        except QuadratureError as exc:
            row["d_second_integral"] = None
            row["note"] = str(exc)
        io.write_json(Path(args.output_dir) / "dc_point.json", row)
        return _emit(row)
    return _run_experiment("dc-scan", args, cfg)


def cmd_spectrum(args, cfg):
    p = _params(args, cfg)
    n = int(cfg.get("N", args.n_points or 2048))
    half = float(cfg.get("half_length", spectral_half_length(p)))
    if args.dry_run:
        return _emit({"params": p.as_dict(), "N": n, "half_length": half})
    with warnings.catch_warnings():
        # 25 decay lengths leave |phi| near 1e-11 at the ends, just short of the tail cutoff
        warnings.simplefilter("ignore", RuntimeWarning)
        pr = build_profile(p, "smooth", half, n)
    out = Path(args.output_dir)
    reports = {}
    for name, M in (("Hc", assemble_Hc(pr)), ("Kc", assemble_Kc(pr))):
        rep = spectrum_report(M, pr)
        rep.to_json(out / f"spectrum_{name}.json")
        reports[name] = rep.as_dict()
    reports["Kc_kernel_residual"] = kernel_residual(pr)
    reports["liouville_eigenvalues"] = list(liouville_eigenvalues(pr))
    io.write_json(out / "spectrum.json", reports)
    _emit({k: reports["Hc"][k] for k in ("n_negative", "n_near_zero", "lambda_min",
                                         "lambda_near_zero", "kernel_alignment")})


def cmd_evolve(args, cfg):
    cfg = _scalars(args, cfg)
    require = bool(cfg.pop("require_regular", True))
    run = RunConfig.from_dict(cfg)
    if args.dry_run:
        state, p, _, dt = run.build()
        return _emit({**run.as_dict(), "dt": dt, "h": state.grid.h})
    state, p, profile, dt = run.build()
    final, diag = evolve(state, p, run.T, dt, run.sample_interval, run.blowup_threshold,
                         profile=profile)
    out = Path(args.output_dir)
    diag.to_csv(out / "run.csv")
    diag.to_json(out / "run.json", {"config": run.as_dict()})
    diag.to_svg(out)
    io.write_csv(out / "final_state.csv", {"x": final.grid.x, "u": final.u, "eta": final.eta})
    _emit(diag.summary())
    if diag.abort_reason and diag.abort_reason != SLOPE_EXCEEDED:
        raise NumericalAbort(diag.abort_reason)
    if require and diag.blowup_flag:
        raise Abort(f"blow-up flag raised at t={diag.blowup_time}")


def _run_experiment(kind, args, cfg):
    data = dict(EXPERIMENT_DEFAULTS.get(kind, {}))
    data.update(cfg)
    data["kind"] = kind
    for key in ("sigma", "A", "c"):
        val = getattr(args, key)
        if val is not None:
            data[key] = [val]
    spec = ExperimentSpec.from_dict(data)
    if args.dry_run:
        return _emit(spec.as_dict())
    res = run_experiment(spec)
    out = Path(args.output_dir) if args.output_dir else Path(spec.output.get("dir", "."))
    res.write(out, spec.output.get("stem"))
    if kind == "sigma0-global":
        s = res.extra_tables["series"]
        t = np.asarray(s["t"])
        first = np.asarray(s["A"]) == s["A"][0]
        io.write_svg(out / "sigma0_bounds.svg",
                     {k: np.asarray(s[k])[first] for k in ("sup_ux", "inf_ux", "upper", "lower")},
                     t[first], title="slope extrema and bounds")
    _emit({k: v for k, v in res.summary.items() if k not in ("spec", "boundary_checks")})
    flagged = {
        "stability-run": lambda: any(res.columns["blowup_flag"]),
        "sigma0-global": lambda: res.summary["any_blowup"] or not res.summary["all_within_bounds"],
        "breaking-probe": lambda: res.summary["control_flagged"],
    }.get(kind)
    if flagged and flagged():
        raise Abort(f"{kind}: a run expected to stay regular was flagged")


def _experiment_cmd(name):
    return lambda args, cfg: _run_experiment(EXPERIMENT_KINDS[name], args, cfg)


COMMANDS = {
    "classify": cmd_classify,
    "profile": cmd_profile,
    "dc-scan": cmd_dc_scan,
    "spectrum": cmd_spectrum,
    "evolve": cmd_evolve,
    **{name: _experiment_cmd(name) for name in EXPERIMENT_KINDS},
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--sigma", type=float, help="convection parameter")
    common.add_argument("--A", type=shear_strength,
                        help="shear strength (> 0); 0+ selects the A -> 0 limit")
    common.add_argument("--c", type=float, help="wave speed")
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--output-dir", default=None, help="directory for emitted files")
    common.add_argument("--branch", choices=("smooth", "singular"), default=None)
    common.add_argument("--n-points", type=int, default=None)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--dry-run", action="store_true",
                        help="validate the configuration and print resolved settings")
    parser = argparse.ArgumentParser(prog="ch2wave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _fail(code: int, exc: BaseException) -> int:
    print(_compact({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=max(logging.DEBUG, logging.WARNING - 10 * args.verbose),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        if args.output_dir is None and args.command not in EXPERIMENT_KINDS:
            args.output_dir = "."
        if args.output_dir is not None and not args.dry_run:
            Path(args.output_dir).mkdir(parents=True, exist_ok=True)
        log.debug("%s with config %s", args.command, cfg)
        COMMANDS[args.command](args, cfg)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    except (NumericalAbort, QuadratureError, Abort) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (Ch2WaveError, ValueError) as exc:
        return _fail(EXIT_DOMAIN, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
