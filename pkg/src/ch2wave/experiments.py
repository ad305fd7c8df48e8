"""Parameter sweeps and numerical experiments driven by a JSON specification.

Every experiment returns an :class:`ExperimentResult` holding table columns
and a summary dict. Tasks fan out over a thread pool whose size is capped by
the ``CH2WAVE_THREADS`` environment variable; results are gathered in input
order so the emitted CSV does not depend on scheduling.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigurationError, DomainError
from .evolve import (GridState, check_bounds, evolve, max_stable_dt, orbital_distance, perturb,
                     sigma0_bounds, state_from_profile, x_norm)
from .functionals import dc_scan
from .params import Params, classify, peakon_speed
from .profile import build_profile
from .spectral import (assemble_Hc, assemble_Kc, kernel_residual, liouville_eigenvalues,
                       spectral_half_length, spectrum_report)

KINDS = ("classification-atlas", "dc-scan", "spectrum-table", "stability-run",
         "sigma0-global", "breaking-probe")
DEFAULT_EPSILONS = (0.005, 0.01, 0.02)


def _grid(value, name: str) -> list[float]:
    """A list of floats from a list, a scalar or {"linspace": [start, stop, num]}."""
    if value is None:
        return []
    if isinstance(value, dict):
        if "linspace" in value:
            a, b, n = value["linspace"]
            return [float(v) for v in np.linspace(float(a), float(b), int(n))]
        if "values" in value:
            return [float(v) for v in value["values"]]
        raise ConfigurationError(f"cannot read grid {name!r}: {value!r}")
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(value)]


def worker_count(n_tasks: int) -> int:
    cap = os.environ.get("CH2WAVE_THREADS")
    try:
        limit = int(cap) if cap else (os.cpu_count() or 1)
    except ValueError:
        raise ConfigurationError(f"CH2WAVE_THREADS must be an integer, got {cap!r}")
    return max(1, min(limit, n_tasks))


def _map(fn, items):
    items = list(items)
    n = worker_count(len(items))
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass
class ExperimentSpec:
    kind: str
    sigma: list = field(default_factory=list)
    A: list = field(default_factory=list)
    c: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        if "kind" not in data:
            raise ConfigurationError("experiment spec needs a 'kind'")
        unknown = set(data) - {"kind", "sigma", "A", "c", "settings", "output", "seed"}
        if unknown:
            raise ConfigurationError(f"unknown experiment keys: {sorted(unknown)}")
        spec = cls(
            kind=data["kind"],
            sigma=_grid(data.get("sigma"), "sigma"),
            A=_grid(data.get("A"), "A"),
            c=_grid(data.get("c"), "c"),
            settings=dict(data.get("settings", {})),
            output=dict(data.get("output", {})),
            seed=int(data.get("seed", 0)),
        )
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        need = {"classification-atlas": ("sigma", "A", "c"), "dc-scan": ("sigma", "A", "c"),
                "spectrum-table": ("sigma", "A", "c"), "stability-run": ("sigma", "A", "c"),
                "sigma0-global": ("A",), "breaking-probe": ("sigma", "A")}[self.kind]
        for name in need:
            if not getattr(self, name):
                raise ConfigurationError(f"{self.kind} needs a non-empty {name!r} grid")
        if any(a <= 0 for a in self.A):
            raise ConfigurationError("A values must be positive")
        s = self.settings
        if "N" in s and (int(s["N"]) < 8 or int(s["N"]) & (int(s["N"]) - 1)):
            raise ConfigurationError("settings.N must be a power of two >= 8")
        for key in ("T", "dt", "L", "half_length"):
            if key in s and s[key] is not None and not float(s[key]) > 0:
                raise ConfigurationError(f"settings.{key} must be positive")
        if self.kind == "stability-run" and any(v > 1 for v in self.sigma):
            raise ConfigurationError("stability runs are defined for sigma <= 1")

    def as_dict(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma, "A": self.A, "c": self.c,
                "settings": self.settings, "output": self.output, "seed": self.seed}


@dataclass
class ExperimentResult:
    kind: str
    columns: dict
    summary: dict
    extra_tables: dict = field(default_factory=dict)

    def write(self, out_dir, stem: str | None = None) -> list[Path]:
        out_dir = Path(out_dir)
        stem = stem or self.kind
        paths = [io.write_csv(out_dir / f"{stem}.csv", self.columns),
                 io.write_json(out_dir / f"{stem}_summary.json", self.summary)]
        for name, cols in self.extra_tables.items():
            paths.append(io.write_csv(out_dir / f"{stem}_{name}.csv", cols))
        return paths


def _columns(rows: list[dict]) -> dict:
    if not rows:
        return {}
    names = list(rows[0])
    return {n: [r[n] for r in rows] for n in names}


# ---------------------------------------------------------------------------
# classification atlas


def _atlas_row(args):
    (s, A, c), branch, fit = args
    p = Params(s, A, c)
    wc = classify(p, branch)
    row = {"sigma": s, "A": A, "c": c, "branch": branch, "class": wc.kind.value,
           "crest_value": math.nan if wc.crest_value is None else wc.crest_value,
           "crest_kind": "" if wc.crest_kind is None else wc.crest_kind.value,
           "decay_fit": math.nan, "residual": math.nan}
    if fit and wc.exists:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            pr = build_profile(p, branch if s < 0 else None, n_points=int(fit))
        row["decay_fit"] = pr.fit_decay_rate()
        row["residual"] = pr.max_residual(4) / float(np.max(np.abs(pr.phi)))
    return row


def expected_boundaries(sigma: float, A: float) -> list[float]:
    """Speeds at which the wave class changes along a row of fixed sigma, A."""
    p = Params(sigma, A, 1.0)
    a1, a2 = p.roots
    out = [a1, a2]
    if sigma > 1:
        out += [peakon_speed(sigma, A, 1), peakon_speed(sigma, A, -1)]
    return sorted(out)


def locate_boundaries(cs, classes) -> list[tuple[float, float]]:
    """Grid cells (c_i, c_{i+1}) across which the class label changes."""
    return [(cs[i], cs[i + 1]) for i in range(len(cs) - 1) if classes[i] != classes[i + 1]]


def check_atlas_boundaries(spec_sigma, spec_A, cs, table) -> list[dict]:
    """For each (sigma, A) row compare class transitions with the closed-form thresholds.

    A transition cell is matched when a threshold lies inside it or on one of
    its endpoints; every threshold inside the scanned range must be matched.
    """
    cs = sorted(cs)
    report = []
    smooth = [i for i, b in enumerate(table["branch"]) if b == "smooth"]
    for s, A in product(spec_sigma, spec_A):
        idx = [i for i in smooth if table["sigma"][i] == s and table["A"][i] == A]
        idx.sort(key=lambda i: table["c"][i])
        labels = [table["class"][i] for i in idx]
        cells = locate_boundaries([table["c"][i] for i in idx], labels)
        expect = [b for b in expected_boundaries(s, A) if cs[0] < b < cs[-1]]
        h = max(np.diff(cs)) if len(cs) > 1 else 0.0
        matched = all(any(lo - 1e-12 <= b <= hi + 1e-12 for lo, hi in cells) for b in expect)
        explained = all(any(lo - 1e-12 <= b <= hi + 1e-12 for b in expect) for lo, hi in cells)
        report.append({"sigma": s, "A": A, "expected": expect, "cells": cells,
                       "cell_width": h, "ok": bool(matched and explained)})
    return report


def run_classification_atlas(spec: ExperimentSpec) -> ExperimentResult:
    fit = spec.settings.get("fit_profiles", False)
    fit = int(spec.settings.get("N", 4096)) if fit else 0
    tasks = []
    for s, A, c in product(spec.sigma, spec.A, spec.c):
        tasks.append(((s, A, c), "smooth", fit))
        if s < 0:
            tasks.append(((s, A, c), "singular", fit))
    rows = _map(_atlas_row, tasks)
    table = _columns(rows)
    checks = check_atlas_boundaries(spec.sigma, spec.A, spec.c, table)
    counts = {}
    for k in table["class"]:
        counts[k] = counts.get(k, 0) + 1
    summary = {"spec": spec.as_dict(), "rows": len(rows), "class_counts": counts,
               "boundaries_ok": all(r["ok"] for r in checks),
               "boundary_checks": checks}
    return ExperimentResult(spec.kind, table, summary)


# ---------------------------------------------------------------------------
# d(c) scans and spectral tables


def run_dc_scan(spec: ExperimentSpec) -> ExperimentResult:
    n = int(spec.settings.get("N", 4096))
    pairs = list(product(spec.sigma, spec.A))

    def one(pair):
        s, A = pair
        scan = dc_scan(s, A, spec.c, n_points=n)
        scan["sigma"] = [s] * len(scan["c"])
        scan["A"] = [A] * len(scan["c"])
        return scan

    scans = _map(one, pairs)
    names = ["sigma", "A", "c", "d", "d_prime", "d_second_integral", "d_second_fd"]
    table = {k: [v for sc in scans for v in sc[k]] for k in names}
    di = np.array(table["d_second_integral"])
    df = np.array(table["d_second_fd"])
    rel = np.abs(di - df) / np.abs(di)
    summary = {"spec": spec.as_dict(), "rows": len(table["c"]),
               "all_convex": bool(np.all(di > 0)),
               "max_route_disagreement": float(np.nanmax(rel)) if rel.size else math.nan}
    return ExperimentResult(spec.kind, table, summary)


def spectrum_row(p: Params, n_points: int, half_length: float | None = None) -> dict:
    half = spectral_half_length(p) if half_length is None else float(half_length)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        pr = build_profile(p, "smooth", half_length=half, n_points=n_points)
    rh = spectrum_report(assemble_Hc(pr), pr)
    rk = spectrum_report(assemble_Kc(pr), pr)
    lv = liouville_eigenvalues(pr, k=2)
    return {
        "sigma": p.sigma, "A": p.A, "c": p.c, "N": n_points, "half_length": half,
        "H_n_negative": rh.n_negative, "H_n_near_zero": rh.n_near_zero,
        "H_lambda_min": rh.lambda_min, "H_lambda_near_zero": rh.lambda_near_zero,
        "H_kernel_alignment": rh.kernel_alignment, "H_tol_zero": rh.tol_zero,
        "H_edge_estimate": rh.essential_edge_estimate, "H_edge": rh.essential_edge_theoretical,
        "K_n_negative": rk.n_negative, "K_lambda_min": rk.lambda_min,
        "K_lambda_near_zero": rk.lambda_near_zero, "K_kernel_alignment": rk.kernel_alignment,
        "K_kernel_residual_over_h2": kernel_residual(pr) / pr.h ** 2,
        "liouville_lambda_0": float(lv[0]), "liouville_lambda_1": float(lv[1]),
    }


def run_spectrum_table(spec: ExperimentSpec) -> ExperimentResult:
    n = int(spec.settings.get("N", 2048))
    half = spec.settings.get("half_length")
    pts = [Params(s, A, c) for s, A, c in product(spec.sigma, spec.A, spec.c)]
    pts = [p for p in pts if classify(p, "smooth").is_smooth]
    if not pts:
        raise DomainError("no smooth parameter points in the spectrum table grid")
    rows = _map(lambda p: spectrum_row(p, n, half), pts)
    table = _columns(rows)
    summary = {"spec": spec.as_dict(), "rows": len(rows),
               "all_one_negative": all(v == 1 for v in table["H_n_negative"]),
               "min_kernel_alignment": min(table["H_kernel_alignment"])}
    return ExperimentResult(spec.kind, table, summary)


# ---------------------------------------------------------------------------
# time-dependent experiments


def _solitary_setup(p: Params, settings: dict):
    n = int(settings.get("N", 1024))
    L = settings.get("L")
    half = None if L is None else 0.5 * float(L)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        profile = build_profile(p, "smooth", half_length=half, n_points=n)
    state = state_from_profile(profile).projected()
    dt = settings.get("dt")
    dt = 0.9 * max_stable_dt(state, p, abs(p.c)) if dt is None else float(dt)
    return profile, state, dt


def stability_case(p: Params, eps: float, settings: dict, seed: int = 0) -> dict:
    """Perturb u by a Gaussian bump of amplitude eps and track the orbital distance."""
    profile, state, dt = _solitary_setup(p, settings)
    width = float(settings.get("width", 1.0))
    center = float(settings.get("center", 0.0))
    if settings.get("random_center"):
        rng = np.random.default_rng(seed)
        center = float(rng.uniform(-2.0, 2.0))
    T = float(settings.get("T", 20.0 / abs(p.c)))
    start = perturb(state, eps, center, width).projected()
    final, diag = evolve(start, p, T, dt, sample_interval=settings.get("sample_interval"),
                         profile=profile)
    od = np.asarray(diag.orbital_distance)
    norm = x_norm(state.u, state.eta, state.grid)
    return {
        "sigma": p.sigma, "A": p.A, "c": p.c, "epsilon": eps, "center": center,
        "initial_distance": float(od[0]), "max_distance": float(od.max()),
        "final_distance": float(od[-1]),
        "ratio": float(od.max() / od[0]) if od[0] > 0 else math.nan,
        "relative_max_distance": float(od.max() / norm),
        "E_drift": diag.drift("E"), "F_drift": diag.drift("F"),
        "blowup_flag": diag.blowup_flag, "dt": diag.dt, "T": T,
    }


def run_stability_experiment(spec: ExperimentSpec) -> ExperimentResult:
    eps_list = _grid(spec.settings.get("epsilons", list(DEFAULT_EPSILONS)), "epsilons")
    cases = []
    for i, (s, A, c) in enumerate(product(spec.sigma, spec.A, spec.c)):
        p = Params(s, A, c)
        if not classify(p, "smooth").is_smooth:
            raise DomainError(f"stability runs need smooth waves; {p} is {classify(p).kind.value}")
        for eps in eps_list:
            cases.append((p, eps, spec.seed + i))
    rows = _map(lambda t: stability_case(t[0], t[1], spec.settings, t[2]), cases)
    table = _columns(rows)
    # monotonicity in eps at fixed parameters
    monotone = True
    for s, A, c in product(spec.sigma, spec.A, spec.c):
        sel = [r for r in rows if (r["sigma"], r["A"], r["c"]) == (s, A, c)]
        sel.sort(key=lambda r: r["epsilon"])
        d = [r["max_distance"] for r in sel]
        monotone &= all(b >= a for a, b in zip(d, d[1:]))
    summary = {"spec": spec.as_dict(), "runs": len(rows),
               "max_ratio": float(np.nanmax(table["ratio"])) if rows else math.nan,
               "monotone_in_epsilon": bool(monotone)}
    return ExperimentResult(spec.kind, table, summary)


def sigma0_case(A: float, settings: dict) -> tuple[dict, dict]:
    L = float(settings.get("L", 40.0))
    n = int(settings.get("N", 512))
    T = float(settings.get("T", 10.0))
    ua = float(settings.get("u_amp", 0.5))
    ea = float(settings.get("eta_amp", 0.1))
    w = float(settings.get("width", 1.0))
    p = Params(0.0, A, 0.0)
    state = GridState.from_functions(L, n, lambda x: ua * np.exp(-(x / w) ** 2),
                                     lambda x: ea * np.exp(-(x / w) ** 2)).projected()
    dt = settings.get("dt")
    dt = 0.5 * max_stable_dt(state, p) if dt is None else float(dt)
    bounds = sigma0_bounds(state, p)
    _, diag = evolve(state, p, T, dt, sample_interval=settings.get("sample_interval", 0.05),
                     blowup_threshold=float(settings.get("blowup_threshold", 1e4)))
    slack = state.grid.h ** 2
    inside = check_bounds(diag, bounds, slack)
    t = np.asarray(diag.times)
    row = {"A": A, "C1": bounds.C1, "C2": bounds.C2, "within_bounds": inside,
           "blowup_flag": diag.blowup_flag,
           "min_upper_gap": float(np.min(bounds.upper(t) - np.asarray(diag.sup_ux))),
           "min_lower_gap": float(np.min(np.asarray(diag.inf_ux) - bounds.lower(t))),
           "E_drift": diag.drift("E"), "h": state.grid.h, "dt": diag.dt}
    series = {"A": [A] * len(t), "t": t, "sup_ux": diag.sup_ux, "inf_ux": diag.inf_ux,
              "upper": bounds.upper(t), "lower": bounds.lower(t)}
    return row, series


def run_sigma0_global(spec: ExperimentSpec) -> ExperimentResult:
    results = _map(lambda A: sigma0_case(A, spec.settings), spec.A)
    rows = [r for r, _ in results]
    series = {k: [v for _, s in results for v in s[k]]
              for k in ("A", "t", "sup_ux", "inf_ux", "upper", "lower")}
    table = _columns(rows)
    summary = {"spec": spec.as_dict(), "all_within_bounds": all(r["within_bounds"] for r in rows),
               "any_blowup": any(r["blowup_flag"] for r in rows)}
    return ExperimentResult(spec.kind, table, summary, {"series": series})


def breaking_case(sigma: float, A: float, settings: dict, dt_factor: float = 1.0) -> dict:
    L = float(settings.get("L", 20.0))
    n = int(settings.get("N", 1024))
    a = float(settings.get("amplitude", 3.0))
    eta_amp = float(settings.get("eta_amp", -1.0))
    threshold = float(settings.get("blowup_threshold", 4.0 * a))
    T = float(settings.get("T_control" if sigma == 0 else "T", 10.0 if sigma == 0 else 3.0))
    p = Params(sigma, A, 0.0)
    state = GridState.from_functions(L, n, lambda x: -a * x * np.exp(-x * x),
                                     lambda x: eta_amp * np.exp(-x * x)).projected()
    dt = settings.get("dt")
    dt = 0.5 * max_stable_dt(state, p) if dt is None else float(dt)
    _, diag = evolve(state, p, T, dt * dt_factor, blowup_threshold=threshold)
    return {"flag": diag.blowup_flag, "time": diag.blowup_time, "dt": diag.dt,
            "min_ux": float(min(diag.inf_ux)), "threshold": threshold, "T": T}


def run_breaking_probe(spec: ExperimentSpec) -> ExperimentResult:
    """Evolve steep odd data across sigma and record when the slope threshold is crossed.

    The density is made to vanish where the slope is steepest (eta_amp = -1
    by default): as long as rho stays away from zero the ratio u_x / rho is
    pushed upward along the characteristic and the slope saturates.
    """
    sigmas = sorted(set(spec.sigma) | {0.0})
    cases = [(s, A) for s in sigmas for A in spec.A]

    def one(case):
        s, A = case
        full = breaking_case(s, A, spec.settings, 1.0)
        half = breaking_case(s, A, spec.settings, 0.5)
        change = (abs(full["time"] - half["time"]) / full["time"]
                  if full["flag"] and half["flag"] else math.nan)
        return {"sigma": s, "A": A, "control": s == 0.0, "blowup_flag": full["flag"],
                "blowup_time": math.nan if full["time"] is None else full["time"],
                "blowup_time_half_dt": math.nan if half["time"] is None else half["time"],
                "relative_change": change, "min_ux": full["min_ux"],
                "threshold": full["threshold"], "T": full["T"], "dt": full["dt"]}

    rows = _map(one, cases)
    table = _columns(rows)
    summary = {"spec": spec.as_dict(),
               "control_flagged": any(r["blowup_flag"] for r in rows if r["control"]),
               "flagged_sigmas": [r["sigma"] for r in rows if r["blowup_flag"]]}
    return ExperimentResult(spec.kind, table, summary)


RUNNERS = {
    "classification-atlas": run_classification_atlas,
    "dc-scan": run_dc_scan,
    "spectrum-table": run_spectrum_table,
    "stability-run": run_stability_experiment,
    "sigma0-global": run_sigma0_global,
    "breaking-probe": run_breaking_probe,
}


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    return RUNNERS[spec.kind](spec)
