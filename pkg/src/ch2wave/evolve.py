"""Pseudospectral time evolution of the weak convolution form on a periodic domain.

The state is advanced in Fourier space with the classic four-stage Runge-Kutta
scheme. All products are quadratic and are formed on a 3/2-padded grid, so the
semi-discrete system is an exact Galerkin truncation (the Nyquist mode is kept
at zero). E is then conserved by the semi-discrete flow up to the time
integration error; F is conserved to spectral accuracy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from . import io
from .errors import ConfigurationError, DomainError, NumericalAbort
from .fourier import Dealiaser, Grid, helmholtz_inverse, helmholtz_symbol
from .functionals import FieldPair, energy_E, functional_F
from .params import Params
from .profile import Profile, build_profile

__all__ = [
    "GridState", "RunDiagnostics", "RunConfig", "helmholtz_inverse", "rhs", "evolve",
    "sigma0_bounds", "Sigma0Bounds", "check_bounds", "orbital_distance", "state_from_profile",
    "x_norm", "max_stable_dt", "perturb", "NON_FINITE", "SLOPE_EXCEEDED",
]

DEFAULT_BLOWUP = 1e4
CFL_FACTOR = 0.5
NON_FINITE = "non-finite field values"
SLOPE_EXCEEDED = "slope threshold exceeded"


def _is_pow2(n: int) -> bool:
    return n >= 8 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class GridState:
    """Fields (u, eta) on a periodic grid at time t; rho = 1 + eta is formed on demand."""

    grid: Grid
    u: np.ndarray
    eta: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not self.grid.periodic:
            raise DomainError("GridState needs a periodic grid")
        if not _is_pow2(self.grid.n):
            raise DomainError(f"grid size must be a power of two, got {self.grid.n}")
        u = np.asarray(self.u, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if u.shape != (self.grid.n,) or eta.shape != (self.grid.n,):
            raise DomainError("field lengths do not match the grid")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def from_functions(cls, length: float, n: int, u, eta, t: float = 0.0) -> "GridState":
        grid = Grid.periodic_box(length, n)
        return cls(grid, u(grid.x), eta(grid.x), t)

    @property
    def rho(self) -> np.ndarray:
        return 1.0 + self.eta

    def fields(self) -> FieldPair:
        return FieldPair(self.grid, self.u, self.eta)

    def u_x(self) -> np.ndarray:
        return np.fft.irfft(self.grid.ik * np.fft.rfft(self.u), n=self.grid.n)

    def reflected(self) -> "GridState":
        """(u(-x), eta(-x)); the grid is symmetric about x = 0."""
        idx = (-np.arange(self.grid.n)) % self.grid.n
        return GridState(self.grid, self.u[idx], self.eta[idx], self.t)

    def projected(self) -> "GridState":
        """Copy with the Nyquist mode removed (the space the stepper works in)."""
        return GridState(self.grid, _project(self.u, self.grid.n), _project(self.eta, self.grid.n), self.t)


def _project(f, n):
    fh = np.fft.rfft(f)
    fh[-1] = 0.0
    return np.fft.irfft(fh, n=n)


class _Stepper:
    """Right-hand side in Fourier variables with per-run work arrays."""

    def __init__(self, grid: Grid, p: Params):
        self.grid = grid
        self.sigma = p.sigma
        self.A = p.A
        self.ik = np.asarray(grid.ik)
        self.smooth = self.ik * helmholtz_symbol(grid)
        self.dealias = Dealiaser(grid.n)

    def __call__(self, uh, eh):
        s, A, d = self.sigma, self.A, self.dealias
        u = d.up(uh)
        ux = d.up(self.ik * uh)
        e = d.up(eh)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(e))):
            raise NumericalAbort(NON_FINITE)
        # the constant 1/2 of (1 + eta)^2 / 2 is annihilated by d/dx
        quad = d.down((0.5 * (3.0 - s)) * u * u + (0.5 * s) * ux * ux + 0.5 * e * e)
        g = -A * uh + eh + quad
        du = -self.smooth * g
        if s != 0.0:
            du = du - s * d.down(u * ux)
        de = -self.ik * (uh + d.down(e * u))
        du[-1] = 0.0
        de[-1] = 0.0
        return du, de


def rhs(state: GridState, p: Params) -> tuple[np.ndarray, np.ndarray]:
    """(du/dt, deta/dt) of the convolution form at ``state`` (physical space)."""
    step = _Stepper(state.grid, p)
    n = state.grid.n
    uh = np.fft.rfft(state.u)
    eh = np.fft.rfft(state.eta)
    uh[-1] = 0.0
    eh[-1] = 0.0
    du, de = step(uh, eh)
    return np.fft.irfft(du, n=n), np.fft.irfft(de, n=n)


def x_norm(u, eta, grid: Grid) -> float:
    """H^1 x L^2 norm sqrt(int u^2 + u_x^2 + eta^2) of periodic fields."""
    return math.sqrt(max(2.0 * energy_E(FieldPair(grid, u, eta)), 0.0))


def _spectral_sq_norm(fh, gh, grid: Grid) -> float:
    """int (f^2 + f_x^2 + g^2) from rfft coefficients (Parseval)."""
    n = grid.n
    w = np.full(fh.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    dens = (1.0 + grid.k ** 2) * np.abs(fh) ** 2 + np.abs(gh) ** 2
    return float(grid.h / n * np.sum(w * dens))


def state_from_profile(profile: Profile, n_points: int | None = None) -> GridState:
    """Periodize a profile onto the grid of length 2*half_length it was sampled on."""
    if n_points is not None and n_points != profile.n_points:
        profile = build_profile(profile.params, profile.branch, profile.half_length, n_points)
    grid = Grid.periodic_box(2.0 * profile.half_length, profile.n_points)
    if not np.allclose(grid.x, profile.x, rtol=0, atol=1e-9 * grid.h):
        raise DomainError("profile grid does not match a periodic box")
    return GridState(grid, np.array(profile.phi), np.array(profile.eta), 0.0)


def _check_same_grid(state: GridState, profile: Profile) -> None:
    g = state.grid
    if profile.n_points != g.n or abs(2.0 * profile.half_length - g.length) > 1e-9 * g.length:
        raise DomainError(
            f"grid mismatch: state has L={g.length}, N={g.n}; profile has "
            f"L={2 * profile.half_length}, N={profile.n_points}")


class _OrbitTarget:
    """Spectral data of a profile, reused for many distance evaluations."""

    def __init__(self, profile: Profile, grid: Grid):
        self.grid = grid
        self.ph = np.fft.rfft(profile.phi)
        self.eh = np.fft.rfft(profile.eta)

    def distance(self, uh, vh, s: float) -> float:
        phase = np.exp(-1j * self.grid.k * s)
        return math.sqrt(max(_spectral_sq_norm(uh - self.ph * phase, vh - self.eh * phase,
                                               self.grid), 0.0))

    def __call__(self, u, eta) -> float:
        g = self.grid
        uh = np.fft.rfft(u)
        vh = np.fft.rfft(eta)
        # <u, phi(. - s_m)>_X for every grid shift s_m = m h by one inverse transform
        cross = (1.0 + g.k ** 2) * uh * np.conj(self.ph) + vh * np.conj(self.eh)
        corr = np.fft.irfft(cross, n=g.n)
        m = int(np.argmax(corr))
        s0 = m * g.h
        if m > g.n // 2:
            s0 -= g.length
        f = lambda s: self.distance(uh, vh, s)  # noqa: E731
        lo, mid, hi = s0 - g.h, s0, s0 + g.h
        f_lo, f_mid, f_hi = f(lo), f(mid), f(hi)
        if f_mid < f_lo and f_mid < f_hi:
            res = optimize.minimize_scalar(f, bracket=(lo, mid, hi), method="golden",
                                           options={"xtol": 1e-12})
            return float(min(res.fun, f_mid))
        return float(min(f_lo, f_mid, f_hi))


def orbital_distance(state: GridState, profile: Profile) -> float:
    """inf over shifts s of ||(u - phi(.-s), eta - eta_phi(.-s))|| in H^1 x L^2.

    The best grid shift is found from a spectral cross-correlation and then
    refined below the grid spacing with a golden-section search on the
    directly evaluated distance.
    """
    _check_same_grid(state, profile)
    return _OrbitTarget(profile, state.grid)(state.u, state.eta)


@dataclass
class RunDiagnostics:
    """Sampled time series of one run."""

    times: list = field(default_factory=list)
    E_series: list = field(default_factory=list)
    F_series: list = field(default_factory=list)
    sup_ux: list = field(default_factory=list)
    inf_ux: list = field(default_factory=list)
    orbital_distance: list | None = None
    blowup_flag: bool = False
    bound_violation: bool = False
    blowup_time: float | None = None
    abort_reason: str | None = None
    dt: float = math.nan
    steps: int = 0

    def as_arrays(self) -> dict:
        cols = {
            "t": np.array(self.times), "E": np.array(self.E_series), "F": np.array(self.F_series),
            "sup_ux": np.array(self.sup_ux), "inf_ux": np.array(self.inf_ux),
        }
        if self.orbital_distance is not None:
            cols["orbital_distance"] = np.array(self.orbital_distance)
        return cols

    def drift(self, name: str = "E") -> float:
        """max |Q(t) - Q(0)| / |Q(0)| over the samples."""
        q = np.asarray(self.E_series if name == "E" else self.F_series)
        if q.size == 0:
            return math.nan
        return float(np.max(np.abs(q - q[0])) / abs(q[0]))

    def summary(self) -> dict:
        out = {
            "samples": len(self.times),
            "t_final": self.times[-1] if self.times else None,
            "dt": self.dt,
            "steps": self.steps,
            "E_drift": self.drift("E"),
            "F_drift": self.drift("F"),
            "max_abs_ux": max(max(self.sup_ux, default=0.0), -min(self.inf_ux, default=0.0)),
            "blowup_flag": self.blowup_flag,
            "blowup_time": self.blowup_time,
            "bound_violation": self.bound_violation,
            "abort_reason": self.abort_reason,
        }
        if self.orbital_distance is not None:
            out["max_orbital_distance"] = max(self.orbital_distance, default=math.nan)
        return out

    def to_csv(self, path):
        return io.write_csv(path, self.as_arrays())

    def to_json(self, path, extra: dict | None = None):
        data = self.summary()
        if extra:
            data.update(extra)
        return io.write_json(path, data)

    def to_svg(self, directory, stem: str = "run"):
        directory = Path(directory)
        cols = self.as_arrays()
        t = cols["t"]
        paths = [
            io.write_svg(directory / f"{stem}_E.svg", {"E": cols["E"]}, t, title="E(t)"),
            io.write_svg(directory / f"{stem}_F.svg", {"F": cols["F"]}, t, title="F(t)"),
            io.write_svg(directory / f"{stem}_ux.svg", {"sup u_x": cols["sup_ux"],
                                                       "inf u_x": cols["inf_ux"]}, t,
                         title="extrema of u_x"),
        ]
        if "orbital_distance" in cols:
            paths.append(io.write_svg(directory / f"{stem}_orbit.svg",
                                      {"distance": cols["orbital_distance"]}, t,
                                      title="orbital distance"))
        return paths


def max_stable_dt(state: GridState, p: Params, c_ref: float = 0.0) -> float:
    """Advective limit 0.5 h / max(|sigma u| + 1, c_ref)."""
    speed = max(float(np.max(np.abs(p.sigma * state.u))) + 1.0, abs(c_ref))
    return CFL_FACTOR * state.grid.h / speed


def evolve(state0: GridState, p: Params, T: float, dt: float, sample_interval: float | None = None,
           blowup_threshold: float = DEFAULT_BLOWUP, profile: Profile | None = None,
           c_ref: float | None = None, callback=None) -> tuple[GridState, RunDiagnostics]:
    """Advance ``state0`` to time ``state0.t + T`` with RK4.

    Parameters
    ----------
    state0 : GridState
    p : Params
        Only sigma and A enter the equations; |c| is the default reference
        speed in the step-size condition.
    T, dt : float
        Duration and requested step. The step is reduced slightly so that an
        integer number of steps lands on T.
    sample_interval : float, optional
        Diagnostics spacing in time (default: about 200 samples).
    blowup_threshold : float
        The run stops with ``blowup_flag`` once max|u_x| exceeds this value or
        a field becomes non-finite.
    profile : Profile, optional
        When given, the orbital distance to it is sampled as well.

    Returns
    -------
    (GridState, RunDiagnostics)
        The last state reached and the sampled diagnostics.
    """
    if not T > 0:
        raise ConfigurationError("T must be positive")
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    c_ref = abs(p.c) if c_ref is None else float(c_ref)
    limit = max_stable_dt(state0, p, c_ref)
    if dt > limit * (1 + 1e-12):
        raise ConfigurationError(f"dt = {dt:.6g} exceeds the step-size limit {limit:.6g}")
    n_steps = max(1, int(math.ceil(T / dt - 1e-9)))
    dt = T / n_steps
    if sample_interval is None:
        every = max(1, n_steps // 200)
    else:
        every = max(1, int(round(sample_interval / dt)))

    grid = state0.grid
    n = grid.n
    f = _Stepper(grid, p)
    target = None
    diag = RunDiagnostics(dt=dt)
    if profile is not None:
        _check_same_grid(state0, profile)
        target = _OrbitTarget(profile, grid)
        diag.orbital_distance = []

    uh = np.fft.rfft(state0.u)
    eh = np.fft.rfft(state0.eta)
    uh[-1] = 0.0
    eh[-1] = 0.0
    t0 = state0.t

    def record(t, u, e, ux):
        fields = FieldPair(grid, u, e)
        diag.times.append(t)
        diag.E_series.append(energy_E(fields))
        diag.F_series.append(functional_F(fields, p))
        diag.sup_ux.append(float(np.max(ux)))
        diag.inf_ux.append(float(np.min(ux)))
        if target is not None:
            diag.orbital_distance.append(target(u, e))
        if callback is not None:
            callback(t, u, e)

    def physical(uh_, eh_):
        return (np.fft.irfft(uh_, n=n), np.fft.irfft(eh_, n=n), np.fft.irfft(f.ik * uh_, n=n))

    u, e, ux = physical(uh, eh)
    record(t0, u, e, ux)
    step = 0
    t = t0
    for step in range(1, n_steps + 1):
        try:
            k1u, k1e = f(uh, eh)
            k2u, k2e = f(uh + 0.5 * dt * k1u, eh + 0.5 * dt * k1e)
            k3u, k3e = f(uh + 0.5 * dt * k2u, eh + 0.5 * dt * k2e)
            k4u, k4e = f(uh + dt * k3u, eh + dt * k3e)
            new_uh = uh + (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
            new_eh = eh + (dt / 6.0) * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
            u, e, ux = physical(new_uh, new_eh)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(e)) and np.all(np.isfinite(ux))):
                raise NumericalAbort(NON_FINITE)
        except NumericalAbort as exc:
            # keep the last finite state
            diag.blowup_flag = True
            diag.blowup_time = t0 + step * dt
            diag.abort_reason = str(exc)
            step -= 1
            break
        uh, eh = new_uh, new_eh
        t = t0 + step * dt
        if float(np.max(np.abs(ux))) > blowup_threshold:
            diag.blowup_flag = True
            diag.blowup_time = t
            diag.abort_reason = SLOPE_EXCEEDED
            record(t, u, e, ux)
            break
        speed = max(float(np.max(np.abs(p.sigma * u))) + 1.0, c_ref)
        if dt > CFL_FACTOR * grid.h / speed * (1 + 1e-12):
            diag.abort_reason = "step-size limit violated during the run"
            record(t, u, e, ux)
            break
        if step % every == 0 or step == n_steps:
            record(t, u, e, ux)
    diag.steps = step
    u, e, _ = physical(uh, eh)
    return GridState(grid, u, e, t0 + step * dt), diag


@dataclass(frozen=True)
class Sigma0Bounds:
    """Slope envelopes for sigma = 0 from the initial data."""

    C1: float
    C2: float
    sup_ux0: float
    inf_ux0: float
    sup_rho0_sq: float
    inf_rho0_sq: float

    def upper(self, t):
        return self.sup_ux0 + 0.5 * (self.sup_rho0_sq + self.C1 ** 2) * np.asarray(t)

    def lower(self, t):
        return self.inf_ux0 + 0.5 * (self.inf_rho0_sq - self.C2 ** 2) * np.asarray(t)

    def as_dict(self) -> dict:
        return {"C1": self.C1, "C2": self.C2, "sup_ux0": self.sup_ux0, "inf_ux0": self.inf_ux0,
                "sup_rho0_sq": self.sup_rho0_sq, "inf_rho0_sq": self.inf_rho0_sq}


def sigma0_bounds(state0: GridState, p: Params) -> Sigma0Bounds:
    """C1 = sqrt((3+A^2)/2) ||(u0, rho0-1)||, C2 = sqrt(2 + C1^2) and the linear envelopes."""
    if p.sigma != 0:
        raise DomainError("slope bounds hold for sigma = 0 only")
    norm = x_norm(state0.u, state0.eta, state0.grid)
    c1 = math.sqrt((3.0 + p.A ** 2) / 2.0) * norm
    c2 = math.sqrt(2.0 + c1 * c1)
    ux = state0.u_x()
    rho2 = state0.rho ** 2
    return Sigma0Bounds(c1, c2, float(ux.max()), float(ux.min()), float(rho2.max()), float(rho2.min()))


def check_bounds(diag: RunDiagnostics, bounds: Sigma0Bounds, slack: float) -> bool:
    """True when every sample of sup/inf u_x lies inside the envelopes widened by ``slack``."""
    t = np.asarray(diag.times) - diag.times[0]
    ok_hi = np.asarray(diag.sup_ux) <= bounds.upper(t) + slack
    ok_lo = np.asarray(diag.inf_ux) >= bounds.lower(t) - slack
    inside = bool(np.all(ok_hi) and np.all(ok_lo))
    diag.bound_violation = not inside
    return inside


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    """JSON run description.

    ``initial`` is a dict with ``type`` one of ``gaussian`` (u_amp, u_width,
    eta_amp, eta_width, center), ``odd-gaussian`` (amplitude a in
    u = -a x exp(-x^2/w^2)), ``solitary`` (c, branch, optional perturbation
    with amplitude, center, width) or ``zero``.
    """

    sigma: float
    A: float
    L: float | None = None
    N: int = 1024
    dt: float | None = None
    T: float = 1.0
    initial: dict = field(default_factory=lambda: {"type": "zero"})
    sample_interval: float | None = None
    blowup_threshold: float = DEFAULT_BLOWUP
    c: float = 0.0

    KEYS = ("sigma", "A", "L", "N", "dt", "T", "initial", "sample_interval", "blowup_threshold", "c")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = set(data) - set(cls.KEYS)
        if unknown:
            raise ConfigurationError(f"unknown run config keys: {sorted(unknown)}")
        for key in ("sigma", "A"):
            if key not in data:
                raise ConfigurationError(f"run config needs {key!r}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        if not _is_pow2(int(self.N)):
            raise ConfigurationError(f"N must be a power of two >= 8, got {self.N}")
        if not self.T > 0:
            raise ConfigurationError("T must be positive")
        kind = self.initial.get("type")
        if kind not in ("gaussian", "odd-gaussian", "solitary", "zero"):
            raise ConfigurationError(f"unknown initial condition type {kind!r}")
        if kind != "solitary" and not (self.L and self.L > 0):
            raise ConfigurationError("L must be given and positive")
        if self.dt is not None and not self.dt > 0:
            raise ConfigurationError("dt must be positive")

    def params(self) -> Params:
        c = self.initial.get("c", self.c) if self.initial.get("type") == "solitary" else self.c
        return Params(float(self.sigma), float(self.A), float(c))

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.KEYS}

    def build(self) -> tuple[GridState, Params, Profile | None, float]:
        """Initial state, parameters, target profile (solitary runs) and step."""
        p = self.params()
        ic = dict(self.initial)
        kind = ic.pop("type")
        profile = None
        if kind == "solitary":
            half = None if self.L is None else 0.5 * float(self.L)
            profile = build_profile(p, ic.get("branch"), half, int(self.N))
            state = state_from_profile(profile)
            pert = ic.get("perturbation")
            if pert:
                state = perturb(state, pert.get("amplitude", 0.0), pert.get("center", 0.0),
                                pert.get("width", 1.0))
        else:
            grid = Grid.periodic_box(float(self.L), int(self.N))
            x = grid.x
            if kind == "gaussian":
                x0 = ic.get("center", 0.0)
                u = ic.get("u_amp", 0.0) * np.exp(-((x - x0) / ic.get("u_width", 1.0)) ** 2)
                e = ic.get("eta_amp", 0.0) * np.exp(-((x - x0) / ic.get("eta_width", 1.0)) ** 2)
            elif kind == "odd-gaussian":
                w = ic.get("width", 1.0)
                u = -ic.get("amplitude", 1.0) * x * np.exp(-(x / w) ** 2)
                e = ic.get("eta_amp", 0.0) * np.exp(-(x / w) ** 2)
            else:
                u = np.zeros_like(x)
                e = np.zeros_like(x)
            state = GridState(grid, u, e)
        c_ref = abs(p.c)
        dt = self.dt if self.dt is not None else 0.9 * max_stable_dt(state, p, c_ref)
        return state.projected(), p, profile, dt


def perturb(state: GridState, amplitude: float, center: float = 0.0, width: float = 1.0) -> GridState:
    """Add a Gaussian bump to u (eta unchanged)."""
    bump = amplitude * np.exp(-((state.grid.x - center) / width) ** 2)
    return GridState(state.grid, state.u + bump, state.eta.copy(), state.t)
