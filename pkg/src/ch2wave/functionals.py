"""Conserved functionals E and F and the scalar d(c) = cE - F along the solitary-wave family.

The second derivative of d is available through two independent routes: a
finite difference of d'(c) = E(phi_c) computed on constructed profiles, and an
amplitude integral obtained by changing variables y = c - phi in d'(c).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import io
from .errors import DomainError, QuadratureError, UnsupportedClassError
from .fourier import Grid, ddx
from .params import Params, classify
from .profile import DEFAULT_POINTS, Profile, build_profile, default_half_length

FD_STEP = 1e-3


@dataclass(frozen=True, eq=False)
class FieldPair:
    """Velocity ``u`` and elevation ``eta`` sampled on ``grid``."""

    grid: Grid
    u: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if u.shape != (self.grid.n,) or eta.shape != (self.grid.n,):
            raise DomainError(
                f"field lengths {u.shape}, {eta.shape} do not match grid size {self.grid.n}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def from_profile(cls, profile: Profile) -> "FieldPair":
        """Profile fields on the truncated line they were sampled on."""
        grid = Grid(float(profile.x[0]), profile.h, profile.n_points, periodic=False)
        return cls(grid, profile.phi, profile.eta)


def derivative(f, grid: Grid) -> np.ndarray:
    """d/dx: spectral on periodic grids, fourth-order centered differences otherwise.

    On a truncated line the field is extended by zeros beyond both ends.
    """
    f = np.asarray(f, dtype=float)
    if grid.periodic:
        return ddx(f, grid)
    g = np.concatenate([[0.0, 0.0], f, [0.0, 0.0]])
    return (-g[4:] + 8.0 * g[3:-1] - 8.0 * g[1:-3] + g[:-4]) / (12.0 * grid.h)


def integrate_grid(f, grid: Grid) -> float:
    """Trapezoid rule (plain Riemann sum on a periodic grid)."""
    f = np.asarray(f, dtype=float)
    total = math.fsum(f)
    if not grid.periodic:
        total -= 0.5 * (f[0] + f[-1])
    return grid.h * total


def energy_E(f: FieldPair) -> float:
    """E = 1/2 int (u^2 + u_x^2 + eta^2) dx."""
    ux = derivative(f.u, f.grid)
    return 0.5 * integrate_grid(f.u ** 2 + ux ** 2 + f.eta ** 2, f.grid)


def functional_F(f: FieldPair, p: Params) -> float:
    """F = 1/2 int (u^3 + sigma u u_x^2 + 2 u eta + u eta^2 - A u^2) dx."""
    u, eta = f.u, f.eta
    ux = derivative(u, f.grid)
    dens = u ** 3 + p.sigma * u * ux ** 2 + 2.0 * u * eta + u * eta ** 2 - p.A * u ** 2
    return 0.5 * integrate_grid(dens, f.grid)


def _side(p: Params) -> float:
    """+1 on the right-moving branch c > A1, -1 on the left-moving one."""
    return 1.0 if p.c > 0 else -1.0


def _smooth_profile(p: Params, half_length=None, n_points=DEFAULT_POINTS) -> Profile:
    wc = classify(p, "smooth")
    if not wc.exists:
        raise DomainError(f"no solitary wave for sigma={p.sigma}, A={p.A}, c={p.c}")
    if not wc.is_smooth:
        raise UnsupportedClassError(f"d(c) is defined here for smooth waves, got {wc.kind.value}")
    return build_profile(p, "smooth", half_length=half_length, n_points=n_points)


def d_value(p: Params, half_length=None, n_points=DEFAULT_POINTS) -> float:
    """d(c) = cE - F for c > A1 and F - cE for c < A2, on the constructed profile."""
    f = FieldPair.from_profile(_smooth_profile(p, half_length, n_points))
    return _side(p) * (p.c * energy_E(f) - functional_F(f, p))


def d_prime(p: Params, half_length=None, n_points=DEFAULT_POINTS, method: str = "grid") -> float:
    """d'(c), equal to E(phi_c) for c > A1 and to -E(phi_c) for c < A2.

    ``method="grid"`` evaluates E on the sampled profile; ``method="integral"``
    integrates over the amplitude y = c - phi instead.
    """
    if method == "integral":
        return _side(p) * energy_integral(p)
    if method != "grid":
        raise DomainError(f"unknown method {method!r}")
    f = FieldPair.from_profile(_smooth_profile(p, half_length, n_points))
    return _side(p) * energy_E(f)


def _normalized(p: Params) -> tuple[float, float, float, float]:
    """(sigma, c, A1, A2) after reflecting a left-moving wave to c > 0."""
    a1, a2 = p.roots
    if p.c > 0:
        return p.sigma, p.c, a1, a2
    return p.sigma, -p.c, -a2, -a1


def d_second_integrands(y, p: Params) -> tuple[np.ndarray, np.ndarray]:
    """I1(y), I2(y) with d''(c) = int_{A1}^{c} (I1 + I2) dy.

    Left-moving waves are evaluated on the reflected parameters, for which
    the same formulas hold.
    """
    s, c, a1, a2 = _normalized(p)
    y = np.asarray(y, dtype=float)
    D = (1.0 - s) * c + s * y
    P = (y - a1) * (y - a2)
    i1 = np.sqrt(P / (y * D)) * (D + y) / (2.0 * D)
    i2 = (y * y + 1.0) * (D + 0.5 * (1.0 - s) * (c - y)) / (y * np.sqrt(y * P * D))
    return i1, i2


def _quad(g, lo: float, hi: float, what: str) -> float:
    val, err, info, *msg = integrate.quad(g, lo, hi, epsabs=0.0, epsrel=1e-12, limit=400,
                                          full_output=1)
    if msg and not (abs(err) <= 1e-9 * abs(val)):
        raise QuadratureError(f"{what}: quadrature did not converge ({msg[0].strip()})")
    return float(val)


def _check_smooth(p: Params) -> None:
    wc = classify(p, "smooth")
    if not wc.exists:
        raise DomainError(f"no solitary wave for sigma={p.sigma}, A={p.A}, c={p.c}")
    if not wc.is_smooth:
        raise UnsupportedClassError(f"expected a smooth wave, got {wc.kind.value}")


def energy_integral(p: Params) -> float:
    """E(phi_c) as an integral over y = c - phi, with y = A1 + s^2 at the crest end."""
    _check_smooth(p)
    s_, c, a1, a2 = _normalized(p)

    def g(t):
        y = a1 + t * t
        D = (1.0 - s_) * c + s_ * y
        # 2t / sqrt(R) stays finite as t -> 0
        sqrt_r = t * np.sqrt((y - a2) / (y * D))
        inv = 2.0 * np.sqrt(y * D / (y - a2))
        return (c - y) * (2.0 * t * sqrt_r + (1.0 + 1.0 / (y * y)) * inv)

    return _quad(g, 0.0, math.sqrt(c - a1), "energy integral")


def d_second(p: Params, method: str = "integral", dc: float | None = None,
             half_length=None, n_points=DEFAULT_POINTS, strict: bool = True) -> float:
    """Second derivative of d(c).

    Parameters
    ----------
    p : Params
        Smooth solitary-wave parameters.
    method : {"integral", "finite-difference"}
        ``integral`` evaluates int (I1 + I2) dy with y = A1 + s^2.
        ``finite-difference`` takes a central difference of the grid value of
        d'(c) with step ``dc`` (default 1e-3 times the distance to the root).
    strict : bool
        The integral route requires sigma <= 1 unless this is False; the
        integrand itself is finite whenever c - sigma*phi > 0.
    """
    _check_smooth(p)
    if method == "integral":
        if strict and p.sigma > 1:
            raise DomainError("the integral route for d'' assumes sigma <= 1")
        _, c, a1, _ = _normalized(p)

        def g(t):
            i1, i2 = d_second_integrands(a1 + t * t, p)
            return 2.0 * t * (i1 + i2)

        return _quad(g, 0.0, math.sqrt(c - a1), "d'' integral")
    if method != "finite-difference":
        raise DomainError(f"unknown method {method!r}")
    _, c, a1, _ = _normalized(p)
    step = FD_STEP * (c - a1) if dc is None else float(dc)
    lo, hi = p.with_c(p.c - step), p.with_c(p.c + step)
    for q in (lo, hi):
        if not classify(q, "smooth").is_smooth:
            raise UnsupportedClassError(f"class changes within dc of c={p.c!r}")
    if half_length is None:
        # the slower-decaying neighbour sets the domain
        half_length = max(default_half_length(lo), default_half_length(hi))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        d_lo = d_prime(lo, half_length, n_points)
        d_hi = d_prime(hi, half_length, n_points)
    return (d_hi - d_lo) / (2.0 * step)


def dc_scan(sigma: float, A: float, cs, n_points=DEFAULT_POINTS) -> dict:
    """Columns c, d, d', d'' (both routes) over the speeds ``cs``."""
    rows = {"c": [], "d": [], "d_prime": [], "d_second_integral": [], "d_second_fd": []}
    for c in cs:
        p = Params(sigma, A, float(c))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rows["c"].append(p.c)
            rows["d"].append(d_value(p, n_points=n_points))
            rows["d_prime"].append(d_prime(p, n_points=n_points))
        try:
            rows["d_second_integral"].append(d_second(p, "integral", strict=False))
        except QuadratureError:
            rows["d_second_integral"].append(math.nan)
        rows["d_second_fd"].append(d_second(p, "finite-difference", n_points=n_points))
    return rows


def write_dc_scan(path, scan: dict):
    return io.write_csv(path, scan)
