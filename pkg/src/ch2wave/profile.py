"""Sampled solitary-wave profiles built by quadrature of the first integral.

The abscissa is integrated as a function of amplitude, x(phi) = int dpsi / sqrt(F(psi)),
starting at the crest. Two integration variables are used:

* near the crest, ``t`` with ``psi = m - d*t**2`` (``d`` the profile sign), which
  turns the square-root singularity of a simple zero, the corner of a peak and
  the pole of a cusp into smooth integrands;
* in the tail, ``u = log|psi|``, where dx/du tends to the inverse decay rate.

Both pieces are tabulated with Gauss-Legendre panels and inverted at the grid
abscissae with a bracketed Newton iteration, so every sample is accurate to a
few ulps and no interpolation noise enters finite-difference checks.
"""

from __future__ import annotations

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import io
from .errors import DomainError, PoleError, SingularityError, StepSizeError
from .params import CrestKind, Kind, Params, WaveClass, classify

TAIL_CUTOFF = 1e-12
DEFAULT_POINTS = 4096
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def first_integral(phi, p: Params):
    """phi_x**2 as a function of phi along a solitary wave.

    ``F(phi) = phi^2 (c-phi-A1)(c-phi-A2) / ((c-phi)(c-sigma*phi))``. Raises
    :class:`PoleError` when evaluated exactly on a pole.
    """
    phi = np.asarray(phi, dtype=float)
    a1, a2 = p.roots
    c, s = p.c, p.sigma
    den_c = c - phi
    den_s = c - s * phi
    if np.any(den_s == 0):
        raise PoleError(f"first integral has a pole at phi = c/sigma = {c / s!r}", c / s)
    if np.any(den_c == 0):
        raise PoleError(f"first integral has a pole at phi = c = {c!r}", c)
    out = phi * phi * (den_c - a1) * (den_c - a2) / (den_c * den_s)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Normalized wave: c > 0 side, possibly after reflection (c, phi) -> (-c, -phi)


@dataclass(frozen=True)
class _Wave:
    sigma: float
    c: float
    a1: float
    a2: float
    crest_kind: CrestKind
    m: float  # crest value

    @property
    def d(self) -> float:
        return 1.0 if self.m > 0 else -1.0

    @property
    def A(self) -> float:
        return -(self.a1 + self.a2)

    def psi_of_t(self, t):
        return self.m - self.d * t * t

    def dx_dt(self, t):
        """dx/dt on the crest side; finite for all three crest kinds."""
        psi = self.psi_of_t(t)
        c, s, a1, a2 = self.c, self.sigma, self.a1, self.a2
        if self.crest_kind is CrestKind.SIMPLE_ZERO:
            return 2.0 * np.sqrt((c - psi) * (c - s * psi) / (c - psi - a2)) / np.abs(psi)
        if self.crest_kind is CrestKind.CORNER:
            return 2.0 * t * np.sqrt(s * (c - psi) / (c - psi - a2)) / np.abs(psi)
        return 2.0 * t * t * np.sqrt(abs(s) * (c - psi) / ((c - psi - a1) * (c - psi - a2))) / np.abs(psi)

    def slope_t(self, t):
        """|phi_x| = sqrt(F) written with t to avoid cancellation at the crest."""
        psi = self.psi_of_t(t)
        c, s, a1, a2 = self.c, self.sigma, self.a1, self.a2
        if self.crest_kind is CrestKind.SIMPLE_ZERO:
            return np.abs(psi) * t * np.sqrt((c - psi - a2) / ((c - psi) * (c - s * psi)))
        if self.crest_kind is CrestKind.CORNER:
            return np.abs(psi) * np.sqrt((c - psi - a2) / ((c - psi) * s))
        with np.errstate(divide="ignore"):
            return np.abs(psi) * np.sqrt((c - psi - a1) * (c - psi - a2) / ((c - psi) * abs(s))) / t

    def f_over_psi2(self, psi):
        c, s = self.c, self.sigma
        return (c - psi - self.a1) * (c - psi - self.a2) / ((c - psi) * (c - s * psi))

    def dx_du(self, u):
        return 1.0 / np.sqrt(self.f_over_psi2(self.d * np.exp(u)))

    def phi_xx(self, phi, phi_x):
        """Second derivative from the profile ODE solved for phi_xx."""
        c, s, A = self.c, self.sigma, self.A
        tail = phi * (phi - 2.0 * c) / (2.0 * (c - phi) ** 2)  # 1/2 - c^2/(2(c-phi)^2)
        rhs = (c + A) * phi - 1.5 * phi * phi + 0.5 * s * phi_x * phi_x + tail
        return rhs / (c - s * phi)


def _normalize(p: Params, wc: WaveClass) -> tuple[_Wave, float]:
    a1, a2 = p.roots
    if p.c > 0:
        return _Wave(p.sigma, p.c, a1, a2, wc.crest_kind, wc.crest_value), 1.0
    # reflection maps (A1, A2) -> (-A2, -A1)
    return _Wave(p.sigma, -p.c, -a2, -a1, wc.crest_kind, -wc.crest_value), -1.0


class _PanelTable:
    """Cumulative integral of ``g`` over uniform Gauss-Legendre panels on [a, b]."""

    def __init__(self, g, a: float, b: float, n_panels: int):
        self.g = g
        self.edges = np.linspace(a, b, n_panels + 1)
        self.cum = np.concatenate([[0.0], np.cumsum(self._integrate(self.edges[:-1], self.edges[1:]))])

    def _integrate(self, lo, hi):
        lo = np.asarray(lo, dtype=float)[..., None]
        hi = np.asarray(hi, dtype=float)[..., None]
        half = 0.5 * (hi - lo)
        nodes = 0.5 * (hi + lo) + half * _GL_X
        return np.sum(self.g(nodes) * _GL_W, axis=-1) * half[..., 0]

    @property
    def total(self) -> float:
        return float(self.cum[-1])

    def invert(self, targets):
        """Variable values at which the cumulative integral equals ``targets``."""
        targets = np.asarray(targets, dtype=float)
        if targets.size == 0:
            return targets.copy()
        k = np.clip(np.searchsorted(self.cum, targets, side="right") - 1, 0, len(self.edges) - 2)
        lo = self.edges[k].copy()
        hi = self.edges[k + 1].copy()
        span = self.cum[k + 1] - self.cum[k]
        frac = np.where(span > 0, (targets - self.cum[k]) / np.where(span > 0, span, 1.0), 0.0)
        v = lo + np.clip(frac, 0.0, 1.0) * (hi - lo)
        tol = 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(targets))
        base_lo = self.edges[k]
        for _ in range(200):
            r = self.cum[k] + self._integrate(base_lo, v) - targets
            done = np.abs(r) <= tol
            if np.all(done):
                break
            lo = np.where(r < 0, v, lo)
            hi = np.where(r > 0, v, hi)
            slope = self.g(v)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = v - r / slope
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            v = np.where(done, v, np.where(bad, 0.5 * (lo + hi), step))
        return v


@dataclass(frozen=True)
class HalfLine:
    """Samples of a normalized wave on x >= 0, decreasing in |phi| away from the crest."""

    x: np.ndarray
    phi: np.ndarray
    slope: np.ndarray  # |phi_x|
    x_cutoff: float


def _half_line(w: _Wave, xs: np.ndarray, n_crest: int = 96, n_tail: int = 384) -> HalfLine:
    t_switch = math.sqrt(abs(w.m) / 2.0)
    crest = _PanelTable(w.dx_dt, 0.0, t_switch, n_crest)
    u_start = math.log(abs(w.m) / 2.0)
    u_end = math.log(TAIL_CUTOFF * abs(w.m))
    # the tail table runs with decreasing u; integrate in -u
    tail = _PanelTable(lambda v: w.dx_du(-v), -u_start, -u_end, n_tail)
    x_cut = crest.total + tail.total

    phi = np.zeros_like(xs)
    slope = np.zeros_like(xs)
    in_crest = xs <= crest.total
    in_tail = (~in_crest) & (xs <= x_cut)

    t = crest.invert(xs[in_crest])
    phi[in_crest] = w.psi_of_t(t)
    slope[in_crest] = w.slope_t(t)

    u = -tail.invert(xs[in_tail] - crest.total)
    psi = w.d * np.exp(u)
    phi[in_tail] = psi
    slope[in_tail] = np.abs(psi) * np.sqrt(w.f_over_psi2(psi))
    return HalfLine(xs, phi, slope, x_cut)


def _cutoff_length(w: _Wave) -> float:
    t_switch = math.sqrt(abs(w.m) / 2.0)
    crest = _PanelTable(w.dx_dt, 0.0, t_switch, 32)
    tail = _PanelTable(lambda v: w.dx_du(-v), -math.log(abs(w.m) / 2.0),
                       -math.log(TAIL_CUTOFF * abs(w.m)), 128)
    return crest.total + tail.total


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Profile:
    """A solitary wave sampled on a uniform grid with the crest at x = 0.

    The grid is ``x_j = (j - n//2) * h`` with ``h = 2*half_length/n``, so it
    contains the crest and, for even ``n``, coincides with a periodic grid of
    length ``2*half_length``. ``phi_x`` is set to 0 at the crest; the one-sided
    crest slopes of peaked and cusped waves are in ``crest_slopes``.
    """

    x: np.ndarray
    phi: np.ndarray
    phi_x: np.ndarray
    phi_xx: np.ndarray
    eta: np.ndarray
    params: Params
    wave_class: WaveClass
    decay_rate_theoretical: float
    branch: str = "smooth"
    half_length: float = 0.0
    crest_slopes: tuple = (0.0, 0.0)
    cusp_beta: float | None = None
    x_cutoff: float = math.inf
    warnings: tuple = field(default_factory=tuple)

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def n_points(self) -> int:
        return int(self.x.size)

    @property
    def crest_index(self) -> int:
        return self.n_points // 2

    @property
    def truncated(self) -> bool:
        return bool(self.warnings)

    def eta_x(self) -> np.ndarray:
        c = self.params.c
        return c * self.phi_x / (c - self.phi) ** 2

    def residual(self, order: int = 2) -> np.ndarray:
        """Pointwise residual of the second-order profile equation.

        phi_x and phi_xx come from centered differences of the given order
        (2: three-point, 4: five-point stencils). Points without a full
        stencil and the crest of non-smooth waves are NaN.
        """
        p = self.params
        c, s, A = p.c, p.sigma, p.A
        phi, h = self.phi, self.h
        res = np.full_like(phi, np.nan)
        if order == 2:
            k = 1
            f = phi[1:-1]
            fx = (phi[2:] - phi[:-2]) / (2 * h)
            fxx = (phi[2:] - 2 * f + phi[:-2]) / (h * h)
        elif order == 4:
            k = 2
            f = phi[2:-2]
            fx = (-phi[4:] + 8 * phi[3:-1] - 8 * phi[1:-3] + phi[:-4]) / (12 * h)
            fxx = (-phi[4:] + 16 * phi[3:-1] - 30 * f + 16 * phi[1:-3] - phi[:-4]) / (12 * h * h)
        else:
            raise DomainError(f"residual order must be 2 or 4, got {order!r}")
        tail = f * (f - 2.0 * c) / (2.0 * (c - f) ** 2)
        res[k:-k] = -(c + A) * f + c * fxx + 1.5 * f * f - s * f * fxx - 0.5 * s * fx * fx - tail
        if not self.wave_class.is_smooth:
            i = self.crest_index
            res[i - k:i + k + 1] = np.nan
        return res

    def max_residual(self, order: int = 2) -> float:
        return float(np.nanmax(np.abs(self.residual(order))))

    def fit_decay_rate(self) -> float:
        """Least-squares tail rate of log|phi| over the last decade of the sampled tail."""
        right = self.x > 0
        x, a = self.x[right], np.abs(self.phi[right])
        keep = a > 0
        x, a = x[keep], a[keep]
        if a.size < 3:
            return math.nan
        sel = a <= 10.0 * a[-1]
        if sel.sum() < 3:
            sel = np.zeros_like(sel)
            sel[-3:] = True
        slope = np.polyfit(x[sel], np.log(a[sel]), 1)[0]
        return float(-slope)

    def fit_cusp_exponent(self, decades: float = 1.0) -> float:
        """Slope of log|phi - crest| against log|x| over the innermost decade(s)."""
        if self.wave_class.crest_kind is not CrestKind.POLE:
            raise DomainError("cusp exponent is defined for pole crests only")
        x = self.x
        sel = (x > 0) & (x <= self.h * 10.0 ** decades * (1 + 1e-9))
        dev = np.abs(self.phi[sel] - self.wave_class.crest_value)
        return float(np.polyfit(np.log(x[sel]), np.log(dev), 1)[0])

    def fit_cusp_beta(self) -> float:
        """beta from the first grid point next to the cusp."""
        k = self.crest_index + 1
        return float((self.phi[k] - self.wave_class.crest_value) / abs(self.x[k]) ** (2.0 / 3.0))

    def fit_tail_amplitude(self) -> float:
        """alpha in phi ~ alpha*exp(-kappa*x), fitted with the theoretical rate."""
        right = (self.x > 0) & (self.phi != 0)
        x, a = self.x[right], self.phi[right]
        sel = np.abs(a) <= 10.0 * np.abs(a[-1])
        return float(np.mean(a[sel] * np.exp(self.decay_rate_theoretical * x[sel])))

    def metadata(self) -> dict:
        return {
            "params": self.params.as_dict(),
            **self.wave_class.as_dict(),
            "branch": self.branch,
            "half_length": self.half_length,
            "n_points": self.n_points,
            "decay_rate_theoretical": self.decay_rate_theoretical,
            "crest_slopes": list(self.crest_slopes),
            "cusp_beta": self.cusp_beta,
            "x_cutoff": self.x_cutoff,
            "warnings": list(self.warnings),
        }

    def to_csv(self, path):
        return io.write_csv(path, {"x": self.x, "phi": self.phi, "phi_x": self.phi_x, "eta": self.eta})

    def to_json(self, path):
        data = self.metadata()
        data["arrays"] = {"x": self.x, "phi": self.phi, "phi_x": self.phi_x,
                          "phi_xx": self.phi_xx, "eta": self.eta}
        return io.write_json(path, data)

    @classmethod
    def from_json(cls, path) -> "Profile":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        pp = data["params"]
        p = Params(pp["sigma"], pp["A"], pp["c"])
        wc = classify(p, data["branch"])
        arr = {k: _freeze(np.array(v, dtype=float)) for k, v in data["arrays"].items()}
        beta = data.get("cusp_beta")
        return cls(
            x=arr["x"], phi=arr["phi"], phi_x=arr["phi_x"], phi_xx=arr["phi_xx"], eta=arr["eta"],
            params=p, wave_class=wc, decay_rate_theoretical=float(data["decay_rate_theoretical"]),
            branch=data["branch"], half_length=float(data["half_length"]),
            crest_slopes=tuple(float(v) for v in data["crest_slopes"]),
            cusp_beta=None if beta is None else float(beta),
            x_cutoff=float(data["x_cutoff"]), warnings=tuple(data["warnings"]),
        )


def _resolve_branch(p: Params, branch: str | None) -> tuple[WaveClass, str]:
    if branch is None:
        wc = classify(p, "smooth")
        return wc, "smooth" if wc.is_smooth or not wc.exists else "singular"
    wc = classify(p, branch)
    if p.sigma >= 0 or not wc.exists:
        natural = "smooth" if wc.is_smooth else "singular"
        if wc.exists and branch != natural:
            raise DomainError(f"branch {branch!r} inconsistent with class {wc.kind.value}")
    return wc, branch


def cutoff_length(p: Params, branch: str | None = None) -> float:
    """Distance from the crest at which |phi| falls to TAIL_CUTOFF * |crest|."""
    wc, _ = _resolve_branch(p, branch)
    if not wc.exists:
        raise DomainError(f"no solitary wave for {p}")
    w, _ = _normalize(p, wc)
    return _cutoff_length(w)


def default_half_length(p: Params, branch: str | None = None, cap: float = 400.0) -> float:
    return min(cap, 1.02 * cutoff_length(p, branch))


def build_profile(p: Params, branch: str | None = None, half_length: float | None = None,
                  n_points: int = DEFAULT_POINTS) -> Profile:
    """Construct the solitary wave for ``p`` on a uniform grid.

    Parameters
    ----------
    p : Params
        Must be admissible.
    branch : {"smooth", "singular"} or None
        Wave to build. ``None`` picks the smooth wave for sigma < 0 and the
        unique wave otherwise. "singular" is only valid where classify reports
        a corner or pole crest.
    half_length : float, optional
        Half width of the grid. Defaults to just past the tail cutoff
        (|phi| < 1e-12 |crest|), capped at 400.
    n_points : int
        Number of grid points.

    Returns
    -------
    Profile
        Carries a truncation warning when the grid ends before the tail cutoff.
    """
    wc, branch = _resolve_branch(p, branch)
    if not wc.exists:
        raise DomainError(f"no solitary wave for sigma={p.sigma}, A={p.A}, c={p.c}")
    if n_points < 8:
        raise DomainError("n_points must be at least 8")
    w, flip = _normalize(p, wc)
    if half_length is None:
        half_length = default_half_length(p, branch)
    if half_length <= 0:
        raise DomainError("half_length must be positive")

    n = int(n_points)
    h = 2.0 * half_length / n
    j = np.arange(n) - n // 2
    x = j * h
    xs = h * np.arange(0, max(-j.min(), j.max()) + 1)
    half = _half_line(w, xs)

    idx = np.abs(j)
    phi = flip * half.phi[idx]
    # profile is even and |phi| decreases away from the crest
    slope = half.slope[idx]
    with np.errstate(invalid="ignore"):
        phi_x = -np.sign(j) * np.sign(phi) * slope
    phi_x = np.where(j == 0, 0.0, phi_x)

    notes = []
    if half.x_cutoff > half_length:
        msg = (f"half_length {half_length:.6g} shorter than tail cutoff distance "
               f"{half.x_cutoff:.6g}; profile truncated")
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    kind = wc.crest_kind
    crest_slope = 0.0
    beta = None
    if kind is CrestKind.CORNER:
        crest_slope = float(w.slope_t(np.array(0.0)))
    elif kind is CrestKind.POLE:
        crest_slope = math.inf
        # x ~ g0 * t**3 / 3 next to the pole
        mc = w.c - w.m
        g0 = 2.0 * math.sqrt(abs(w.sigma) * mc / ((mc - w.a1) * (mc - w.a2))) / abs(w.m)
        beta = -w.d * flip * (3.0 / g0) ** (2.0 / 3.0)
    # phi_x(0-) and phi_x(0+)
    orient = 1.0 if wc.crest_value > 0 else -1.0
    crest_slopes = (orient * crest_slope, -orient * crest_slope)

    phi_xx = np.zeros_like(phi)
    nz = phi != 0
    if wc.is_smooth:
        phi_xx[nz] = flip * w.phi_xx(flip * phi[nz], flip * phi_x[nz])
    else:
        off = nz & (j != 0)
        phi_xx[off] = flip * w.phi_xx(flip * phi[off], flip * phi_x[off])
        phi_xx[j == 0] = np.nan

    eta = phi / (p.c - phi)
    return Profile(
        x=_freeze(x), phi=_freeze(phi), phi_x=_freeze(phi_x), phi_xx=_freeze(phi_xx),
        eta=_freeze(eta), params=p, wave_class=wc, decay_rate_theoretical=p.decay_rate,
        branch=branch, half_length=float(half_length), crest_slopes=crest_slopes,
        cusp_beta=beta, x_cutoff=float(half.x_cutoff), warnings=tuple(notes),
    )


def eta_from_phi(profile: Profile) -> Profile:
    """Return a copy of ``profile`` with eta = phi / (c - phi)."""
    c = profile.params.c
    gap = np.abs(c - profile.phi)
    if np.any(gap < 1e-12 * abs(c)):
        raise SingularityError("c - phi vanishes on the grid")
    return dataclasses.replace(profile, eta=_freeze(profile.phi / (c - profile.phi)))


def peakon_abscissa(phi, p: Params):
    """Distance |x - x0| from the crest at which the peaked wave equals ``phi``.

    Closed-form antiderivative after the substitution w = 1 - A2/(c - t),
    written so that no difference of nearly equal square roots is formed.
    At the peaked speed (c - phi - A1)/(c - sigma*phi) = 1/sigma, so
    phi_x**2 = phi**2 (c - A2 - phi) / (sigma (c - phi)) and the antiderivative
    carries an overall factor sqrt(sigma).
    """
    wc = classify(p)
    if wc.kind is not Kind.PEAKED:
        raise DomainError(f"peakon_abscissa needs a peaked wave, got {wc.kind.value}")
    a1, a2 = p.roots
    c = p.c
    m = c - a1
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0) or np.any(phi > m * (1 + 1e-15)):
        raise DomainError(f"phi must lie in (0, {m!r}]")
    q = math.sqrt(c - a2)
    k = math.sqrt(c / (c - a2))

    def antiderivative(t):
        w = 1.0 - a2 / (c - t)
        sw = np.sqrt(w)
        r1 = (-a2 * t / (c - t)) / (np.sqrt(c * w) + q) ** 2
        r2 = (-a2 / (c - t)) / (sw + 1.0) ** 2
        return k * np.log(r1) - np.log(r2)

    out = math.sqrt(p.sigma) * (antiderivative(np.asarray(m)) - antiderivative(phi))
    out = np.maximum(out, 0.0)
    return out[()] if out.ndim == 0 else out


def default_dc(p: Params) -> float:
    a1, a2 = p.roots
    return 1e-4 * (p.c - a1) if p.c > 0 else 1e-4 * (a2 - p.c)


def dphi_dc(p: Params, dc: float | None = None, half_length: float | None = None,
            n_points: int = DEFAULT_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Central difference of the smooth profile in c, crests aligned at x = 0."""
    dc = default_dc(p) if dc is None else float(dc)
    lo, mid, hi = p.with_c(p.c - dc), p, p.with_c(p.c + dc)
    for q in (lo, mid, hi):
        if not classify(q).is_smooth:
            raise StepSizeError(f"wave class is not smooth at c={q.c!r}; reduce dc")
    if half_length is None:
        half_length = default_half_length(lo)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        plo = build_profile(lo, half_length=half_length, n_points=n_points)
        phi_ = build_profile(hi, half_length=half_length, n_points=n_points)
    return plo.x, (phi_.phi - plo.phi) / (2.0 * dc)


def dphi_dc_zero_count(p: Params, dc: float | None = None, half_length: float | None = None,
                       n_points: int = DEFAULT_POINTS, rel_tol: float = 1e-7) -> int:
    """Number of zeros of d(phi)/dc on the whole line (twice the count on x > 0)."""
    x, omega = dphi_dc(p, dc, half_length, n_points)
    scale = np.max(np.abs(omega))
    right = (x > 0) & (np.abs(omega) > rel_tol * scale)
    signs = np.sign(omega[right])
    return 2 * int(np.count_nonzero(signs[1:] != signs[:-1]))
