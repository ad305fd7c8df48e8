"""Linearized operators about a smooth solitary wave and their low spectrum.

Both operators are discretized on the profile grid with homogeneous Dirichlet
values just outside it. The second-order part is written in flux form with
the coefficient c - sigma*phi averaged at half points, which makes the
matrices exactly symmetric.

For left-moving waves (c < A2) the sign-reversed operator -H_c is used, so
that in both cases the essential spectrum is positive.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, linalg, sparse

from . import io
from .errors import AssemblyError, DomainError, QuadratureError, UnsupportedClassError
from .fourier import Grid
from .params import Params
from .profile import Profile

HC, KC, OINF = "Hc", "Kc", "AsymptoticOinfty"
N_EIGS = 10


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Sparse symmetric discretization of a linearized operator.

    For ``Hc`` and ``AsymptoticOinfty`` the unknowns are ordered as the
    psi block followed by the omega block. The band data (``diag_psi``,
    ``off_psi``, ``coupling``, ``diag_omega``) is kept for banded eigen-solves;
    ``potential`` is the multiplication part of the psi-psi block.
    """

    matrix: sparse.csr_matrix
    grid: Grid
    kind: str
    params: Params
    sign: float
    diag_psi: np.ndarray = field(repr=False)
    off_psi: np.ndarray = field(repr=False)
    potential: np.ndarray = field(repr=False)
    coupling: np.ndarray | None = field(default=None, repr=False)
    diag_omega: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def zeroth_order_scale(self) -> float:
        """Largest absolute multiplication coefficient of the operator."""
        parts = [self.potential] if self.coupling is None else [
            self.potential, self.coupling, self.diag_omega]
        return float(max(np.max(np.abs(a)) for a in parts))

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def banded(self) -> np.ndarray:
        """Upper banded storage for scipy.linalg.eig_banded (interleaved order for 2x2 blocks)."""
        n = self.grid.n
        if self.coupling is None:
            ab = np.zeros((2, n))
            ab[1] = self.diag_psi
            ab[0, 1:] = self.off_psi
            return ab
        ab = np.zeros((3, 2 * n))
        ab[2, 0::2] = self.diag_psi
        ab[2, 1::2] = self.diag_omega
        ab[1, 1::2] = self.coupling          # (psi_i, omega_i)
        ab[0, 2::2] = self.off_psi           # (psi_i, psi_{i+1})
        return ab

    def deinterleave(self, v: np.ndarray) -> np.ndarray:
        if self.coupling is None:
            return v
        return np.concatenate([v[0::2], v[1::2]], axis=0)


def _flux_coefficients(p_coef: np.ndarray, edge: float, h: float):
    """Diagonal and off-diagonal of -d/dx (a d/dx) with Dirichlet ghosts, a at half points."""
    a_half = 0.5 * (p_coef[1:] + p_coef[:-1])
    a_left = 0.5 * (edge + p_coef[0])
    a_right = 0.5 * (p_coef[-1] + edge)
    a_all = np.concatenate([[a_left], a_half, [a_right]])
    diag = (a_all[:-1] + a_all[1:]) / (h * h)
    off = -a_half / (h * h)
    return diag, off


def _check_profile(profile: Profile) -> None:
    if not profile.wave_class.is_smooth:
        raise UnsupportedClassError(
            f"linearized operators need a smooth wave, got {profile.wave_class.kind.value}")


def _line_grid(profile: Profile) -> Grid:
    return Grid(float(profile.x[0]), profile.h, profile.n_points, periodic=False)


def _assemble(p: Params, grid: Grid, phi, phi_xx, kind: str) -> OperatorMatrix:
    c, s, A = p.c, p.sigma, p.A
    sign = 1.0 if c > 0 else -1.0
    stiff = sign * (c - s * phi)
    if np.any(stiff <= 0):
        i = int(np.argmin(stiff))
        raise AssemblyError(f"c - sigma*phi changes sign at x = {grid.x[i]:.6g}; operator not elliptic")
    diag2, off = _flux_coefficients(stiff, sign * c, grid.h)
    pot = sign * (-3.0 * phi + s * phi_xx + c + A)
    if kind == KC:
        pot = pot - sign * c * c / (c - phi) ** 3
        dpsi = diag2 + pot
        mat = sparse.diags([off, dpsi, off], [-1, 0, 1], format="csr")
        return OperatorMatrix(mat, grid, kind, p, sign, dpsi, off, pot)
    dpsi = diag2 + pot
    cpl = -sign * c / (c - phi)
    domg = sign * (c - phi)
    L = sparse.diags([off, dpsi, off], [-1, 0, 1])
    mat = sparse.bmat([[L, sparse.diags(cpl)], [sparse.diags(cpl), sparse.diags(domg)]], format="csr")
    return OperatorMatrix(mat, grid, kind, p, sign, dpsi, off, pot, cpl, domg)


def assemble_Hc(profile: Profile) -> OperatorMatrix:
    """2N x 2N discretization of the Hessian (L_c, -c/(c-phi); -c/(c-phi), c-phi)."""
    _check_profile(profile)
    return _assemble(profile.params, _line_grid(profile), profile.phi, profile.phi_xx, HC)


def assemble_Kc(profile: Profile) -> OperatorMatrix:
    """N x N discretization of K_c = L_c - c^2/(c-phi)^3."""
    _check_profile(profile)
    return _assemble(profile.params, _line_grid(profile), profile.phi, profile.phi_xx, KC)


def assemble_asymptotic(p: Params, grid: Grid) -> OperatorMatrix:
    """Far-field operator (-c d^2 + c + A, -1; -1, c), i.e. H_c with phi = 0."""
    if not (p.c > p.a1 or p.c < p.a2):
        raise DomainError("far-field operator is definite only for admissible speeds")
    zero = np.zeros(grid.n)
    return dataclasses.replace(_assemble(p, grid, zero, zero, HC), kind=OINF)


def essential_edge(M: OperatorMatrix) -> float:
    """Bottom of the continuous spectrum of the operator on the whole line."""
    p = M.params
    a1, a2 = p.roots
    if M.kind == KC:
        return abs((p.c - a1) * (p.c - a2) / p.c)
    return abs(p.c - a1) if p.c > 0 else abs(a2 - p.c)


def far_field_bottom(M: OperatorMatrix) -> float:
    """Lowest eigenvalue of the phi = 0 operator of the same kind on the same grid.

    It approaches the essential edge from above as the interval grows and
    marks where box modes of the truncated interval start.
    """
    zero = np.zeros(M.grid.n)
    kind = KC if M.kind == KC else HC
    far = _assemble(M.params, M.grid, zero, zero, kind)
    return float(linalg.eig_banded(far.banded(), lower=False, select="i", select_range=(0, 0),
                                   eigvals_only=True)[0])


def tol_zero(M: OperatorMatrix) -> float:
    """Threshold separating negative, kernel and positive eigenvalues: 10 * S * h^2.

    S is the size of the multiplication part of the operator; the second-order
    part is excluded because its norm grows like 1/h^2 and would swamp the
    discretization error of the kernel eigenvalue.
    """
    return 10.0 * M.zeroth_order_scale * M.grid.h ** 2


def _full_band(ab: np.ndarray) -> np.ndarray:
    """Convert symmetric upper band storage to the (l, u) layout of solve_banded."""
    u = ab.shape[0] - 1
    n = ab.shape[1]
    full = np.zeros((2 * u + 1, n))
    full[: u + 1] = ab
    for k in range(1, u + 1):
        # sub-diagonal k mirrors super-diagonal k
        full[u + k, : n - k] = ab[u - k, k:]
    return full


def lowest_eigenpairs(M: OperatorMatrix, k: int = N_EIGS) -> tuple[np.ndarray, np.ndarray]:
    """k smallest eigenvalues and unit eigenvectors (columns, block ordering).

    Eigenvalues come from a banded bisection solve; each eigenvector is then
    obtained by inverse iteration with a banded LU factorization, which is
    far cheaper than forming the full orthogonal reduction.
    """
    ab = M.banded()
    n = ab.shape[1]
    u = ab.shape[0] - 1
    k = min(k, n)
    try:
        w = linalg.eig_banded(ab, lower=False, select="i", select_range=(0, k - 1),
                              eigvals_only=True)
    except linalg.LinAlgError as exc:
        raise QuadratureError(f"banded eigen-solve failed: {exc}") from exc
    full = _full_band(ab)
    scale = float(np.max(np.abs(ab)))
    rng = np.random.default_rng(0)
    vecs = np.empty((n, k))
    for j, lam in enumerate(w):
        shifted = full.copy()
        # offset the shift slightly so the factorization stays regular
        shifted[u] -= lam + 1e-13 * scale
        v = rng.standard_normal(n)
        for _ in range(6):
            v = linalg.solve_banded((u, u), shifted, v, check_finite=False)
            v -= vecs[:, :j] @ (vecs[:, :j].T @ v)
            v /= np.linalg.norm(v)
        resid = np.linalg.norm(_band_matvec(ab, v) - lam * v)
        if not resid <= 1e-6 * max(scale, 1.0):
            raise QuadratureError(f"inverse iteration stalled for eigenvalue {lam:.6g}")
        vecs[:, j] = v
    return w, M.deinterleave(vecs)


def _band_matvec(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    u = ab.shape[0] - 1
    out = ab[u] * v
    for k in range(1, u + 1):
        d = ab[u - k, k:]
        out[:-k] += d * v[k:]
        out[k:] += d * v[:-k]
    return out


@dataclass(frozen=True)
class SpectrumReport:
    n_negative: int
    lambda_min: float
    lambda_near_zero: float
    kernel_alignment: float
    essential_edge_estimate: float
    essential_edge_theoretical: float
    tol_zero: float
    n_near_zero: int
    eigenvalues: tuple
    kind: str
    n_points: int
    half_length: float

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_points": self.n_points,
            "half_length": self.half_length,
            "n_negative": self.n_negative,
            "n_near_zero": self.n_near_zero,
            "lambda_min": self.lambda_min,
            "lambda_near_zero": self.lambda_near_zero,
            "kernel_alignment": self.kernel_alignment,
            "essential_edge_estimate": self.essential_edge_estimate,
            "essential_edge_theoretical": self.essential_edge_theoretical,
            "tol_zero": self.tol_zero,
            "eigenvalues": list(self.eigenvalues),
        }

    def to_json(self, path):
        return io.write_json(path, self.as_dict())


def kernel_direction(M: OperatorMatrix, profile: Profile | None) -> np.ndarray | None:
    """Translation mode (phi_x, eta_x) in the unknown ordering of ``M``."""
    if profile is None or M.kind == OINF:
        return None
    if M.kind == KC:
        return np.array(profile.phi_x)
    return np.concatenate([profile.phi_x, profile.eta_x()])


def spectrum_report(M: OperatorMatrix, profile: Profile | None = None, k: int = N_EIGS,
                    return_vectors: bool = False):
    """Low spectrum of ``M`` summarized against the translation mode of ``profile``."""
    w, v = lowest_eigenpairs(M, k)
    tol = tol_zero(M)
    near = int(np.argmin(np.abs(w)))
    ref = kernel_direction(M, profile)
    if ref is None:
        align = math.nan
    else:
        align = float(abs(v[:, near] @ ref) / (np.linalg.norm(v[:, near]) * np.linalg.norm(ref)))
    report = SpectrumReport(
        n_negative=int(np.count_nonzero(w < -tol)),
        lambda_min=float(w[0]),
        lambda_near_zero=float(w[near]),
        kernel_alignment=min(align, 1.0) if not math.isnan(align) else align,
        essential_edge_estimate=far_field_bottom(M),
        essential_edge_theoretical=essential_edge(M),
        tol_zero=tol,
        n_near_zero=int(np.count_nonzero(np.abs(w) <= tol)),
        eigenvalues=tuple(float(x) for x in w),
        kind=M.kind,
        n_points=M.grid.n,
        half_length=0.5 * M.grid.n * M.grid.h,
    )
    if return_vectors:
        return report, w, v
    return report


def kernel_residual(profile: Profile) -> float:
    """||K_c phi_x|| / ||phi_x|| on the grid."""
    K = assemble_Kc(profile)
    r = K.matrix @ profile.phi_x
    return float(np.linalg.norm(r) / np.linalg.norm(profile.phi_x))


def write_eigenvectors(path, M: OperatorMatrix, k: int = 3):
    """CSV with x and the k lowest eigenvectors (psi and, for 2x2 operators, omega parts)."""
    w, v = lowest_eigenpairs(M, k)
    n = M.grid.n
    cols = {"x": M.grid.x}
    for j in range(w.size):
        cols[f"psi_{j}"] = v[:n, j]
        if M.kind != KC:
            cols[f"omega_{j}"] = v[n:, j]
    return io.write_csv(path, cols)


def liouville_potential(profile: Profile) -> np.ndarray:
    """q_c on the profile grid; for sigma = 0 it reduces to -3 phi - c^2/(c-phi)^3 + 1/c."""
    _check_profile(profile)
    p = profile.params
    c, s = p.c, p.sigma
    phi, phx, phxx = profile.phi, profile.phi_x, profile.phi_xx
    stiff = c - s * phi
    if np.any(stiff * np.sign(c) <= 0):
        raise AssemblyError("c - sigma*phi changes sign; Liouville substitution undefined")
    return (-3.0 * phi + 0.75 * s * phxx - c * c / (c - phi) ** 3 + 1.0 / c
            - s * s * phx * phx / (16.0 * stiff))


def liouville_transform(profile: Profile) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate z = int_0^x dy / sqrt(c - sigma*phi) and the potential q_c on the profile grid.

    ``z`` is integrated with the trapezoid rule outward from the crest and is
    odd in x. For left-moving waves c - sigma*phi is replaced by its modulus.
    """
    q = liouville_potential(profile)
    c, s = profile.params.c, profile.params.sigma
    g = 1.0 / np.sqrt(np.abs(c - s * profile.phi))
    i0 = profile.crest_index
    h = profile.h
    z = np.zeros_like(g)
    steps = 0.5 * h * (g[1:] + g[:-1])
    z[i0 + 1:] = np.cumsum(steps[i0:])
    z[:i0] = -np.cumsum(steps[:i0][::-1])[::-1]
    return z, q


def liouville_eigenvalues(profile: Profile, n_points: int | None = None, k: int = 3) -> np.ndarray:
    """Lowest eigenvalues of -d^2/dz^2 + q_c + c + A - 1/c on a uniform z grid.

    The operator acts on theta = (c - sigma*phi)^(1/4) psi, so its eigenvalues
    coincide with those of K_c; the discretizations are unrelated.
    """
    z, q = liouville_transform(profile)
    p = profile.params
    sign = 1.0 if p.c > 0 else -1.0
    n = profile.n_points if n_points is None else int(n_points)
    # uniform z grid inside the image of the x interval
    zs = np.linspace(z[0], z[-1], n + 2)[1:-1]
    hz = zs[1] - zs[0]
    qs = interpolate.CubicSpline(z, q)(zs)
    shift = p.c + p.A - 1.0 / p.c
    ab = np.zeros((2, n))
    ab[1] = 2.0 / hz ** 2 + sign * (qs + shift)
    ab[0, 1:] = -1.0 / hz ** 2
    return linalg.eig_banded(ab, lower=False, select="i", select_range=(0, k - 1),
                             eigvals_only=True)


def spectral_half_length(p: Params) -> float:
    """Half width 25 / decay rate used for the truncated-line operators."""
    return 25.0 / p.decay_rate
