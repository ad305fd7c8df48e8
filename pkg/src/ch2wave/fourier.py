"""Periodic Fourier primitives shared by the functionals and the time stepper."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Grid:
    """Uniform 1-D grid ``x_j = origin + j*h``, ``j = 0..n-1``.

    A periodic grid has period ``n*h``; a non-periodic one describes a
    truncated line on which fields are taken to vanish outside.
    """

    origin: float
    h: float
    n: int
    periodic: bool = True

    def __post_init__(self):
        if self.n < 8:
            raise DomainError(f"grid needs at least 8 points, got {self.n}")
        if not self.h > 0:
            raise DomainError(f"grid spacing must be positive, got {self.h}")

    @classmethod
    def periodic_box(cls, length: float, n: int) -> "Grid":
        """Periodic grid on [-length/2, length/2) containing x = 0 when n is even."""
        return cls(-0.5 * length, length / n, int(n), True)

    @property
    def length(self) -> float:
        return self.n * self.h

    @cached_property
    def x(self) -> np.ndarray:
        x = self.origin + self.h * np.arange(self.n)
        x.flags.writeable = False
        return x

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers for ``rfft`` (Nyquist mode included)."""
        k = 2 * np.pi * np.fft.rfftfreq(self.n, d=self.h)
        k.flags.writeable = False
        return k

    @cached_property
    def ik(self) -> np.ndarray:
        """Symbol of d/dx with the Nyquist mode zeroed (odd derivatives only)."""
        ik = 1j * np.array(self.k)
        if self.n % 2 == 0:
            ik[-1] = 0.0
        ik.flags.writeable = False
        return ik

    def as_dict(self) -> dict:
        return {"origin": self.origin, "h": self.h, "n": self.n, "periodic": self.periodic}


def ddx(f, grid: Grid) -> np.ndarray:
    """Spectral first derivative of a periodic field."""
    return np.fft.irfft(grid.ik * np.fft.rfft(f), n=grid.n)


def d2dx2(f, grid: Grid) -> np.ndarray:
    return np.fft.irfft(-(grid.k ** 2) * np.fft.rfft(f), n=grid.n)


def helmholtz_symbol(grid: Grid) -> np.ndarray:
    return 1.0 / (1.0 + grid.k ** 2)


def helmholtz_inverse(f, grid: Grid) -> np.ndarray:
    """(1 - d^2/dx^2)^{-1} f, i.e. convolution with exp(-|x|)/2, periodized."""
    if not grid.periodic:
        raise DomainError("helmholtz_inverse needs a periodic grid")
    return np.fft.irfft(helmholtz_symbol(grid) * np.fft.rfft(f), n=grid.n)


def pad_spectrum(fh: np.ndarray, n: int, m: int) -> np.ndarray:
    """Zero-pad rfft coefficients of an n-point field to m points (m >= n)."""
    out = np.zeros(m // 2 + 1, dtype=complex)
    out[: fh.size] = fh
    if n % 2 == 0:
        # split the Nyquist coefficient so the padded field stays real and equal
        out[n // 2] *= 0.5
    return out * (m / n)


def truncate_spectrum(gh: np.ndarray, n: int, m: int) -> np.ndarray:
    out = gh[: n // 2 + 1] * (n / m)
    if n % 2 == 0:
        out = out.copy()
        out[-1] = out[-1].real * 2.0
    return out


class Dealiaser:
    """Products of band-limited fields computed on a 3/2-padded grid.

    The returned product is the exact projection of the product onto the
    resolved modes (no aliasing for quadratic nonlinearities).
    """

    def __init__(self, n: int):
        self.n = n
        self.m = 3 * n // 2 + (3 * n // 2) % 2

    def up(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfft(pad_spectrum(fh, self.n, self.m), n=self.m)

    def down(self, g: np.ndarray) -> np.ndarray:
        """rfft coefficients (on the coarse grid) of a padded-grid field."""
        return truncate_spectrum(np.fft.rfft(g), self.n, self.m)
