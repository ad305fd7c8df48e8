"""Shear-flow roots, admissible speeds and the solitary-wave decision table."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

from .errors import DomainError

# Stand-in for the A -> 0 limit; A must stay strictly positive.
A_LIMIT = 1e-300
EQUALITY_RTOL = 1e-12


def shear_roots(A: float) -> tuple[float, float]:
    """Roots (A1, A2) of y**2 + A*y - 1 = 0 with A1 > 0 > A2.

    A2 is formed without cancellation and A1 = -1/A2, so the product is -1
    and the sum is -A to within a few ulps for every A > 0.
    """
    if not (A > 0) or not math.isfinite(A):
        raise DomainError(f"shear strength A must be positive and finite, got {A!r}")
    a2 = -0.5 * (A + math.sqrt(A * A + 4.0))
    a1 = -1.0 / a2
    return a1, a2


def _close(a: float, b: float, rtol: float = EQUALITY_RTOL) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)


@dataclass(frozen=True)
class Params:
    """Convection balance ``sigma``, shear strength ``A`` and wave speed ``c``."""

    sigma: float
    A: float
    c: float

    def __post_init__(self):
        for name in ("sigma", "A", "c"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        if self.A <= 0:
            raise DomainError(f"A must be strictly positive, got {self.A!r}")

    @classmethod
    def limit(cls, sigma: float, c: float) -> "Params":
        """Parameters in the A -> 0 limit."""
        return cls(float(sigma), A_LIMIT, float(c))

    @cached_property
    def roots(self) -> tuple[float, float]:
        return shear_roots(self.A)

    @property
    def a1(self) -> float:
        return self.roots[0]

    @property
    def a2(self) -> float:
        return self.roots[1]

    @property
    def decay_rate(self) -> float:
        """Theoretical exponential tail rate sqrt(c^2 + A c - 1) / |c|."""
        disc = self.c * self.c + self.A * self.c - 1.0
        if disc <= 0:
            return float("nan")
        return math.sqrt(disc) / abs(self.c)

    def with_c(self, c: float) -> "Params":
        return Params(self.sigma, self.A, float(c))

    def as_dict(self) -> dict:
        return {"sigma": self.sigma, "A": self.A, "c": self.c, "A1": self.a1, "A2": self.a2}


class Kind(str, enum.Enum):
    SMOOTH = "Smooth"
    PEAKED = "Peaked"
    CUSPED = "Cusped"
    ANTI_PEAKED = "AntiPeaked"
    ANTI_CUSPED = "AntiCusped"
    NO_WAVE = "NoWave"


class CrestKind(str, enum.Enum):
    SIMPLE_ZERO = "simple-zero"
    CORNER = "corner"
    POLE = "pole"


@dataclass(frozen=True)
class WaveClass:
    """Outcome of :func:`classify`.

    ``crest_value`` is max(phi) for upward waves and min(phi) for downward
    ones; both crest fields are ``None`` for :attr:`Kind.NO_WAVE`.
    """

    kind: Kind
    crest_value: float | None = None
    crest_kind: CrestKind | None = None

    @property
    def exists(self) -> bool:
        return self.kind is not Kind.NO_WAVE

    @property
    def is_smooth(self) -> bool:
        return self.kind is Kind.SMOOTH

    @property
    def orientation(self) -> int:
        """+1 if the profile is positive, -1 if negative, 0 for no wave."""
        if self.crest_value is None:
            return 0
        return 1 if self.crest_value > 0 else -1

    def as_dict(self) -> dict:
        return {
            "class": self.kind.value,
            "crest": self.crest_value,
            "crest_kind": None if self.crest_kind is None else self.crest_kind.value,
        }


NO_WAVE = WaveClass(Kind.NO_WAVE)

BRANCHES = ("smooth", "singular")


def _check_branch(branch: str) -> None:
    if branch not in BRANCHES:
        raise DomainError(f"branch must be one of {BRANCHES}, got {branch!r}")


def peakon_speed(sigma: float, A: float, side: int = 1) -> float:
    """Speed c = sigma*A1/(sigma-1) (or sigma*A2/(sigma-1) for side=-1) of the peaked wave."""
    if not sigma > 1:
        raise DomainError("peaked waves need sigma > 1")
    a1, a2 = shear_roots(A)
    return sigma * (a1 if side > 0 else a2) / (sigma - 1.0)


def admissible(p: Params) -> bool:
    """True when a solitary wave exists for ``p`` on some branch."""
    a1, a2 = p.roots
    if _close(p.c, a1) or _close(p.c, a2):
        return p.sigma < 0
    return p.c > a1 or p.c < a2


def classify(p: Params, branch: str = "smooth") -> WaveClass:
    """Wave class and crest of the solitary wave with parameters ``p``.

    For sigma < 0 and an admissible speed two waves coexist (one smooth, one
    with a cusp pointing the other way); ``branch`` picks one of them and is
    ignored otherwise. At c = A1 or c = A2 with sigma < 0 only the singular
    wave exists and it is returned whatever the branch.
    """
    _check_branch(branch)
    s, c = p.sigma, p.c
    a1, a2 = p.roots
    if not admissible(p):
        return NO_WAVE

    if s < 0:
        if _close(c, a1):
            return WaveClass(Kind.ANTI_CUSPED, c / s, CrestKind.POLE)
        if _close(c, a2):
            return WaveClass(Kind.CUSPED, c / s, CrestKind.POLE)
        if branch == "singular":
            kind = Kind.ANTI_CUSPED if c > a1 else Kind.CUSPED
            return WaveClass(kind, c / s, CrestKind.POLE)
        root = a1 if c > a1 else a2
        return WaveClass(Kind.SMOOTH, c - root, CrestKind.SIMPLE_ZERO)

    upward = c > a1
    root = a1 if upward else a2
    if s <= 1:
        return WaveClass(Kind.SMOOTH, c - root, CrestKind.SIMPLE_ZERO)

    threshold = s * root / (s - 1.0)
    if _close(c, threshold):
        kind = Kind.PEAKED if upward else Kind.ANTI_PEAKED
        return WaveClass(kind, c - root, CrestKind.CORNER)
    # smooth between the root and the threshold, singular beyond it
    if (c < threshold) == upward:
        return WaveClass(Kind.SMOOTH, c - root, CrestKind.SIMPLE_ZERO)
    kind = Kind.CUSPED if upward else Kind.ANTI_CUSPED
    return WaveClass(kind, c / s, CrestKind.POLE)
