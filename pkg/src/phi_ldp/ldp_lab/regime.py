"""Joint scalings ``delta = delta(eps)`` and their regime classification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..noise import Lambda_theta

__all__ = ["ScalingFamily", "RegimeClassification", "classify_regime", "eps_Lambda", "direct_regime_check"]


@dataclass(frozen=True)
class ScalingFamily:
    """``delta(eps) = eps^a``, or a constant ``fixed_delta`` when that is set."""

    a: float
    d: int
    alpha: float = 0.0
    fixed_delta: float | None = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"scaling exponent must be positive, got a={self.a}")
        if self.d < 1 or self.alpha < 0:
            raise ValueError("need d >= 1 and alpha >= 0")
        if self.fixed_delta is not None and not 0 < self.fixed_delta < 1:
            raise ValueError("fixed delta must lie in (0, 1)")

    @property
    def growth(self) -> float:
        """Exponent ``d - 2 + alpha`` of the noise-moment divergence."""
        return self.d - 2 + self.alpha

    @property
    def log_case(self) -> bool:
        return self.d == 2 and self.alpha == 0

    def delta(self, eps: float) -> float:
        if self.fixed_delta is not None:
            return self.fixed_delta
        return float(eps) ** self.a


@dataclass(frozen=True)
class RegimeClassification:
    # names follow the two scaling conditions of the LDP theorem:
    # eps * Lambda(delta(eps)) -> 0  and  eps * delta(eps)^(-gamma) -> 0
    holds_rd46: bool
    holds_rd5050: bool | None

    def lines(self) -> list[str]:
        out = [f"rd46: {'holds' if self.holds_rd46 else 'fails'}"]
        if self.holds_rd5050 is not None:
            out.append(f"rd5050: {'holds' if self.holds_rd5050 else 'fails'}")
        return out


def classify_regime(family: ScalingFamily, gamma_opt: float | None = None) -> RegimeClassification:
    """Exact power-law classification.

    ``eps Lambda(eps^a) -> 0`` iff ``a (d-2+alpha) < 1`` (always in the
    logarithmic case ``d=2, alpha=0``, and whenever the growth exponent is
    not positive); ``eps eps^(-a gamma) -> 0`` iff ``a gamma < 1``.
    """
    if family.fixed_delta is not None:
        return RegimeClassification(True, None if gamma_opt is None else True)
    e = family.growth
    holds46 = family.log_case or e <= 0 or family.a * e < 1
    holds50 = None
    if gamma_opt is not None:
        if not gamma_opt > e:
            raise ValueError(f"gamma must exceed d-2+alpha={e}, got {gamma_opt}")
        holds50 = family.a * gamma_opt < 1
    return RegimeClassification(bool(holds46), holds50)


def eps_Lambda(family: ScalingFamily, j_max: int = 20) -> np.ndarray:
    """``eps Lambda(delta(eps))`` along ``eps = 2^-j``, ``j = 1..j_max``."""
    out = []
    for j in range(1, j_max + 1):
        eps = 2.0**-j
        out.append(eps * Lambda_theta(family.delta(eps), 0.0, family.d, family.alpha))
    return np.array(out)


def _monotone_to_zero(v: np.ndarray, rtol: float = 1e-12, tail_drop: float = 1e-9) -> bool:
    # power laws and logarithms are eventually strictly monotone, so a
    # sequence that still tends to zero keeps shrinking at the end of the grid,
    # while a constant one (the borderline exponent) does not
    nonincreasing = bool(np.all(v[1:] <= v[:-1] * (1 + rtol)))
    return nonincreasing and bool(v[-1] <= v[-2] * (1 - tail_drop))


def direct_regime_check(family: ScalingFamily, gamma_opt: float | None = None, j_max: int = 20) -> RegimeClassification:
    """Classify by evaluating the products on the dyadic grid instead of by exponents.

    A sequence counts as tending to zero when it is nonincreasing and still
    strictly decreasing at the end of the grid.
    """
    h46 = _monotone_to_zero(eps_Lambda(family, j_max))
    h50 = None
    if gamma_opt is not None:
        eps = 2.0 ** -np.arange(1, j_max + 1)
        v = np.array([e * family.delta(e) ** (-gamma_opt) for e in eps])
        h50 = _monotone_to_zero(v)
    return RegimeClassification(h46, h50)


def a_grid(lo: float = 0.1, hi: float = 3.0, step: float = 0.1) -> list[float]:
    n = int(math.floor((hi - lo) / step + 0.5))
    return [round(lo + k * step, 10) for k in range(n + 1)]
