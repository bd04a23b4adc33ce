"""Polynomial reaction term ``f(r) = -r^(2n+1) + lambda1*r + lambda2``.

``F`` is the pointwise composition operator; ``F_N`` evaluates ``f`` at the
argument clamped to ``[-N, N]``.  In mode space the nonlinearity is
evaluated pseudo-spectrally on a grid refined by the factor ``n + 1``,
which removes the aliasing of the degree-``2n+1`` power onto retained modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    GridField,
    SpectralBasis,
    coeffs_to_tensor,
    sine_analysis,
    sine_synthesis,
    tensor_to_coeffs,
)

__all__ = [
    "PolynomialDrift",
    "MissingTruncationError",
    "f",
    "f_prime",
    "apply_F",
    "apply_F_N",
    "dissipativity_constant",
    "dissipativity_gap",
    "ModalNonlinearity",
]


class MissingTruncationError(ValueError):
    pass


@dataclass(frozen=True)
class PolynomialDrift:
    """Drift parameters.

    ``nonlinear=False`` drops the ``-r^(2n+1)`` term, leaving the affine part
    ``lambda1*r + lambda2`` (with both zero, ``F`` vanishes identically).
    """

    n: int = 1
    lambda1: float = 0.0
    lambda2: float = 0.0
    truncation: float | None = None
    nonlinear: bool = True
    dealias: bool = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"degree parameter n must be a positive integer, got {self.n}")
        if self.truncation is not None and not self.truncation > 0:
            raise ValueError(f"truncation level must be positive, got {self.truncation}")

    @property
    def p_n(self) -> float:
        return 2.0 * (self.n + 1)

    @property
    def q_n(self) -> float:
        return 2.0 * (self.n + 1) / (2 * self.n + 1)

    @property
    def is_zero(self) -> bool:
        return not self.nonlinear and self.lambda1 == 0.0 and self.lambda2 == 0.0

    @property
    def is_odd(self) -> bool:
        return self.lambda2 == 0.0

    def lipschitz_truncated(self) -> float:
        """``sup_{|r| <= N} |f'(r)|`` for the truncated drift."""
        if self.truncation is None:
            raise MissingTruncationError("drift has no truncation level")
        N = self.truncation
        return max(abs(f_prime(0.0, self)), abs(f_prime(N, self)))

    @classmethod
    def from_config(cls, cfg: dict) -> "PolynomialDrift":
        return cls(
            n=int(cfg.get("n", 1)),
            lambda1=float(cfg.get("lambda1", 0.0)),
            lambda2=float(cfg.get("lambda2", 0.0)),
            truncation=cfg.get("truncation_N"),
            nonlinear=bool(cfg.get("nonlinear", True)),
            dealias=bool(cfg.get("dealias", True)),
        )


def f(r, drift: PolynomialDrift):
    r = np.asarray(r, dtype=float)
    out = drift.lambda1 * r + drift.lambda2
    if drift.nonlinear:
        out = out - r ** (2 * drift.n + 1)
    return out


def f_prime(r, drift: PolynomialDrift):
    r = np.asarray(r, dtype=float)
    out = np.full_like(r, drift.lambda1)
    if drift.nonlinear:
        out = out - (2 * drift.n + 1) * r ** (2 * drift.n)
    return out


def _f_truncated(r, drift: PolynomialDrift, N: float):
    return f(np.clip(r, -N, N), drift)


def _f_prime_truncated(r, drift: PolynomialDrift, N: float):
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) <= N, f_prime(r, drift), 0.0)


def apply_F(x: GridField, drift: PolynomialDrift) -> GridField:
    return GridField(x.basis, f(x.values, drift))


def apply_F_N(x: GridField, drift: PolynomialDrift) -> GridField:
    if drift.truncation is None:
        raise MissingTruncationError("apply_F_N needs drift.truncation")
    return GridField(x.basis, _f_truncated(x.values, drift, drift.truncation))


def dissipativity_constant(n: int) -> float:
    # (r^(2n+1) - s^(2n+1))(r - s) >= 2^(-2n) (r - s)^(2n+2)
    return 2.0 ** (-2 * n)


def dissipativity_gap(x: GridField, y: GridField, drift: PolynomialDrift) -> tuple[float, float]:
    """Quadrature values of both sides of the monotonicity estimate.

    Returns ``(lhs, rhs)`` with ``lhs = <F(x) - F(y), x - y>`` and
    ``rhs = -2^(-2n) |x - y|_{p_n}^{p_n} + lambda1 |x - y|_H^2``.
    """
    if x.basis != y.basis:
        raise ValueError("grid mismatch between the two fields")
    w = x.basis.cell_volume
    diff = x.values - y.values
    lhs = w * np.sum((f(x.values, drift) - f(y.values, drift)) * diff)
    c = dissipativity_constant(drift.n)
    rhs = -c * w * np.sum(np.abs(diff) ** drift.p_n) + drift.lambda1 * w * np.sum(diff**2)
    return float(lhs), float(rhs)


class ModalNonlinearity:
    """``F`` acting on (batched) mode-coefficient vectors.

    With padding factor ``q`` the evaluation grid has ``q(M+1) - 1`` interior
    points per direction.  The map ``c -> P S^T diag(f(S c))`` has a symmetric
    Jacobian ``h P S^T diag(f'(S c)) S P^T``, so :meth:`jacobian_transpose`
    is also the forward linearization.
    """

    def __init__(self, basis: SpectralBasis, drift: PolynomialDrift, dealias: bool | None = None):
        self.basis = basis
        self.drift = drift
        if dealias is None:
            dealias = drift.dealias
        q = drift.n + 1 if (dealias and drift.nonlinear) else 1
        self.pad = q
        self.fine_M = q * (basis.M + 1) - 1
        self.last_max_abs = 0.0

    def _synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        b = self.basis
        t = coeffs_to_tensor(b, coeffs)
        if self.pad > 1:
            lead = t.shape[: t.ndim - b.d]
            big = np.zeros(lead + (self.fine_M,) * b.d)
            big[(...,) + (slice(0, b.M),) * b.d] = t
            t = big
        return sine_synthesis(t, b.d, b.L)

    def _analyze(self, values: np.ndarray) -> np.ndarray:
        b = self.basis
        t = sine_analysis(values, b.d, b.L)
        if self.pad > 1:
            t = t[(...,) + (slice(0, b.M),) * b.d]
        return tensor_to_coeffs(b, np.ascontiguousarray(t))

    def _fvals(self, v):
        N = self.drift.truncation
        return f(v, self.drift) if N is None else _f_truncated(v, self.drift, N)

    def _fprime(self, v):
        N = self.drift.truncation
        return f_prime(v, self.drift) if N is None else _f_prime_truncated(v, self.drift, N)

    def grid_values(self, coeffs: np.ndarray) -> np.ndarray:
        return self._synthesize(coeffs)

    def __call__(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        if self.drift.is_zero:
            self.last_max_abs = 0.0
            return np.zeros_like(coeffs)
        v = self._synthesize(coeffs)
        self.last_max_abs = float(np.max(np.abs(v))) if v.size else 0.0
        return self._analyze(self._fvals(v))

    def jacobian_transpose(self, coeffs: np.ndarray, p: np.ndarray) -> np.ndarray:
        """``DF(coeffs)^T p`` (equal to ``DF(coeffs) p``)."""
        if self.drift.is_zero:
            return np.zeros_like(np.asarray(p, dtype=float))
        v = self._synthesize(coeffs)
        return self._analyze(self._fprime(v) * self._synthesize(p))
