"""Dirichlet sine eigenbasis of the box [0, L]^d.

Mode coefficients are stored as flat vectors in the *linearized* order:
modes sorted by eigenvalue, ties broken lexicographically on the
multi-index. Collocation happens on the interior grid
``xi_j = j * L / (M + 1)``, ``j = 1..M`` in each direction, where the
type-I discrete sine transform makes the sampled eigenfunctions exactly
orthonormal under the rectangle rule with weight ``(L / (M + 1))**d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.fft import dstn
from scipy.signal import fftconvolve

__all__ = [
    "SpectralBasis",
    "SpectralField",
    "GridField",
    "BasisMismatchError",
    "build_basis",
    "box_shells",
    "to_grid",
    "to_modes",
    "norm_H",
    "norm_Lp",
    "norm_Hneg",
    "heat_propagate",
    "sine_synthesis",
    "sine_analysis",
]


class BasisMismatchError(ValueError):
    """Two objects refer to different bases."""


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Sine eigenpairs of the Dirichlet Laplacian on ``[0, L]^d``.

    Use :func:`build_basis` rather than the constructor.
    """

    d: int
    L: float
    M: int
    modes: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    # sorted position -> C-order flat index into the (M,)*d coefficient tensor
    tensor_index: np.ndarray = field(repr=False)

    @property
    def key(self) -> tuple[int, float, int]:
        return (self.d, float(self.L), self.M)

    def __eq__(self, other):
        if not isinstance(other, SpectralBasis):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    @property
    def size(self) -> int:
        return self.M**self.d

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.M,) * self.d

    @property
    def grid_points(self) -> int:
        return self.M

    @property
    def cell_volume(self) -> float:
        return (self.L / (self.M + 1)) ** self.d

    def coordinates(self) -> np.ndarray:
        """1-D interior collocation coordinates (shared by every axis)."""
        return np.arange(1, self.M + 1) * self.L / (self.M + 1)

    def eigenfunction(self, index: int, xi: np.ndarray) -> np.ndarray:
        """Evaluate ``e_k`` at points ``xi`` of shape ``(..., d)``."""
        xi = np.atleast_2d(xi)
        k = self.modes[index]
        out = np.ones(xi.shape[:-1])
        for i in range(self.d):
            out = out * np.sqrt(2.0 / self.L) * np.sin(k[i] * np.pi * xi[..., i] / self.L)
        return out

    def metadata(self) -> dict:
        return {"d": self.d, "L": float(self.L), "M": self.M}

    @cached_property
    def shells(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct eigenvalues and their multiplicities."""
        vals, counts = np.unique(self.eigenvalues, return_counts=True)
        return vals, counts

    def zeros(self) -> "SpectralField":
        return SpectralField(self, np.zeros(self.size))

    def unit(self, index: int, amplitude: float = 1.0) -> "SpectralField":
        c = np.zeros(self.size)
        c[index] = amplitude
        return SpectralField(self, c)


def build_basis(d: int, L: float, M: int) -> SpectralBasis:
    """Build the sine basis with ``M`` modes per direction."""
    if d not in (1, 2, 3):
        raise ValueError(f"invalid dimension d={d}; expected 1, 2 or 3")
    if not L > 0:
        raise ValueError(f"box length must be positive, got L={L}")
    if int(M) != M or M < 2:
        raise ValueError(f"need at least 2 modes per direction, got M={M}")
    M = int(M)
    grids = np.meshgrid(*([np.arange(1, M + 1)] * d), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    # lexsort: last key is primary. Integer |k|^2 sorts exactly like the
    # eigenvalues and keeps degenerate eigenvalues bitwise equal.
    ksq = np.sum(idx**2, axis=1)
    eig = ksq * (np.pi / L) ** 2
    keys = [idx[:, i] for i in reversed(range(d))] + [ksq]
    order = np.lexsort(keys)
    return SpectralBasis(
        d=d,
        L=float(L),
        M=M,
        modes=idx[order],
        eigenvalues=eig[order],
        tensor_index=order,
    )


def box_shells(d: int, L: float, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct eigenvalues and multiplicities of the box without enumerating modes.

    Counts representations ``|k|^2 = k_1^2 + ... + k_d^2`` with ``1 <= k_i <= M``
    by repeated convolution of the indicator of squares.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"invalid dimension d={d}")
    sq = np.zeros(M * M + 1)
    sq[np.arange(1, M + 1) ** 2] = 1.0
    counts = sq
    for _ in range(d - 1):
        counts = np.rint(fftconvolve(counts, sq))
    n = np.nonzero(counts > 0.5)[0]
    return n * (np.pi / L) ** 2, counts[n].astype(np.int64)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """One state in mode coefficients."""

    basis: SpectralBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.basis.size,):
            raise ValueError(f"expected {self.basis.size} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite mode coefficients")
        object.__setattr__(self, "coeffs", c)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self.basis, other.basis)
        return SpectralField(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self.basis, other.basis)
        return SpectralField(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField(self.basis, a * self.coeffs)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class GridField:
    """One state as values on the interior collocation grid."""

    basis: SpectralBasis
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.basis.grid_shape:
            raise ValueError(f"expected grid of shape {self.basis.grid_shape}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite grid values")
        object.__setattr__(self, "values", v)


def _check_same(a: SpectralBasis, b: SpectralBasis) -> None:
    if a != b:
        raise BasisMismatchError(f"basis mismatch: {a.key} vs {b.key}")


def sine_synthesis(tensor: np.ndarray, d: int, L: float) -> np.ndarray:
    """Coefficient tensor (trailing ``d`` axes) -> interior grid values."""
    axes = tuple(range(-d, 0))
    return dstn(tensor, type=1, axes=axes) * (np.sqrt(2.0 / L) / 2.0) ** d


def sine_analysis(values: np.ndarray, d: int, L: float) -> np.ndarray:
    """Interior grid values (trailing ``d`` axes) -> coefficient tensor."""
    axes = tuple(range(-d, 0))
    M = values.shape[-1]
    h = L / (M + 1)
    return dstn(values, type=1, axes=axes) * (h * np.sqrt(2.0 / L) / 2.0) ** d


def coeffs_to_tensor(basis: SpectralBasis, coeffs: np.ndarray) -> np.ndarray:
    """Scatter flat (batched) coefficients into the ``(..., M, ..., M)`` tensor."""
    lead = coeffs.shape[:-1]
    flat = np.zeros(lead + (basis.size,))
    flat[..., basis.tensor_index] = coeffs
    return flat.reshape(lead + basis.grid_shape)


def tensor_to_coeffs(basis: SpectralBasis, tensor: np.ndarray) -> np.ndarray:
    lead = tensor.shape[: tensor.ndim - basis.d]
    return tensor.reshape(lead + (basis.size,))[..., basis.tensor_index]


def to_grid(field: SpectralField) -> GridField:
    b = field.basis
    return GridField(b, sine_synthesis(coeffs_to_tensor(b, field.coeffs), b.d, b.L))


def to_modes(field: GridField) -> SpectralField:
    b = field.basis
    return SpectralField(b, tensor_to_coeffs(b, sine_analysis(field.values, b.d, b.L)))


def norm_H(x: SpectralField) -> float:
    return float(np.sqrt(np.sum(x.coeffs**2)))


def norm_Lp(x: GridField, p: float) -> float:
    """Rectangle-rule ``L^p`` norm on the interior grid."""
    if not p >= 1:
        raise ValueError(f"need p >= 1, got {p}")
    w = x.basis.cell_volume
    return float((w * np.sum(np.abs(x.values) ** p)) ** (1.0 / p))


def norm_Hneg(x: SpectralField, s: float) -> float:
    if not s > 0:
        raise ValueError(f"need s > 0, got {s}")
    return float(np.sqrt(np.sum(x.coeffs**2 * x.basis.eigenvalues ** (-s))))


def heat_propagate(x: SpectralField, t: float) -> SpectralField:
    """Apply the heat semigroup ``e^{tA}`` (mode-wise decay ``e^{-alpha_k t}``)."""
    if t < 0:
        raise ValueError(f"negative time t={t}")
    return SpectralField(x.basis, np.exp(-x.basis.eigenvalues * t) * x.coeffs)
