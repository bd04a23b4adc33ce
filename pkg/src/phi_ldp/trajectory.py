"""Time-indexed sequences of mode-coefficient states."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralBasis, SpectralField

__all__ = ["Trajectory", "Control", "uniform_times"]


def uniform_times(T: float, steps: int) -> np.ndarray:
    if not T > 0:
        raise ValueError(f"horizon must be positive, got T={T}")
    if steps < 1:
        raise ValueError("need at least one time step")
    return np.linspace(0.0, T, steps + 1)


def _check_grid(times: np.ndarray) -> None:
    if times.ndim != 1 or times.size < 2:
        raise ValueError("time grid needs at least two points")
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must start at 0 and increase strictly")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``u(t_j)`` on ``0 = t_0 < ... < t_N = T``; ``states`` has shape ``(N+1, K)``."""

    basis: SpectralBasis | None
    times: np.ndarray
    states: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        _check_grid(times)
        if states.ndim != 2 or states.shape[0] != times.size:
            raise ValueError(f"states shape {states.shape} does not match {times.size} times")
        if not np.all(np.isfinite(states)):
            raise ValueError("non-finite trajectory state")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> float:
        """Uniform step; raises on a non-uniform grid."""
        h = np.diff(self.times)
        if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
            raise ValueError("non-uniform time grid")
        return float(self.T / self.steps)

    def state(self, j: int) -> SpectralField:
        return SpectralField(self.basis, self.states[j])

    @property
    def final(self) -> SpectralField:
        return self.state(-1)

    def sup_norm(self, s: float | None = None) -> float:
        """``sup_t |u(t)|_H`` or ``sup_t |u(t)|_{H^-s}`` over the grid."""
        if s is None:
            return float(np.max(np.sqrt(np.sum(self.states**2, axis=1))))
        w = self.basis.eigenvalues ** (-s)
        return float(np.max(np.sqrt(np.sum(w * self.states**2, axis=1))))


@dataclass(frozen=True, eq=False)
class Control:
    """Piecewise-constant control: ``values[j]`` acts on ``[t_j, t_{j+1})``.

    ``values`` has shape ``(N, K)``, one row per interval.
    """

    basis: SpectralBasis
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        _check_grid(times)
        if values.shape != (times.size - 1, self.basis.size):
            raise ValueError(
                f"control values must have shape {(times.size - 1, self.basis.size)}, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite control")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, basis: SpectralBasis, T: float, steps: int) -> "Control":
        return cls(basis, uniform_times(T, steps), np.zeros((steps, basis.size)))

    @classmethod
    def from_function(cls, basis: SpectralBasis, T: float, steps: int, fn) -> "Control":
        """Sample ``fn(t) -> coefficient vector`` at left endpoints."""
        times = uniform_times(T, steps)
        vals = np.array([np.asarray(fn(t), dtype=float) for t in times[:-1]])
        return cls(basis, times, vals.reshape(steps, basis.size))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> float:
        h = np.diff(self.times)
        if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
            raise ValueError("non-uniform control grid")
        return float(self.T / self.steps)

    def l2_norm_squared(self) -> float:
        return float(np.sum(np.diff(self.times)[:, None] * self.values**2))

    def refine(self, factor: int) -> "Control":
        """Same piecewise-constant function on a grid ``factor`` times finer."""
        times = uniform_times(self.T, self.steps * factor)
        return Control(self.basis, times, np.repeat(self.values, factor, axis=0))

    def __add__(self, other: "Control") -> "Control":
        if other.values.shape != self.values.shape:
            raise ValueError("control grids differ")
        return Control(self.basis, self.times, self.values + other.values)

    def __mul__(self, a: float) -> "Control":
        return Control(self.basis, self.times, a * self.values)

    __rmul__ = __mul__
