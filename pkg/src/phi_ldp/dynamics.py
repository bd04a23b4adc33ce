"""Exponential-Euler integrators for the skeleton, stochastic and controlled equations.

One step of size ``h`` on mode ``k``::

    u_k <- e^{-alpha_k h} u_k + (1 - e^{-alpha_k h}) / alpha_k * (F(u)_k + g_k) + noise_k

where ``g`` is the (piecewise-constant, left-endpoint) control and the noise
term is the exact Ornstein-Uhlenbeck increment scaled by ``sqrt(eps)``.
The linear part is exact, so there is no stability restriction on ``h``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .noise import NoiseModel, as_generator, ou_coefficients
from .nonlinearity import ModalNonlinearity, PolynomialDrift, f_prime
from .spectral import SpectralBasis, SpectralField, coeffs_to_tensor, sine_synthesis
from .trajectory import Control, Trajectory, uniform_times

__all__ = [
    "NumericalFailure",
    "BlowUpError",
    "AccuracyWarning",
    "StepPlan",
    "integrate",
    "solve_skeleton",
    "solve_stochastic",
    "solve_controlled",
    "convolution_map",
    "LINEAR_HEAT",
]

#: drift with ``F == 0``: the plain heat equation
LINEAR_HEAT = PolynomialDrift(nonlinear=False)


class NumericalFailure(RuntimeError):
    """Blow-up or non-convergence."""


class BlowUpError(NumericalFailure):
    def __init__(self, step: int, time: float):
        super().__init__(f"non-finite state at step {step} (t={time:.6g})")
        self.step = step
        self.time = time


class AccuracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class StepPlan:
    """Time grid shared by the solver and a piecewise-constant control."""

    T: float
    steps: int
    control_factor: int = 1

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @classmethod
    def make(cls, T: float, dt: float, control: Control | None = None) -> "StepPlan":
        if not dt > 0:
            raise ValueError(f"need dt > 0, got {dt}")
        if control is not None:
            T = control.T
        steps = int(round(T / dt))
        if steps < 1 or not math.isclose(steps * dt, T, rel_tol=1e-9):
            raise ValueError(f"dt={dt} does not divide the horizon T={T}")
        factor = 1
        if control is not None:
            if steps % control.steps:
                raise ValueError(f"dt={dt} does not divide the control grid ({control.steps} intervals)")
            factor = steps // control.steps
        return cls(float(T), steps, factor)


def _lp_integrand(v: np.ndarray, cell: float, p: float) -> np.ndarray:
    axes = tuple(range(1, v.ndim))
    return cell * np.sum(np.abs(v) ** p, axis=axes)


def integrate(
    basis: SpectralBasis,
    x: np.ndarray,
    drift: PolynomialDrift,
    plan: StepPlan,
    *,
    control: np.ndarray | None = None,
    eps: float = 0.0,
    noise: NoiseModel | None = None,
    rng=None,
    output_stride: int = 1,
    monitor: bool = True,
) -> tuple[np.ndarray, dict]:
    """Core batched loop.

    ``x`` has shape ``(K,)`` or ``(R, K)``; ``control`` (already shaped by any
    covariance factor) has shape ``(n_control, K)``.  Returns the recorded
    states ``(..., n_out, K)`` and a diagnostics dict.
    """
    if eps < 0:
        raise ValueError(f"noise intensity must be >= 0, got {eps}")
    if plan.steps % output_stride:
        raise ValueError("output_stride must divide the number of steps")
    u = np.array(x, dtype=float)
    batched = u.ndim == 2
    if not batched:
        u = u[None, :]
    R, K = u.shape
    if K != basis.size:
        raise ValueError(f"state has {K} coefficients, basis has {basis.size}")
    dt = plan.dt
    eig = basis.eigenvalues
    E = np.exp(-eig * dt)
    W = -np.expm1(-eig * dt) / eig
    nl = ModalNonlinearity(basis, drift)
    stochastic = eps > 0
    if stochastic:
        if noise is None or rng is None:
            raise ValueError("eps > 0 needs a noise model and an rng")
        if noise.eigenvalues.size != K:
            raise ValueError("noise model and basis sizes differ")
        _, std = ou_coefficients(eig, noise.mode_amps, dt)
        std = math.sqrt(eps) * std
        gen = as_generator(rng)

    n_out = plan.steps // output_stride + 1
    out = np.empty((R, n_out, K))
    out[:, 0] = u
    sup_h = np.sqrt(np.sum(u * u, axis=1))
    lp_int = np.zeros(R)
    max_abs = 0.0
    warned = False
    p = drift.p_n
    cell_fine = (basis.L / (nl.fine_M + 1)) ** basis.d

    def grid(c):
        if not drift.is_zero:
            return nl._synthesize(c)
        return sine_synthesis(coeffs_to_tensor(basis, c), basis.d, basis.L)

    prev_lp = None
    for j in range(plan.steps):
        if drift.is_zero:
            Fu = 0.0
            v = grid(u) if monitor else None
        else:
            v = nl._synthesize(u)
            Fu = nl._analyze(nl._fvals(v))
        if v is not None:
            m = float(np.max(np.abs(v)))
            max_abs = max(max_abs, m)
            if not warned and drift.nonlinear and abs(float(f_prime(m, drift))) * dt > 1.0:
                warnings.warn(
                    f"step {j}: |f'(max|u|)|*dt = {abs(float(f_prime(m, drift))) * dt:.3g} > 1; "
                    "exponential Euler is stable but inaccurate here",
                    AccuracyWarning,
                    stacklevel=3,
                )
                warned = True
            if monitor:
                cell = cell_fine if not drift.is_zero else basis.cell_volume
                cur = _lp_integrand(v, cell, p)
                if prev_lp is not None:
                    lp_int += 0.5 * dt * (prev_lp + cur)
                prev_lp = cur
        g = Fu
        if control is not None:
            g = g + control[j // plan.control_factor]
        u = E * u + W * g
        if stochastic:
            u = u + std * gen.standard_normal((R, K))
        if not np.all(np.isfinite(u)):
            raise BlowUpError(j + 1, (j + 1) * dt)
        sup_h = np.maximum(sup_h, np.sqrt(np.sum(u * u, axis=1)))
        if (j + 1) % output_stride == 0:
            out[:, (j + 1) // output_stride] = u
    if monitor:
        v = grid(u)
        cell = cell_fine if not drift.is_zero else basis.cell_volume
        cur = _lp_integrand(v, cell, p)
        if prev_lp is not None:
            lp_int += 0.5 * dt * (prev_lp + cur)
        max_abs = max(max_abs, float(np.max(np.abs(v))))

    diag = {"sup_H": sup_h if batched else float(sup_h[0]), "max_abs": max_abs}
    if monitor:
        diag["int_Lp_pow"] = lp_int if batched else float(lp_int[0])
    return (out if batched else out[0]), diag


def _trajectory(basis, plan, stride, states, diag) -> Trajectory:
    times = uniform_times(plan.T, plan.steps)[::stride]
    return Trajectory(basis, times, states, diag)


def solve_skeleton(
    x: SpectralField,
    phi: Control | None,
    drift: PolynomialDrift,
    dt: float,
    *,
    T: float | None = None,
    output_stride: int = 1,
    amplitudes: np.ndarray | None = None,
) -> Trajectory:
    """Deterministic controlled equation ``u' = Au + F(u) + B phi``.

    ``phi=None`` means no control (then ``T`` is required).  ``amplitudes``
    is an optional per-mode factor ``B`` applied to the control.
    """
    if phi is None and T is None:
        raise ValueError("without a control the horizon T must be given")
    plan = StepPlan.make(T if T is not None else phi.T, dt, phi)
    ctrl = None
    if phi is not None:
        if phi.basis != x.basis:
            raise ValueError("control and initial state live on different bases")
        ctrl = phi.values if amplitudes is None else amplitudes * phi.values
    states, diag = integrate(x.basis, x.coeffs, drift, plan, control=ctrl, output_stride=output_stride)
    return _trajectory(x.basis, plan, output_stride, states, diag)


def solve_stochastic(
    x: SpectralField,
    eps: float,
    noise: NoiseModel,
    drift: PolynomialDrift,
    dt: float,
    rng,
    *,
    T: float = 1.0,
    output_stride: int = 1,
) -> Trajectory:
    """``du = [Au + F(u)] dt + sqrt(eps) dw^delta``; ``eps=0`` is the uncontrolled skeleton."""
    return solve_controlled(x, eps, None, noise, drift, dt, rng, T=T, output_stride=output_stride)


def solve_controlled(
    x: SpectralField,
    eps: float,
    phi: Control | None,
    noise: NoiseModel,
    drift: PolynomialDrift,
    dt: float,
    rng,
    *,
    T: float = 1.0,
    output_stride: int = 1,
) -> Trajectory:
    """``du = [Au + F(u) + Q_delta phi] dt + sqrt(eps) dw^delta``."""
    plan = StepPlan.make(T, dt, phi)
    ctrl = None
    if phi is not None:
        ctrl = noise.apply_Q(phi.values)
    states, diag = integrate(
        x.basis, x.coeffs, drift, plan, control=ctrl, eps=eps, noise=noise, rng=rng, output_stride=output_stride
    )
    return _trajectory(x.basis, plan, output_stride, states, diag)


def convolution_map(phi: Control, dt: float | None = None) -> Trajectory:
    """``Phi(phi)(t) = int_0^t e^{(t-s)A} phi(s) ds`` (skeleton with ``F = 0``, ``x = 0``)."""
    return solve_skeleton(phi.basis.zeros(), phi, LINEAR_HEAT, dt if dt is not None else phi.dt)
