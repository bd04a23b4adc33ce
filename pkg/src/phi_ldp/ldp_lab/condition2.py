"""Convergence of controlled stochastic paths to the skeleton path.

For a family of controls ``phi_eps -> phi`` (weakly) and ``delta = delta(eps)``,
the experiment estimates ``E max_j |u_eps(t_j) - u(t_j)|`` where ``u_eps``
solves the controlled stochastic equation driven by ``phi_eps`` and ``u`` is
the skeleton path driven by ``phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from ..action import control_cost
from ..dynamics import StepPlan, integrate
from ..noise import RngStream
from ..parallel import block_sizes, map_blocks
from ..spectral import SpectralField
from ..trajectory import Control
from .events import ModelSetup
from .regime import ScalingFamily

__all__ = [
    "Schedule",
    "CostClampError",
    "no_perturbation",
    "oscillatory_schedule",
    "Condition2Row",
    "Condition2Table",
    "condition2_experiment",
]

Schedule = Callable[[float, Control], Control]


class CostClampError(ValueError):
    """A perturbed control leaves the admissible set ``{int |phi|^2 <= gamma}``."""


def no_perturbation(eps: float, phi: Control) -> Control:
    return phi


def oscillatory_schedule(amplitude: float = 1.0, mode: int = 0, steps: int | None = None) -> Schedule:
    """``phi_eps(t) = phi(t) + amplitude * sin(t / eps) e_mode``.

    The perturbation converges weakly (not strongly) to zero as ``eps -> 0``.
    ``steps`` refines the control grid (left-endpoint sampling).
    """

    def schedule(eps: float, phi: Control) -> Control:
        n = steps or phi.steps
        if n % phi.steps:
            raise ValueError("refined grid must be a multiple of the control grid")
        base = phi.refine(n // phi.steps)
        t = base.times[:-1]
        vals = base.values.copy()
        vals[:, mode] += amplitude * np.sin(t / eps)
        return Control(phi.basis, base.times, vals)

    return schedule


@dataclass(frozen=True)
class Condition2Row:
    eps: float
    delta: float
    gap: float
    stderr: float
    reps: int


@dataclass(frozen=True)
class Condition2Table:
    rows: list[Condition2Row]
    kendall_tau: float
    norm: float | None

    def gaps(self) -> np.ndarray:
        return np.array([r.gap for r in self.rows])

    def strictly_decreasing(self) -> bool:
        g = self.gaps()
        return bool(np.all(np.diff(g) < 0))

    def summary(self) -> dict:
        return {
            "norm_s": self.norm,
            "kendall_tau": self.kendall_tau,
            "strictly_decreasing": self.strictly_decreasing(),
            "rows": [r.__dict__ for r in self.rows],
        }


def condition2_experiment(
    x: SpectralField,
    phi: Control,
    schedule: Schedule,
    eps_grid,
    family: ScalingFamily,
    setup: ModelSetup,
    reps: int,
    seed: int,
    *,
    s: float | None = 0.5,
    gamma: float | None = None,
    threads: int | None = 1,
) -> Condition2Table:
    """Table of ``(eps, E sup_t |u_eps^{x,phi_eps} - u^{x,phi}|)`` in ``H^-s`` (``s=None``: ``H``).

    ``gamma`` clamps the admissible control energy ``int_0^T |phi_eps|^2``;
    a schedule that exceeds it is rejected.  The trend statistic is Kendall's
    tau between grid position and gap (``-1`` for a gap that shrinks along
    the grid).
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(b >= a for a, b in zip(eps_grid, eps_grid[1:])):
        raise ValueError("eps grid must decrease strictly")
    basis = setup.basis
    plan = StepPlan.make(phi.T, setup.dt, phi)
    stride = setup.output_stride
    ref, _ = integrate(basis, x.coeffs, setup.drift, plan, control=phi.values, output_stride=stride, monitor=False)
    w = np.ones(basis.size) if s is None else basis.eigenvalues ** (-float(s))
    rows = []
    for i, eps in enumerate(eps_grid):
        phi_eps = schedule(eps, phi)
        if gamma is not None and 2.0 * control_cost(phi_eps) > gamma:
            raise CostClampError(f"eps={eps}: control energy {2 * control_cost(phi_eps):.4g} exceeds gamma={gamma}")
        delta = family.delta(eps)
        noise = setup.noise(delta)
        ctrl = noise.apply_Q(phi_eps.values)
        plan_eps = StepPlan.make(phi.T, setup.dt, phi_eps)
        sizes = block_sizes(reps, setup.block)
        stream = RngStream(seed, (i,))

        def run(b, eps=eps, noise=noise, ctrl=ctrl, plan_eps=plan_eps, stream=stream, sizes=sizes):
            xb = np.broadcast_to(x.coeffs, (sizes[b], basis.size))
            paths, _ = integrate(
                basis,
                xb,
                setup.drift,
                plan_eps,
                control=ctrl,
                eps=eps,
                noise=noise,
                rng=stream.child(b),
                output_stride=stride,
                monitor=False,
            )
            diff = paths - ref
            return np.sqrt(np.sum(w * diff * diff, axis=-1)).max(axis=1)

        sup = np.concatenate(map_blocks(run, len(sizes), threads))
        rows.append(Condition2Row(eps, delta, float(sup.mean()), float(sup.std(ddof=1) / math.sqrt(reps)), reps))
    gaps = [r.gap for r in rows]
    tau = float(stats.kendalltau(np.arange(len(gaps)), gaps)[0]) if len(gaps) > 1 else float("nan")
    return Condition2Table(rows, tau, s)
