"""Rare events, model setups and plain Monte Carlo probability estimates."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..dynamics import StepPlan, integrate
from ..noise import NoiseModel, RngStream
from ..nonlinearity import PolynomialDrift
from ..parallel import block_sizes, map_blocks
from ..spectral import SpectralBasis, SpectralField
from .regime import ScalingFamily

log = logging.getLogger(__name__)

__all__ = [
    "ModelSetup",
    "EventSpec",
    "ProbabilityEstimate",
    "wilson_interval",
    "estimate_probability",
    "FeasibilityWarning",
]

Z95 = float(stats.norm.ppf(0.975))
EVENT_KINDS = ("ball", "path_exceedance", "terminal_exceedance")


class FeasibilityWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class ModelSetup:
    """Everything except ``(eps, delta)`` needed to run replicas."""

    basis: SpectralBasis
    drift: PolynomialDrift
    x0: SpectralField
    T: float = 1.0
    dt: float = 1.0 / 256
    beta: float = 1.0
    output_stride: int = 1
    block: int = 250

    @property
    def plan(self) -> StepPlan:
        return StepPlan.make(self.T, self.dt)

    def noise(self, delta: float) -> NoiseModel:
        return NoiseModel(self.basis, delta, self.beta)

    def deterministic_path(self) -> np.ndarray:
        states, _ = integrate(
            self.basis, self.x0.coeffs, self.drift, self.plan, output_stride=self.output_stride, monitor=False
        )
        return states


@dataclass(frozen=True, eq=False)
class EventSpec:
    """A measurable set of trajectories.

    * ``ball``: ``|u(T) - target| <= radius``;
    * ``path_exceedance``: ``max_j |u(t_j) - ubar(t_j)| >= radius`` over the output grid;
    * ``terminal_exceedance``: ``|u(T) - ubar(T)| >= radius``;

    where ``ubar`` is the zero-noise path.  ``norm`` is ``None`` (``H``) or
    ``s`` (``H^-s``); ``modes`` optionally restricts the norm to a subset of
    (linearized) mode indices.
    """

    kind: str = "ball"
    radius: float = 1.0
    norm: float | None = None
    target: SpectralField | None = None
    modes: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}; expected one of {EVENT_KINDS}")
        if not self.radius > 0:
            raise ValueError("event radius must be positive (a zero-radius event is degenerate)")
        if self.kind == "ball" and self.target is None:
            raise ValueError("a ball event needs a target")

    def weights(self, basis: SpectralBasis) -> np.ndarray:
        w = np.ones(basis.size) if self.norm is None else basis.eigenvalues ** (-float(self.norm))
        if self.modes is not None:
            mask = np.zeros(basis.size)
            mask[list(self.modes)] = 1.0
            w = w * mask
        return w

    def indicator(self, paths: np.ndarray, reference: np.ndarray, basis: SpectralBasis) -> np.ndarray:
        """Event occurrence for ``paths`` of shape ``(R, n_out, K)``."""
        w = self.weights(basis)
        if self.kind == "ball":
            diff = paths[:, -1] - self.target.coeffs
            return np.sqrt(np.sum(w * diff * diff, axis=-1)) <= self.radius
        if self.kind == "terminal_exceedance":
            diff = paths[:, -1] - reference[-1]
            return np.sqrt(np.sum(w * diff * diff, axis=-1)) >= self.radius
        diff = paths - reference
        return np.sqrt(np.sum(w * diff * diff, axis=-1)).max(axis=1) >= self.radius


@dataclass(frozen=True)
class ProbabilityEstimate:
    p_hat: float
    ci_low: float
    ci_high: float
    hits: int
    reps: int
    censored: bool

    @property
    def rate(self) -> float:
        """``-log p_hat`` (infinite for a censored estimate)."""
        return -math.log(self.p_hat) if self.p_hat > 0 else math.inf


def wilson_interval(hits: int, n: int, z: float = Z95) -> tuple[float, float]:
    p = hits / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return lo, hi


def _count_hits(event, eps, noise, setup, reference, sizes, stream, threads) -> int:
    plan = setup.plan

    def run(b):
        x = np.broadcast_to(setup.x0.coeffs, (sizes[b], setup.basis.size))
        paths, _ = integrate(
            setup.basis,
            x,
            setup.drift,
            plan,
            eps=eps,
            noise=noise,
            rng=stream.child(b),
            output_stride=setup.output_stride,
            monitor=False,
        )
        return int(np.count_nonzero(event.indicator(paths, reference, setup.basis)))

    return sum(map_blocks(run, len(sizes), threads))


def estimate_probability(
    event: EventSpec,
    eps: float,
    family: ScalingFamily,
    setup: ModelSetup,
    reps: int,
    rng: RngStream,
    *,
    threads: int | None = 1,
) -> ProbabilityEstimate:
    """Plain Monte Carlo estimate of ``P(u_eps in event)`` with ``delta = delta(eps)``.

    Replicas run in blocks of ``setup.block`` with streams ``rng.child(block)``,
    so the result does not depend on the thread count.  Zero hits give a
    one-sided 95% upper bound ``1 - 0.05^(1/reps)`` and a censored flag.
    """
    if reps < 100:
        raise ValueError(f"need at least 100 replicas, got {reps}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    noise = setup.noise(family.delta(eps))
    reference = setup.deterministic_path()
    sizes = block_sizes(reps, setup.block)
    hits = _count_hits(event, eps, noise, setup, reference, sizes, rng, threads)
    p = hits / reps
    if hits == 0:
        est = ProbabilityEstimate(0.0, 0.0, 1.0 - 0.05 ** (1.0 / reps), 0, reps, True)
    else:
        lo, hi = wilson_interval(hits, reps)
        est = ProbabilityEstimate(p, lo, hi, hits, reps, False)
    if not 1e-4 < p < 0.5:
        warnings.warn(
            f"eps={eps}: estimated probability {p:.3g} outside the desk-scale range (1e-4, 0.5) "
            f"for {reps} replicas",
            FeasibilityWarning,
            stacklevel=2,
        )
    return est
