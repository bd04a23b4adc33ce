"""Monte Carlo large-deviation curves compared with the minimized action."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..action import ActionProblem, InstantonResult, minimize_action
from ..noise import RngStream
from ..spectral import SpectralField
from .events import EventSpec, ModelSetup, ProbabilityEstimate, estimate_probability
from .regime import ScalingFamily, classify_regime

log = logging.getLogger(__name__)

__all__ = ["CurveRow", "LdpCurve", "instanton_problem", "ldp_curve"]


@dataclass(frozen=True)
class CurveRow:
    eps: float
    delta: float
    p_hat: float
    ci_low: float
    ci_high: float
    scaled_rate: float  # -eps log p_hat
    censored: bool
    hits: int
    reps: int

    def as_tuple(self):
        return (self.eps, self.delta, self.p_hat, self.ci_low, self.ci_high, self.scaled_rate)


@dataclass(frozen=True, eq=False)
class LdpCurve:
    rows: list[CurveRow]
    action: float | None
    instanton: InstantonResult | None = field(default=None, repr=False)
    regime_holds: bool = True

    columns = ("eps", "delta", "p_hat", "ci_low", "ci_high", "scaled_rate")

    def gaps(self) -> list[float]:
        """``|(-eps log p_hat) - I*| / I*`` per row (infinite when censored)."""
        if self.action is None:
            raise ValueError("no reference action attached")
        return [abs(r.scaled_rate - self.action) / self.action if not r.censored else math.inf for r in self.rows]

    def trend(self) -> tuple[float, float] | None:
        """Least-squares line ``-eps log p_hat ~ slope * eps + intercept`` over uncensored rows."""
        pts = [(r.eps, r.scaled_rate) for r in self.rows if not r.censored]
        censored = [r.eps for r in self.rows if r.censored]
        if censored:
            warnings.warn(f"censored points excluded from the trend: eps={censored}", stacklevel=2)
        if len(pts) < 2:
            return None
        x, y = np.array(pts).T
        slope, intercept = np.polyfit(x, y, 1)
        return float(slope), float(intercept)

    def summary(self) -> dict:
        out = {
            "action": self.action,
            "regime_holds": self.regime_holds,
            "rows": [
                {
                    "eps": r.eps,
                    "delta": r.delta,
                    "p_hat": r.p_hat,
                    "ci": [r.ci_low, r.ci_high],
                    "scaled_rate": None if math.isinf(r.scaled_rate) else r.scaled_rate,
                    "censored": r.censored,
                    "hits": r.hits,
                    "reps": r.reps,
                }
                for r in self.rows
            ],
        }
        if self.action is not None:
            out["gaps"] = [None if math.isinf(g) else g for g in self.gaps()]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            t = self.trend()
        out["trend"] = None if t is None else {"slope": t[0], "intercept": t[1]}
        return out


def instanton_problem(
    event: EventSpec, setup: ModelSetup, delta: float, steps: int | None = None, rel_tol: float = 1e-4
) -> ActionProblem:
    """Action problem whose minimum is the rate of ``event``.

    Ball events aim at the target with the ball radius as terminal tolerance.
    Exceedance events aim at ``ubar(T) + radius * e_m`` along the first
    selected mode ``m`` (mode 0 by default), with a tight tolerance; for a
    stable linear mode the cheapest exceedance occurs at the final time.
    """
    basis = setup.basis
    amps = setup.noise(delta).mode_amps
    steps = steps or setup.plan.steps
    if event.kind == "ball":
        target, radius = event.target, event.radius
    else:
        m = event.modes[0] if event.modes else 0
        ref = setup.deterministic_path()[-1]
        w = event.weights(basis)[m]
        c = ref.copy()
        c[m] += event.radius / math.sqrt(w)
        target, radius = SpectralField(basis, c), rel_tol * event.radius
    return ActionProblem(
        setup.x0, setup.T, steps, setup.drift, target, radius=radius, norm=event.norm, amplitudes=amps
    )


def ldp_curve(
    event: EventSpec,
    eps_grid,
    family: ScalingFamily,
    setup: ModelSetup,
    reps: int,
    seed: int,
    *,
    problem: ActionProblem | None = None,
    threads: int | None = 1,
) -> LdpCurve:
    """Estimate ``p(eps)`` along a decreasing ``eps`` grid and attach the instanton action.

    The instanton is solved once, with noise amplitudes at ``delta`` of the
    smallest ``eps``.  Each ``eps`` uses the stream ``(seed, index)``.
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(b >= a for a, b in zip(eps_grid, eps_grid[1:])):
        raise ValueError("eps grid must decrease strictly")
    regime = classify_regime(family)
    if not regime.holds_rd46:
        log.info("scaling family outside the LDP regime; curve reported without comparison claims")
    rows = []
    for i, eps in enumerate(eps_grid):
        est: ProbabilityEstimate = estimate_probability(
            event, eps, family, setup, reps, RngStream(seed, (i,)), threads=threads
        )
        rows.append(
            CurveRow(
                eps,
                family.delta(eps),
                est.p_hat,
                est.ci_low,
                est.ci_high,
                eps * est.rate,
                est.censored,
                est.hits,
                est.reps,
            )
        )
    if problem is None:
        problem = instanton_problem(event, setup, family.delta(eps_grid[-1]))
    inst = minimize_action(problem)
    return LdpCurve(rows, inst.action_value, inst, regime.holds_rd46)
