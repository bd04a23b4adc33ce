"""Rate functional, control cost and instanton computation.

The instanton is sought over piecewise-constant controls ``phi`` with cost
``1/2 ||phi||^2_{L^2(0,T;H)}`` subject to the discrete skeleton dynamics; the
terminal condition is imposed softly by a penalty ``mu/2 |u(T) - y|^2`` whose
weight is raised until the terminal miss drops below the requested radius.
Gradients are exact derivatives of the discrete scheme (discrete adjoint).
"""

from __future__ import annotations

import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dynamics import NumericalFailure, StepPlan, integrate
from .nonlinearity import ModalNonlinearity, PolynomialDrift
from .spectral import SpectralBasis, SpectralField
from .trajectory import Control, Trajectory, uniform_times

log = logging.getLogger(__name__)

__all__ = [
    "ActionProblem",
    "InstantonResult",
    "ConvergenceError",
    "evaluate_action",
    "control_cost",
    "objective",
    "adjoint_gradient",
    "minimize_action",
]


class ConvergenceError(NumericalFailure):
    """Minimizer stopped without meeting its tolerance; carries the last iterate."""

    def __init__(self, msg: str, result: "InstantonResult"):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True, eq=False)
class ActionProblem:
    """Minimize ``1/2 ||phi||^2`` over controls steering ``x`` near ``target`` at ``T``.

    ``norm`` is ``None`` for the ``H`` norm or a number ``s`` for ``H^-s``.
    ``amplitudes`` (default all ones) multiplies the control mode-wise inside
    the dynamics, ``u' = Au + F(u) + B phi``; with ``B = Q^{1/2}`` the control
    cost equals the rate functional of the noise with covariance ``Q``.
    """

    x: SpectralField
    T: float
    steps: int
    drift: PolynomialDrift
    target: SpectralField
    radius: float = 0.0
    mu: float = 10.0
    norm: float | None = None
    amplitudes: np.ndarray | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if self.radius < 0 or self.mu < 0:
            raise ValueError("radius and penalty weight must be >= 0")
        if self.steps < 1:
            raise ValueError("need at least one control interval")
        if self.target.basis != self.x.basis:
            raise ValueError("target and initial state live on different bases")
        if self.amplitudes is not None:
            a = np.asarray(self.amplitudes, dtype=float)
            if a.shape != (self.basis.size,):
                raise ValueError("amplitudes must have one entry per mode")
            object.__setattr__(self, "amplitudes", a)

    @property
    def basis(self) -> SpectralBasis:
        return self.x.basis

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def shaping(self) -> np.ndarray:
        return np.ones(self.basis.size) if self.amplitudes is None else self.amplitudes

    @property
    def norm_weights(self) -> np.ndarray:
        if self.norm is None:
            return np.ones(self.basis.size)
        return self.basis.eigenvalues ** (-float(self.norm))

    def with_mu(self, mu: float) -> "ActionProblem":
        return ActionProblem(
            self.x, self.T, self.steps, self.drift, self.target, self.radius, mu, self.norm, self.amplitudes
        )

    def zero_control(self) -> Control:
        return Control.zeros(self.basis, self.T, self.steps)

    def miss(self, uT: np.ndarray) -> float:
        diff = uT - self.target.coeffs
        return float(np.sqrt(np.sum(self.norm_weights * diff * diff)))


@dataclass(frozen=True, eq=False)
class InstantonResult:
    control: Control
    path: Trajectory
    action_value: float
    gradient_norm: float
    iterations: int
    terminal_miss: float
    mu: float
    converged: bool
    history: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "action_value": self.action_value,
            "iterations": self.iterations,
            "terminal_miss": self.terminal_miss,
            "gradient_norm": self.gradient_norm,
            "mu": self.mu,
            "converged": self.converged,
        }


def control_cost(phi: Control) -> float:
    """``1/2 sum_j dt_j |phi_j|_H^2``."""
    return 0.5 * phi.l2_norm_squared()


def evaluate_action(u: Trajectory, drift: PolynomialDrift, amplitudes: np.ndarray | None = None) -> float:
    """Midpoint discretization of ``1/2 int |u' - Au - F(u)|_H^2 dt``.

    With ``amplitudes`` the residual is divided mode-wise by them first.
    """
    if u.steps < 2:
        raise ValueError("need at least two time steps")
    dt = u.dt
    basis = u.basis
    mid = 0.5 * (u.states[1:] + u.states[:-1])
    nl = ModalNonlinearity(basis, drift)
    w = np.diff(u.states, axis=0) / dt + basis.eigenvalues * mid - nl(mid)
    if amplitudes is not None:
        w = w / amplitudes
    return float(0.5 * dt * np.sum(w * w))


def _forward(problem: ActionProblem, values: np.ndarray) -> np.ndarray:
    plan = StepPlan(problem.T, problem.steps)
    states, _ = integrate(
        problem.basis, problem.x.coeffs, problem.drift, plan, control=problem.shaping * values, monitor=False
    )
    return states


def _objective_from_states(problem: ActionProblem, values: np.ndarray, states: np.ndarray) -> float:
    diff = states[-1] - problem.target.coeffs
    return 0.5 * problem.dt * float(np.sum(values * values)) + 0.5 * problem.mu * float(
        np.sum(problem.norm_weights * diff * diff)
    )


def objective(problem: ActionProblem, phi: Control) -> float:
    """``J(phi) = control_cost(phi) + mu/2 |u(T) - y|^2``."""
    return _objective_from_states(problem, phi.values, _forward(problem, phi.values))


def _euclidean_gradient(problem: ActionProblem, values: np.ndarray, states: np.ndarray) -> np.ndarray:
    """``dJ/dphi_j`` in the plain coordinates of the control array."""
    basis = problem.basis
    dt = problem.dt
    eig = basis.eigenvalues
    E = np.exp(-eig * dt)
    W = -np.expm1(-eig * dt) / eig
    nl = ModalNonlinearity(basis, problem.drift)
    B = problem.shaping
    p = problem.mu * problem.norm_weights * (states[-1] - problem.target.coeffs)
    grad = np.empty_like(values)
    for j in range(problem.steps - 1, -1, -1):
        Wp = W * p
        grad[j] = dt * values[j] + B * Wp
        if problem.drift.is_zero:
            p = E * p
        else:
            p = E * p + nl.jacobian_transpose(states[j], Wp)
    return grad


def adjoint_gradient(problem: ActionProblem, phi: Control) -> Control:
    """``L^2(0,T;H)`` gradient of :func:`objective` (equals ``phi`` when ``mu = 0``)."""
    if phi.steps != problem.steps or not math.isclose(phi.T, problem.T):
        raise ValueError("control grid does not match the problem")
    states = _forward(problem, phi.values)
    g = _euclidean_gradient(problem, phi.values, states)
    return Control(phi.basis, phi.times, g / problem.dt)


def _lbfgs(fun, x0: np.ndarray, gtol: float, max_iter: int, memory: int = 10):
    """Limited-memory BFGS with Armijo backtracking.

    ``fun(x) -> (value, gradient)``, with ``value = inf`` for a rejected trial
    point.  Stops when ``|g| <= gtol * |g_0|``.
    Returns ``(x, value, gradient, iterations, converged, history)``.
    """
    x = x0.copy()
    fx, g = fun(x)
    if not math.isfinite(fx):
        raise NumericalFailure("objective is not finite at the initial control")
    g0 = float(np.linalg.norm(g))
    history = [fx]
    pairs: deque = deque(maxlen=memory)
    if g0 == 0.0:
        return x, fx, g, 0, True, history
    for it in range(1, max_iter + 1):
        # two-loop recursion
        q = g.copy()
        coef = []
        for s, y, rho in reversed(pairs):
            a = rho * float(s @ q)
            coef.append(a)
            q -= a * y
        if pairs:
            s, y, _ = pairs[-1]
            q *= float(s @ y) / float(y @ y)
        for (s, y, rho), a in zip(pairs, reversed(coef)):
            b = rho * float(y @ q)
            q += (a - b) * s
        d = -q
        slope = float(g @ d)
        if slope >= 0:  # not a descent direction: restart
            pairs.clear()
            d = -g
            slope = -float(g @ g)
        step = 1.0
        while True:
            x_new = x + step * d
            f_new, g_new = fun(x_new)
            if math.isfinite(f_new) and f_new <= fx + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-20:
                return x, fx, g, it, False, history
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
        x, fx, g = x_new, f_new, g_new
        history.append(fx)
        if float(np.linalg.norm(g)) <= gtol * g0:
            return x, fx, g, it, True, history
    return x, fx, g, max_iter, False, history


def minimize_action(
    problem: ActionProblem,
    phi0: Control | None = None,
    *,
    tol: float = 1e-6,
    max_iter: int = 500,
    mu_factor: float = 10.0,
    max_mu: float = 1e14,
    raise_on_failure: bool = False,
) -> InstantonResult:
    """Instanton by L-BFGS on the penalized objective with ``mu``-continuation.

    The optimization runs in the scaled variable ``psi = sqrt(dt) phi`` whose
    Euclidean norm is the ``L^2(0,T;H)`` norm of ``phi``.  A run that does
    not meet ``tol`` (or the terminal radius before ``max_mu``) returns the
    last iterate with ``converged=False``, or raises :class:`ConvergenceError`
    when ``raise_on_failure`` is set.
    """
    phi0 = phi0 if phi0 is not None else problem.zero_control()
    if phi0.steps != problem.steps:
        raise ValueError("initial control grid does not match the problem")
    shape = phi0.values.shape
    sq = math.sqrt(problem.dt)
    psi = phi0.values.ravel() * sq
    total_iter = 0
    history: list = []
    mu = problem.mu
    current = problem
    converged = False
    while True:
        current = problem.with_mu(mu)

        def fun(v, current=current):
            vals = v.reshape(shape) / sq
            # trial points of the line search may leave the resolved regime
            # or blow up; those are rejected by backtracking, not reported
            try:
                with warnings.catch_warnings(), np.errstate(over="ignore", invalid="ignore"):
                    warnings.simplefilter("ignore")
                    states = _forward(current, vals)
            except NumericalFailure:
                return math.inf, None
            J = _objective_from_states(current, vals, states)
            return J, (_euclidean_gradient(current, vals, states) / sq).ravel()

        psi, _, g, its, ok, hist = _lbfgs(fun, psi, tol, max_iter)
        total_iter += its
        history.extend(hist)
        states = _forward(current, psi.reshape(shape) / sq)  # accepted iterate: warnings surface here
        miss = current.miss(states[-1])
        log.debug("mu=%g iterations=%d miss=%g ok=%s", mu, its, miss, ok)
        if not ok:
            break
        if miss <= problem.radius:
            converged = True
            break
        if mu * mu_factor > max_mu:
            break
        mu = mu * mu_factor if mu > 0 else 1.0

    values = psi.reshape(shape) / sq
    phi = Control(problem.basis, uniform_times(problem.T, problem.steps), values)
    path = Trajectory(problem.basis, phi.times, states)
    result = InstantonResult(
        control=phi,
        path=path,
        action_value=control_cost(phi),
        gradient_norm=float(np.linalg.norm(g)),
        iterations=total_iter,
        terminal_miss=miss,
        mu=mu,
        converged=converged,
        history=history,
    )
    if not converged:
        msg = f"instanton search stopped unconverged (mu={mu:g}, miss={miss:.3g}, |grad|={result.gradient_norm:.3g})"
        if raise_on_failure:
            raise ConvergenceError(msg, result)
        log.warning(msg)
    return result
