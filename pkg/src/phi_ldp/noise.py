"""Spatially correlated Wiener noise and its stochastic convolutions.

The noise ``w^delta(t) = sum_k lambda_k(delta) e_k beta_k(t)`` has
per-mode amplitudes ``lambda_k = (1 + delta sqrt(alpha_k))^(-beta)``; the
covariance ``Q_delta`` therefore acts on coefficients as multiplication by
``lambda_k**2``.

Three kinds of spectra are supported:

* :class:`~phi_ldp.spectral.SpectralBasis` -- the box with an explicit grid;
* :class:`BoxSpectrum` -- the same eigenvalues, kept only as distinct values
  with multiplicities, for experiments with millions of modes;
* :class:`SyntheticSpectrum` -- ``alpha_k = k^(2/d)`` with eigenfunction
  envelope ``|e_k|_inf^2 = k^(alpha/d)``, for growth exponents the box
  cannot realize.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .parallel import block_sizes, map_blocks
from .spectral import SpectralBasis, SpectralField, box_shells
from .trajectory import Trajectory, uniform_times

log = logging.getLogger(__name__)

__all__ = [
    "BoxSpectrum",
    "SyntheticSpectrum",
    "NoiseModel",
    "RngStream",
    "HypothesisWarning",
    "lambda_k",
    "as_generator",
    "wiener_increment",
    "ou_coefficients",
    "ou_step",
    "theta_variance",
    "theta_variance_quad",
    "convolution_theta",
    "Lambda_theta",
    "Gamma_theta_s",
    "series_converges",
    "second_moment",
    "MomentRow",
    "MomentScaling",
    "moment_scaling_experiment",
    "box_family",
    "synthetic_family",
]


class HypothesisWarning(UserWarning):
    """Noise smoothing too weak for the moment bounds to hold."""


# ---------------------------------------------------------------- spectra


@dataclass(frozen=True)
class BoxSpectrum:
    """Box eigenvalues as (distinct value, multiplicity) pairs."""

    d: int
    L: float
    M: int

    alpha_exponent = 0.0

    @cached_property
    def shells(self) -> tuple[np.ndarray, np.ndarray]:
        return box_shells(self.d, self.L, self.M)

    @property
    def shell_weights(self) -> np.ndarray:
        return np.ones(self.shells[0].size)


@dataclass(frozen=True)
class SyntheticSpectrum:
    """``alpha_k = k^(2/d)``, ``|e_k|_inf^2 = k^(alpha/d)`` for ``k = 1..K``.

    There is no spatial grid; the spatial ``L^2`` statistic is replaced by the
    envelope ``sum_k |e_k|_inf^2 z_k^2``, which is what bounds
    ``sup_xi E z(xi)^2`` in the moment estimates.
    """

    d: int
    alpha_exponent: float
    K: int

    def __post_init__(self):
        if self.alpha_exponent < 0:
            raise ValueError("eigenfunction growth exponent must be >= 0")
        if self.K < 1:
            raise ValueError("need at least one mode")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.arange(1, self.K + 1, dtype=float) ** (2.0 / self.d)

    @cached_property
    def spatial_weight(self) -> np.ndarray:
        return np.arange(1, self.K + 1, dtype=float) ** (self.alpha_exponent / self.d)

    @property
    def size(self) -> int:
        return self.K

    @property
    def shells(self) -> tuple[np.ndarray, np.ndarray]:
        return self.eigenvalues, np.ones(self.K, dtype=np.int64)

    @property
    def shell_weights(self) -> np.ndarray:
        return self.spatial_weight

    @classmethod
    def for_delta(
        cls,
        d: int,
        alpha_exponent: float,
        beta: float,
        delta: float,
        tail_tol: float = 1e-3,
        max_modes: int = 1 << 23,
    ) -> "SyntheticSpectrum":
        """Smallest power-of-two ``K`` whose neglected stationary variance is below ``tail_tol``.

        With ``k = x^d`` and ``y = delta x``, ``t = y / (1 + y)`` the tail
        ``sum_{k > K} k^(alpha/d) lambda_k^2 / (2 alpha_k)`` is approximated by
        ``(d/2) delta^(-p) int_{t_0}^1 t^(p-1) (1-t)^(2 beta - p - 1) dt`` with
        ``p = d - 2 + alpha``, a proper integral on a finite interval.
        """
        a = float(alpha_exponent)
        p = d - 2 + a
        q = 2.0 * beta - p
        if not q > 0:
            raise ValueError("synthetic series diverges; need 2*beta > d - 2 + alpha")

        def tail_of(K: int) -> float:
            y0 = delta * (K + 0.5) ** (1.0 / d)
            t0 = y0 / (1.0 + y0)
            val, _ = integrate.quad(lambda t: t ** (p - 1) * (1 - t) ** (q - 1), t0, 1.0, limit=200)
            return 0.5 * d * delta ** (-p) * val

        K = 64
        while True:
            k = np.arange(1, K + 1, dtype=float)
            head = float(np.sum(k ** (a / d) * (1.0 + delta * k ** (1.0 / d)) ** (-2.0 * beta) / (2.0 * k ** (2.0 / d))))
            tail = tail_of(K)
            if tail <= tail_tol * head or K >= max_modes:
                if tail > tail_tol * head:
                    warnings.warn(
                        f"synthetic spectrum capped at {K} modes, tail fraction {tail / head:.2e}",
                        stacklevel=2,
                    )
                return cls(d, alpha_exponent, K)
            K *= 2


Spectrum = SpectralBasis | BoxSpectrum | SyntheticSpectrum


def _mode_eigenvalues(spectrum: Spectrum) -> np.ndarray:
    if isinstance(spectrum, BoxSpectrum):
        raise TypeError("BoxSpectrum keeps only shells; build a SpectralBasis for per-mode sampling")
    return spectrum.eigenvalues


def _shell_data(spectrum: Spectrum) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    eig, mult = spectrum.shells
    if isinstance(spectrum, SyntheticSpectrum):
        weight = spectrum.shell_weights
    else:
        weight = np.ones(eig.size)
    return eig, mult, weight


def _alpha_exponent(spectrum: Spectrum) -> float:
    return float(getattr(spectrum, "alpha_exponent", 0.0))


# ---------------------------------------------------------------- amplitudes


def lambda_k(alpha_k, delta: float, beta: float):
    """Mode amplitude ``(1 + delta sqrt(alpha_k))^(-beta)``."""
    return (1.0 + delta * np.sqrt(np.asarray(alpha_k, dtype=float))) ** (-beta)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Noise with correlation length ``delta`` and smoothing exponent ``beta``."""

    spectrum: Spectrum
    delta: float
    beta: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError(f"correlation length must be >= 0, got {self.delta}")
        if self.beta < 0:
            raise ValueError(f"smoothing exponent must be >= 0, got {self.beta}")
        d = self.spectrum.d
        a = _alpha_exponent(self.spectrum)
        if d > 1 and not self.beta > (d - 2 + a) / 2:
            warnings.warn(
                f"beta={self.beta} <= (d-2+alpha)/2={(d - 2 + a) / 2}: noise moments are not uniformly bounded",
                HypothesisWarning,
                stacklevel=2,
            )

    @property
    def d(self) -> int:
        return self.spectrum.d

    @property
    def basis(self) -> SpectralBasis | None:
        return self.spectrum if isinstance(self.spectrum, SpectralBasis) else None

    @property
    def alpha_exponent(self) -> float:
        return _alpha_exponent(self.spectrum)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return _mode_eigenvalues(self.spectrum)

    @cached_property
    def mode_amps(self) -> np.ndarray:
        return lambda_k(self.eigenvalues, self.delta, self.beta)

    def apply_Q(self, coeffs: np.ndarray) -> np.ndarray:
        """Covariance operator: multiply coefficients by ``lambda_k**2``."""
        return self.mode_amps**2 * coeffs

    def with_delta(self, delta: float) -> "NoiseModel":
        return NoiseModel(self.spectrum, delta, self.beta)

    @classmethod
    def from_config(cls, basis: SpectralBasis, cfg: dict) -> "NoiseModel":
        syn = cfg.get("synthetic") or {}
        if syn.get("enabled", False):
            spectrum = SyntheticSpectrum(basis.d, float(syn.get("alpha_exponent", 0.0)), basis.size)
        else:
            spectrum = basis
        return cls(spectrum, float(cfg.get("delta", 0.0)), float(cfg.get("beta", 0.0)))


# ---------------------------------------------------------------- random streams


@dataclass(frozen=True)
class RngStream:
    """Counter-based (Philox) stream keyed by ``(seed, *ids)``."""

    seed: int
    ids: tuple[int, ...] = ()

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.ids + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.ids)
        return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def wiener_increment(noise: NoiseModel, dt: float, rng, size: int | None = None):
    """Increment ``w^delta(t + dt) - w^delta(t)``: per-mode std ``lambda_k sqrt(dt)``."""
    if not dt > 0:
        raise ValueError(f"need dt > 0, got {dt}")
    gen = as_generator(rng)
    shape = (noise.eigenvalues.size,) if size is None else (size, noise.eigenvalues.size)
    dw = noise.mode_amps * np.sqrt(dt) * gen.standard_normal(shape)
    if size is None and noise.basis is not None:
        return SpectralField(noise.basis, dw)
    return dw


def ou_coefficients(eigenvalues: np.ndarray, amps: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step decay and noise std of ``dz = Az dt + dw``."""
    decay = np.exp(-eigenvalues * dt)
    std = amps * np.sqrt(-np.expm1(-2.0 * eigenvalues * dt) / (2.0 * eigenvalues))
    return decay, std


def ou_step(z: SpectralField, dt: float, noise: NoiseModel, rng) -> SpectralField:
    if dt < 0:
        raise ValueError(f"negative step dt={dt}")
    decay, std = ou_coefficients(noise.eigenvalues, noise.mode_amps, dt)
    xi = as_generator(rng).standard_normal(z.coeffs.shape)
    return SpectralField(z.basis, decay * z.coeffs + std * xi)


# ---------------------------------------------------------------- theta convolutions


def theta_variance(eigenvalues, theta: float, t: float) -> np.ndarray:
    """``int_0^t r^(-theta) exp(-2 alpha r) dr`` in closed form (lower incomplete gamma)."""
    a = np.asarray(eigenvalues, dtype=float)
    if t <= 0:
        return np.zeros_like(a)
    if theta == 0.0:
        return -np.expm1(-2.0 * a * t) / (2.0 * a)
    s = 1.0 - theta
    return (2.0 * a) ** (-s) * special.gamma(s) * special.gammainc(s, 2.0 * a * t)


def theta_variance_quad(alpha: float, theta: float, t: float) -> float:
    """Adaptive-quadrature value of the same integral (independent check)."""
    val, _ = integrate.quad(lambda r: r ** (-theta) * math.exp(-2.0 * alpha * r), 0.0, t, limit=200)
    return val


def _check_theta(theta: float) -> None:
    if not 0.0 <= theta < 1.0:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")


def convolution_theta(noise: NoiseModel, theta: float, T: float, dt: float, rng, size: int | None = None):
    """Samples of ``z_{delta,theta}(t_j) = int_0^t (t-s)^(-theta/2) e^{(t-s)A} dw(s)``.

    For ``theta = 0`` the path is generated by the exact OU recursion, so the
    joint law over times is exact.  For ``theta > 0`` each time carries an
    exact marginal draw, independent across times; only statistics of the
    form ``sup_t E[...]`` are meaningful then.

    Returns a :class:`Trajectory` (``size=None``) or an array ``(size, N+1, K)``.
    """
    _check_theta(theta)
    steps = int(round(T / dt))
    if steps < 1 or not math.isclose(steps * dt, T, rel_tol=1e-9):
        raise ValueError("dt must divide T")
    times = uniform_times(T, steps)
    gen = as_generator(rng)
    eig, amps = noise.eigenvalues, noise.mode_amps
    R = 1 if size is None else size
    out = np.zeros((R, steps + 1, eig.size))
    if theta == 0.0:
        decay, std = ou_coefficients(eig, amps, dt)
        for j in range(steps):
            out[:, j + 1] = decay * out[:, j] + std * gen.standard_normal((R, eig.size))
    else:
        for j in range(1, steps + 1):
            sd = amps * np.sqrt(theta_variance(eig, theta, times[j]))
            out[:, j] = sd * gen.standard_normal((R, eig.size))
    if size is None:
        return Trajectory(noise.basis, times, out[0])
    return out


# ---------------------------------------------------------------- scaling rates


def Lambda_theta(delta: float, theta: float, d: int, alpha: float) -> float:
    """Divergence rate of ``E|z_{delta,theta}|_p^2`` as ``delta -> 0``."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"need 0 < delta < 1, got {delta}")
    _check_theta(theta)
    if d < 1 or alpha < 0:
        raise ValueError("need d >= 1 and alpha >= 0")
    if alpha == 0 and theta == 0 and d == 2:
        return math.log(1.0 / delta)
    return delta ** (-(d - 2.0 * (1.0 - theta) + alpha))


def Gamma_theta_s(delta: float, theta: float, s: float, d: int) -> float:
    """Divergence rate of ``E|z_{delta,theta}|_{H^-s}^2``."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"need 0 < delta < 1, got {delta}")
    _check_theta(theta)
    if s < 0 or d < 1:
        raise ValueError("need s >= 0 and d >= 1")
    if theta == s and d == 2:
        return math.log(1.0 / delta)
    return delta ** (-(d - 2.0 * (1.0 - theta) - 2.0 * s))


def series_converges(d: int, alpha: float, beta: float, theta: float = 0.0, s: float = 0.0) -> bool:
    """Whether ``sum_k k^(alpha/d) lambda_k^2 alpha_k^(theta-1-s)`` converges for delta > 0."""
    return 2.0 * beta + 2.0 * (1.0 - theta) + 2.0 * s - alpha > d


def second_moment(noise: NoiseModel, t: float, theta: float = 0.0, s: float | None = None) -> float:
    """Exact ``E|z_{delta,theta}(t)|^2`` (spatial ``L^2``/envelope, or ``H^-s``)."""
    eig, mult, weight = _shell_data(noise.spectrum)
    amps = lambda_k(eig, noise.delta, noise.beta)
    w = weight if s is None else eig ** (-s)
    return float(np.sum(mult * w * amps**2 * theta_variance(eig, theta, t)))


# ---------------------------------------------------------------- moment experiment


@dataclass(frozen=True)
class MomentRow:
    delta: float
    estimate: float
    stderr: float
    reps: int
    oracle: float | None


@dataclass(frozen=True)
class MomentScaling:
    rows: list[MomentRow]
    slope: float
    intercept: float
    log_fit_r2: float

    def as_arrays(self):
        return (
            np.array([r.delta for r in self.rows]),
            np.array([r.estimate for r in self.rows]),
            np.array([r.stderr for r in self.rows]),
        )

    def csv_rows(self):
        for r in self.rows:
            yield (r.delta, r.estimate, r.stderr, r.reps)


def box_family(d: int, L: float, M: int, beta: float) -> Callable[[float], NoiseModel]:
    spectrum = BoxSpectrum(d, L, M)
    return lambda delta: NoiseModel(spectrum, delta, beta)


def synthetic_family(d: int, alpha_exponent: float, beta: float, tail_tol: float = 1e-2) -> Callable[[float], NoiseModel]:
    def make(delta: float) -> NoiseModel:
        return NoiseModel(SyntheticSpectrum.for_delta(d, alpha_exponent, beta, delta, tail_tol), delta, beta)

    return make


def _shell_block(noise, theta, s, kappa, times, R, gen) -> np.ndarray:
    """``|z(t)|^kappa`` (R, n_times) for norms that depend on ``|z_k|^2`` only.

    Modes of one shell are iid, so ``sum_{k in shell} z_k(t)^2`` is sampled
    exactly: scaled chi-square marginals, and a scaled noncentral chi-square
    Markov chain across times for ``theta = 0``.
    """
    eig, mult, weight = _shell_data(noise.spectrum)
    amps2 = lambda_k(eig, noise.delta, noise.beta) ** 2
    w = weight if s is None else weight * eig ** (-s)
    out = np.empty((R, times.size))
    single = bool(np.all(mult == 1))
    if theta == 0.0:
        X = np.zeros((R, eig.size))
        z = np.zeros((R, eig.size)) if single else None
        prev = 0.0
        for j, t in enumerate(times):
            h = t - prev
            prev = t
            decay = np.exp(-eig * h)
            var = amps2 * (-np.expm1(-2.0 * eig * h)) / (2.0 * eig)
            if single:
                z = decay * z + np.sqrt(var) * gen.standard_normal((R, eig.size))
                X = z * z
            elif j == 0:
                X = var * gen.chisquare(mult, size=(R, eig.size))
            else:
                X = var * gen.noncentral_chisquare(mult, decay**2 * X / var, size=(R, eig.size))
            out[:, j] = X @ w
    else:
        for j, t in enumerate(times):
            var = amps2 * theta_variance(eig, theta, t)
            if single:
                X = var * gen.standard_normal((R, eig.size)) ** 2
            else:
                X = var * gen.chisquare(mult, size=(R, eig.size))
            out[:, j] = X @ w
    return out ** (kappa / 2.0)


def _grid_block(noise, theta, p, kappa, times, R, gen) -> np.ndarray:
    """Per-mode sampling with explicit ``L^p`` quadrature on the collocation grid."""
    from .spectral import coeffs_to_tensor, sine_synthesis

    basis = noise.basis
    if basis is None:
        raise TypeError("L^p norms with p != 2 need a SpectralBasis spectrum")
    eig, amps = noise.eigenvalues, noise.mode_amps
    out = np.empty((R, times.size))
    z = np.zeros((R, eig.size))
    prev = 0.0
    for j, t in enumerate(times):
        if theta == 0.0:
            decay, std = ou_coefficients(eig, amps, t - prev)
            z = decay * z + std * gen.standard_normal((R, eig.size))
        else:
            z = amps * np.sqrt(theta_variance(eig, theta, t)) * gen.standard_normal((R, eig.size))
        prev = t
        v = sine_synthesis(coeffs_to_tensor(basis, z), basis.d, basis.L)
        vals = np.abs(v.reshape(R, -1)) ** p
        out[:, j] = (basis.cell_volume * vals.sum(axis=1)) ** (kappa / p)
    return out


def moment_scaling_experiment(
    family: Callable[[float], NoiseModel],
    deltas: Sequence[float],
    theta: float = 0.0,
    p: float = 2.0,
    kappa: float = 2.0,
    T: float = 1.0,
    reps: int = 1000,
    *,
    s: float | None = None,
    n_times: int = 64,
    sup: str = "outside",
    seed: int = 0,
    block: int = 250,
    threads: int | None = 1,
    se_tol: float | None = None,
) -> MomentScaling:
    """Monte Carlo moments of the stochastic convolution over a decreasing ``delta`` grid.

    ``sup="outside"`` estimates ``sup_t E|z(t)|^kappa`` over ``n_times`` equally
    spaced output times in ``(0, T]``; ``sup="inside"`` estimates
    ``E sup_t |z(t)|^kappa`` (``theta = 0`` only); ``n_times=1`` uses ``t = T``.
    ``s`` selects the ``H^-s`` norm instead of ``L^p``.
    """
    _check_theta(theta)
    deltas = [float(x) for x in deltas]
    if any(not 0 < x < 1 for x in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta grid must decrease strictly inside (0, 1)")
    if reps < 1000:
        raise ValueError(f"need at least 1000 replications, got {reps}")
    if sup not in ("outside", "inside"):
        raise ValueError("sup must be 'outside' or 'inside'")
    if sup == "inside" and theta != 0.0:
        raise ValueError("E sup_t needs joint path samples, available only for theta = 0")
    times = T * np.arange(1, n_times + 1) / n_times
    use_shells = s is not None or p == 2.0

    rows = []
    for i, delta in enumerate(deltas):
        noise = family(delta)
        a = noise.alpha_exponent
        if not series_converges(noise.d, a, noise.beta, theta, s or 0.0):
            log.warning("delta=%g: moment series diverges as modes -> infinity (theta=%g)", delta, theta)
        stream = RngStream(seed, (i,))
        n_cols = _shell_data(noise.spectrum)[0].size if use_shells else noise.eigenvalues.size
        # keep one block's sample array near 4M entries; depends only on the spectrum
        blk = max(1, min(block, (1 << 22) // n_cols))
        sizes = block_sizes(reps, blk)

        def run(b, noise=noise, stream=stream, sizes=sizes):
            gen = stream.child(b).generator()
            if use_shells:
                return _shell_block(noise, theta, s, kappa, times, sizes[b], gen)
            return _grid_block(noise, theta, p, kappa, times, sizes[b], gen)

        samples = np.concatenate(map_blocks(run, len(sizes), threads), axis=0)
        if sup == "inside":
            per_rep = samples.max(axis=1)
            est, se = float(per_rep.mean()), float(per_rep.std(ddof=1) / math.sqrt(reps))
        else:
            means = samples.mean(axis=0)
            j = int(np.argmax(means))
            est, se = float(means[j]), float(samples[:, j].std(ddof=1) / math.sqrt(reps))
        if se_tol is not None and se > se_tol * abs(est):
            raise RuntimeError(f"delta={delta}: relative standard error {se / est:.3g} exceeds {se_tol}")
        oracle = None
        if kappa == 2.0 and use_shells:
            oracle = max(second_moment(noise, t, theta, s) for t in times)
        rows.append(MomentRow(delta, est, se, reps, oracle))

    x = np.log([r.delta for r in rows])
    y = np.log([r.estimate for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    # linear fit of the estimate in log(1/delta), used for the logarithmic regime
    lx = -x
    ly = np.array([r.estimate for r in rows])
    r2 = float(np.corrcoef(lx, ly)[0, 1] ** 2) if len(rows) > 2 else 1.0
    return MomentScaling(rows, float(slope), float(intercept), r2)
