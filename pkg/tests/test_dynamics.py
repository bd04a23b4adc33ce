import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phi_ldp.dynamics import (
    LINEAR_HEAT,
    AccuracyWarning,
    BlowUpError,
    StepPlan,
    convolution_map,
    integrate,
    solve_controlled,
    solve_skeleton,
    solve_stochastic,
)
from phi_ldp.noise import NoiseModel, RngStream
from phi_ldp.nonlinearity import PolynomialDrift
from phi_ldp.spectral import SpectralField, build_basis, heat_propagate
from phi_ldp.trajectory import Control

CUBIC = PolynomialDrift(n=1, lambda1=1.0)


def smooth_x(basis, scale=1.0):
    c = np.zeros(basis.size)
    c[:3] = scale * np.array([1.0, -0.5, 0.25])
    return SpectralField(basis, c)


def sinus_control(basis, T=1.0, steps=64):
    return Control.from_function(basis, T, steps, lambda t: np.r_[np.cos(3 * t), 0.5 * np.sin(t), np.zeros(basis.size - 2)])


def test_zero_is_fixed_point(basis1):
    u = solve_skeleton(basis1.zeros(), None, PolynomialDrift(n=2, lambda1=3.0), 1 / 64, T=1.0)
    assert not np.any(u.states)


def test_linear_heat_matches_semigroup(basis2):
    x = SpectralField(basis2, np.random.default_rng(0).normal(size=basis2.size))
    u = solve_skeleton(x, None, LINEAR_HEAT, 1 / 32, T=0.75)
    ref = heat_propagate(x, 0.75).coeffs
    assert np.allclose(u.final.coeffs, ref, rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("alpha_idx", [0, 3])
@pytest.mark.parametrize("c,x0", [(1.0, 0.0), (-2.0, 0.7)])
def test_constant_forcing_is_exact(basis1, alpha_idx, c, x0):
    """Exponential Euler integrates ``u' = -alpha u + c`` exactly."""
    alpha = basis1.eigenvalues[alpha_idx]
    x = basis1.unit(alpha_idx, x0)
    phi = Control.from_function(basis1, 2.0, 8, lambda t: c * basis1.unit(alpha_idx).coeffs)
    u = solve_skeleton(x, phi, LINEAR_HEAT, 0.25)
    t = u.times
    exact = x0 * np.exp(-alpha * t) + c * (1 - np.exp(-alpha * t)) / alpha
    assert np.allclose(u.states[:, alpha_idx], exact, rtol=1e-12, atol=1e-15)


def test_self_convergence_first_order(basis1):
    x = smooth_x(basis1)
    phi = sinus_control(basis1)
    ref = solve_skeleton(x, phi, CUBIC, 1 / 4096).final.coeffs
    errs = [np.linalg.norm(solve_skeleton(x, phi, CUBIC, 1 / n).final.coeffs - ref) for n in (64, 128, 256)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders > 0.8) & (orders < 1.3)), orders


def test_eps_zero_is_skeleton_bitwise(basis1):
    x = smooth_x(basis1)
    noise = NoiseModel(basis1, 0.1, 1.0)
    a = solve_stochastic(x, 0.0, noise, CUBIC, 1 / 64, RngStream(0))
    b = solve_skeleton(x, None, CUBIC, 1 / 64, T=1.0)
    assert np.array_equal(a.states, b.states)


def test_zero_control_equals_uncontrolled_bitwise(basis1):
    x = smooth_x(basis1)
    noise = NoiseModel(basis1, 0.1, 1.0)
    a = solve_stochastic(x, 0.05, noise, CUBIC, 1 / 64, RngStream(7))
    b = solve_controlled(x, 0.05, Control.zeros(basis1, 1.0, 64), noise, CUBIC, 1 / 64, RngStream(7))
    assert np.array_equal(a.states, b.states)


def test_stochastic_determinism(basis1):
    x = smooth_x(basis1)
    noise = NoiseModel(basis1, 0.1, 1.0)
    a = solve_stochastic(x, 0.1, noise, CUBIC, 1 / 64, RngStream(3, (1,)))
    b = solve_stochastic(x, 0.1, noise, CUBIC, 1 / 64, RngStream(3, (1,)))
    c = solve_stochastic(x, 0.1, noise, CUBIC, 1 / 64, RngStream(3, (2,)))
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)


def test_linear_stochastic_variance_oracle():
    """With ``F = 0`` and ``x = 0`` the terminal law is ``sqrt(eps) z(T)``."""
    b = build_basis(1, np.pi, 8)
    noise = NoiseModel(b, 0.2, 1.0)
    eps, R = 0.3, 40_000
    plan = StepPlan.make(1.0, 1 / 16)
    states, _ = integrate(b, np.zeros((R, b.size)), LINEAR_HEAT, plan, eps=eps, noise=noise, rng=RngStream(5), monitor=False)
    var = states[:, -1].var(axis=0)
    exact = eps * noise.mode_amps**2 * (1 - np.exp(-2 * b.eigenvalues)) / (2 * b.eigenvalues)
    assert np.allclose(var, exact, rtol=0.04)
    assert np.all(np.abs(states[:, -1].mean(axis=0)) < 4 * np.sqrt(exact / R))


def test_controlled_converges_to_skeleton_as_delta_vanishes(basis1):
    x = smooth_x(basis1)
    phi = sinus_control(basis1)
    skel = solve_skeleton(x, phi, CUBIC, 1 / 64).states
    gaps = []
    for delta in (0.3, 0.1, 0.03, 0.01, 0.0):
        u = solve_controlled(x, 0.0, phi, NoiseModel(basis1, delta, 1.0), CUBIC, 1 / 64, None)
        gaps.append(np.max(np.abs(u.states - skel)))
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] == 0.0


def test_amplitudes_act_as_control_shaping(basis1):
    x = smooth_x(basis1)
    phi = sinus_control(basis1)
    noise = NoiseModel(basis1, 0.2, 1.0)
    a = solve_skeleton(x, phi, CUBIC, 1 / 64, amplitudes=noise.mode_amps**2)
    b = solve_controlled(x, 0.0, phi, noise, CUBIC, 1 / 64, None)
    assert np.allclose(a.states, b.states, rtol=1e-14, atol=1e-15)


def test_convolution_map_constant(basis1):
    phi = Control.from_function(basis1, 1.0, 32, lambda t: basis1.unit(0).coeffs)
    v = convolution_map(phi)
    assert np.allclose(v.states[:, 0], 1 - np.exp(-v.times), rtol=1e-12, atol=1e-16)
    assert not np.any(v.states[:, 1:])
    assert not np.any(convolution_map(Control.zeros(basis1, 1.0, 32)).states)


def test_convolution_map_kills_oscillation(basis1):
    sups = []
    for eps in (0.1, 0.03, 0.01, 0.003):
        phi = Control.from_function(basis1, 1.0, 4096, lambda t: np.sin(t / eps) * basis1.unit(0).coeffs)
        sups.append(convolution_map(phi).sup_norm())
    assert np.all(np.diff(sups) < 0) and sups[-1] < 0.01


@settings(max_examples=20)
@given(st.integers(0, 2**31))
def test_convolution_map_half_holder(seed):
    b = build_basis(1, np.pi, 8)
    vals = np.random.default_rng(seed).normal(size=(64, b.size)) * 3
    phi = Control(b, np.linspace(0, 1, 65), vals)
    v = convolution_map(phi)
    diffs = np.linalg.norm(v.states[:, None] - v.states[None], axis=-1)
    h = np.abs(v.times[:, None] - v.times[None])
    mask = h > 0
    bound = 1.5 * np.sqrt(h[mask]) * math.sqrt(phi.l2_norm_squared())
    assert np.all(diffs[mask] <= bound)


def test_contraction_of_dissipative_flow(basis1):
    phi = sinus_control(basis1)
    x, y = smooth_x(basis1), smooth_x(basis1, -0.4)
    u = solve_skeleton(x, phi, CUBIC, 1 / 256)
    v = solve_skeleton(y, phi, CUBIC, 1 / 256)
    gap = np.linalg.norm(u.states - v.states, axis=1)
    bound = np.exp((CUBIC.lambda1 - basis1.eigenvalues[0]) * u.times) * gap[0]
    assert np.all(gap <= bound * (1 + 1e-3))


def test_energy_decays_without_forcing(basis2):
    x = SpectralField(basis2, np.random.default_rng(1).normal(size=basis2.size) / 40)
    u = solve_skeleton(x, None, PolynomialDrift(n=2), 1 / 128, T=1.0)
    h = np.linalg.norm(u.states, axis=1)
    assert np.all(np.diff(h) <= 1e-14)


@pytest.mark.filterwarnings("ignore::phi_ldp.dynamics.AccuracyWarning")
@settings(max_examples=15)
@given(st.integers(0, 2**31), st.floats(0.1, 5.0))
def test_affine_a_priori_bound(seed, scale):
    """Without the affine terms ``|u(t)| <= |x| + int_0^t |phi|``."""
    b = build_basis(1, np.pi, 8)
    rng = np.random.default_rng(seed)
    x = SpectralField(b, rng.normal(size=b.size) * scale / 3)
    phi = Control(b, np.linspace(0, 1, 33), rng.normal(size=(32, b.size)) * scale)
    u = solve_skeleton(x, phi, PolynomialDrift(n=1), 1 / 128)
    l1 = np.concatenate([[0.0], np.cumsum(np.linalg.norm(phi.values, axis=1) / 32)])
    bound = np.linalg.norm(x.coeffs) + l1
    assert np.all(np.linalg.norm(u.states[::4], axis=1) <= bound * (1 + 1e-9))


def test_lp_integral_diagnostic():
    b = build_basis(1, np.pi, 32)
    a = 1.3
    u = solve_skeleton(b.unit(0, a), None, LINEAR_HEAT, 1 / 256, T=1.0)
    # int_0^1 int |a e^{-t} e_1|^4 with int e_1^4 = 3 / (2 pi)
    exact = a**4 * (1 - math.exp(-4)) / 4 * 3 / (2 * math.pi)
    assert u.diagnostics["int_Lp_pow"] == pytest.approx(exact, rel=1e-4)
    assert u.diagnostics["sup_H"] == pytest.approx(a)


def test_blow_up_and_accuracy_warning(basis1):
    x = basis1.unit(0, 50.0)
    with np.errstate(all="ignore"), pytest.warns(AccuracyWarning), pytest.raises(BlowUpError) as info:
        solve_skeleton(x, None, PolynomialDrift(n=2), 0.5, T=20.0)
    assert info.value.step >= 1 and info.value.time == pytest.approx(info.value.step * 0.5)


def test_no_warning_when_resolved(basis1):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_skeleton(smooth_x(basis1), None, CUBIC, 1 / 128, T=1.0)


def test_output_stride(basis1):
    x = smooth_x(basis1)
    full = solve_skeleton(x, None, CUBIC, 1 / 64, T=1.0)
    coarse = solve_skeleton(x, None, CUBIC, 1 / 64, T=1.0, output_stride=8)
    assert coarse.states.shape == (9, basis1.size)
    assert np.array_equal(coarse.states, full.states[::8])
    assert np.allclose(coarse.times, full.times[::8])
    with pytest.raises(ValueError):
        solve_skeleton(x, None, CUBIC, 1 / 64, T=1.0, output_stride=7)


def test_grid_mismatch_errors(basis1, basis2):
    phi = Control.zeros(basis1, 1.0, 10)
    with pytest.raises(ValueError):
        solve_skeleton(basis1.zeros(), phi, CUBIC, 1 / 64)
    with pytest.raises(ValueError):
        solve_skeleton(basis2.zeros(), Control.zeros(basis1, 1.0, 8), CUBIC, 1 / 64)
    with pytest.raises(ValueError):
        StepPlan.make(1.0, 0.3)
    with pytest.raises(ValueError):
        solve_skeleton(basis1.zeros(), None, CUBIC, 1 / 64)
    with pytest.raises(ValueError):
        solve_stochastic(basis1.zeros(), -1.0, NoiseModel(basis1, 0.1, 1.0), CUBIC, 1 / 64, RngStream(0))


def test_finer_step_on_coarse_control(basis1):
    """A solver step that divides the control interval holds the control constant."""
    phi = Control.from_function(basis1, 1.0, 4, lambda t: (1 + t) * basis1.unit(0).coeffs)
    coarse = solve_skeleton(basis1.zeros(), phi, LINEAR_HEAT, 1 / 4)
    fine = solve_skeleton(basis1.zeros(), phi, LINEAR_HEAT, 1 / 64, output_stride=16)
    assert np.allclose(coarse.states, fine.states, rtol=1e-12, atol=1e-15)
