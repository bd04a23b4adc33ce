"""End-to-end acceptance checks, one test per criterion, at the stated tolerances.

Each test records a one-line verdict (shown in the terminal summary) before
asserting, so a failing criterion still reports its measured numbers.
"""

import math
import time
import warnings

import numpy as np
import pytest
from scipy import stats

from phi_ldp.action import ActionProblem, adjoint_gradient, control_cost, evaluate_action, minimize_action, objective
from phi_ldp.cli import cli_main
from phi_ldp.dynamics import LINEAR_HEAT, solve_skeleton
from phi_ldp.ldp_lab import (
    EventSpec,
    FeasibilityWarning,
    ModelSetup,
    ScalingFamily,
    classify_regime,
    condition2_experiment,
    direct_regime_check,
    ldp_curve,
    oscillatory_schedule,
)
from phi_ldp.ldp_lab.regime import a_grid
from phi_ldp.noise import box_family, moment_scaling_experiment, synthetic_family
from phi_ldp.nonlinearity import PolynomialDrift, dissipativity_constant, dissipativity_gap, f
from phi_ldp.spectral import GridField, SpectralField, build_basis
from phi_ldp.trajectory import Control

pytestmark = pytest.mark.slow

DELTAS = [2.0**-k for k in range(3, 9)]
SEED = 12345


# -- 1 ------------------------------------------------------------------------------


def test_criterion_1_dissipativity(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    b = build_basis(1, np.pi, 32)
    violations = 0
    checked = 0
    for n in (1, 2, 3):
        drift = PolynomialDrift(n, lambda1=1.0, lambda2=0.3)
        c = dissipativity_constant(n)
        r, s = (rng.normal(size=(2, 10_000)) * 10.0 ** rng.uniform(-2, 1, size=(2, 10_000)))
        lhs = (f(r, drift) - f(s, drift)) * (r - s)
        rhs = -c * np.abs(r - s) ** drift.p_n + drift.lambda1 * (r - s) ** 2
        # rounding allowance only: the estimate is sharp at r = -s
        scale = 1 + np.abs(r) ** drift.p_n + np.abs(s) ** drift.p_n
        violations += int(np.count_nonzero(lhs > rhs + 1e-12 * scale))
        checked += r.size
        for _ in range(1000):
            amp = 10.0 ** rng.uniform(-2, 0.5)
            x = GridField(b, amp * rng.normal(size=32))
            y = GridField(b, amp * rng.normal(size=32))
            lhs, rhs = dissipativity_gap(x, y, drift)
            scale = 1 + b.cell_volume * np.sum(np.abs(x.values) ** drift.p_n + np.abs(y.values) ** drift.p_n)
            violations += lhs > rhs + 1e-12 * scale
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = verdict(1, violations == 0 and elapsed < 10, f"{violations} violations in {checked} pairs, {elapsed:.1f}s")
    assert ok


# -- 2 ------------------------------------------------------------------------------


def _oracle_z(res):
    return [(r.estimate - r.oracle) / r.stderr for r in res.rows]


def test_criterion_2_noise_scaling(verdict):
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        box3 = moment_scaling_experiment(box_family(3, np.pi, 192, 1.25), DELTAS, reps=1000, n_times=1, seed=SEED)
        box2 = moment_scaling_experiment(box_family(2, np.pi, 128, 1.0), DELTAS, reps=1000, n_times=1, seed=SEED)
        syn = moment_scaling_experiment(synthetic_family(2, 1.0, 2.0), DELTAS, reps=1000, n_times=1, seed=SEED)
    elapsed = time.perf_counter() - t0
    z = np.array(_oracle_z(box3) + _oracle_z(box2) + _oracle_z(syn))
    checks = {
        "3d slope": abs(box3.slope + 1) <= 0.15,
        "2d R2": box2.log_fit_r2 >= 0.98,
        "synthetic slope": abs(syn.slope + 1) <= 0.15,
        "oracle within 2 SE": bool(np.all(np.abs(z) <= 2)),
        "runtime": elapsed < 120,
    }
    detail = (
        f"3d slope {box3.slope:.3f}, 2d R2 {box2.log_fit_r2:.4f}, synthetic slope {syn.slope:.3f}, "
        f"max |z| {np.max(np.abs(z)):.2f} ({int(np.sum(np.abs(z) > 2))}/{z.size} beyond 2 SE), {elapsed:.0f}s"
    )
    failed = [k for k, v in checks.items() if not v]
    ok = verdict(2, not failed, detail + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok


# -- 3 ------------------------------------------------------------------------------


def test_criterion_3_negative_sobolev_bound(verdict):
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s1 = moment_scaling_experiment(
            box_family(3, 8 * np.pi, 32, 0.75), DELTAS, reps=1000, s=1.0, n_times=16, sup="inside", seed=SEED
        )
        s025 = moment_scaling_experiment(
            box_family(3, np.pi / 2, 64, 0.6), DELTAS, reps=1000, s=0.25, n_times=16, sup="inside", seed=SEED
        )
    elapsed = time.perf_counter() - t0
    ok = verdict(
        3,
        s1.slope >= -0.1 and abs(s025.slope + 0.5) <= 0.15 and elapsed < 120,
        f"s=1 slope {s1.slope:.3f} (>= -0.1), s=0.25 slope {s025.slope:.3f} (-0.5 +- 0.15), {elapsed:.0f}s",
    )
    assert ok


# -- 4 ------------------------------------------------------------------------------


def _smooth_control(b, rng):
    amp = rng.normal(size=(4, 3))
    phase = rng.uniform(0, 2 * np.pi, size=(4, 3))
    freq = np.arange(1, 4)

    def fn(t):
        v = np.zeros(b.size)
        v[:4] = np.sum(amp * np.cos(freq * t + phase), axis=1)
        return v

    return fn


def test_criterion_4_action_identity(verdict):
    t0 = time.perf_counter()
    b = build_basis(1, np.pi, 32)
    drift = PolynomialDrift(n=1, lambda1=1.0)
    rng = np.random.default_rng(SEED)
    x = SpectralField(b, np.r_[0.5, -0.25, 0.1, np.zeros(b.size - 3)])
    worst, ratios, pairs = 0.0, [], []
    for _ in range(20):
        fn = _smooth_control(b, rng)
        errs = []
        for steps in (256, 512):
            phi = Control.from_function(b, 1.0, steps, fn)
            u = solve_skeleton(x, phi, drift, 1.0 / steps)
            errs.append(abs(evaluate_action(u, drift) - control_cost(phi)) / control_cost(phi))
        worst = max(worst, errs[1])
        ratios.append(errs[0] / errs[1])
        pairs.append(errs)
    elapsed = time.perf_counter() - t0
    halving = all(1.6 <= r <= 2.5 for r in ratios)
    worst_ratio = max(e[0] for e in pairs) / max(e[1] for e in pairs)  # diagnostic only
    ok = verdict(
        4,
        worst <= 0.01 and halving and elapsed < 60,
        f"max rel. error {worst:.2e} at dt=1/512, error ratio dt=1/256 vs 1/512 in "
        f"[{min(ratios):.2f}, {max(ratios):.2f}] (worst-case error ratio {worst_ratio:.2f}), {elapsed:.1f}s",
    )
    assert ok


# -- 5 ------------------------------------------------------------------------------


def test_criterion_5_adjoint_gradient(verdict):
    t0 = time.perf_counter()
    b = build_basis(1, np.pi, 32)
    rng = np.random.default_rng(SEED)
    steps, h = 64, 1e-4
    worst = 0.0
    for n in (1, 2):
        drift = PolynomialDrift(n=n, lambda1=1.0, lambda2=0.2)
        x = SpectralField(b, np.r_[0.6, 0.2, np.zeros(b.size - 2)])
        y = SpectralField(b, np.r_[-0.3, 0.4, 0.1, np.zeros(b.size - 3)])
        prob = ActionProblem(x, 1.0, steps, drift, y, mu=5.0)
        phi = Control(b, np.linspace(0, 1, steps + 1), 0.5 * rng.normal(size=(steps, b.size)))
        g = adjoint_gradient(prob, phi)
        for _ in range(20):
            d = Control(b, phi.times, rng.normal(size=phi.values.shape))
            fd = (objective(prob, phi + h * d) - objective(prob, phi + (-h) * d)) / (2 * h)
            an = float(np.sum(g.values * d.values)) * prob.dt
            worst = max(worst, abs(an - fd) / abs(fd))
    elapsed = time.perf_counter() - t0
    ok = verdict(5, worst <= 1e-4 and elapsed < 60, f"max rel. error {worst:.2e} over 40 directions, {elapsed:.1f}s")
    assert ok


# -- 6 ------------------------------------------------------------------------------


def _discrete_qp(b, steps, T, r0, lam):
    """Minimum energy to move mode 0 from 0 to r0 under the exponential-Euler map."""
    dt = T / steps
    alpha = b.eigenvalues[0]
    E, W = math.exp(-alpha * dt), -math.expm1(-alpha * dt) / alpha
    g = lam * W * E ** (steps - 1 - np.arange(steps))
    return dt * r0**2 / (2 * float(g @ g))


def test_criterion_6_linear_ldp_benchmark(verdict):
    t0 = time.perf_counter()
    b = build_basis(1, np.pi, 2)
    delta, beta, r0, T = 0.01, 1.0, 1.0, 1.0
    setup = ModelSetup(b, LINEAR_HEAT, b.zeros(), T=T, dt=1 / 256, beta=beta)
    lam = setup.noise(delta).mode_amps[0]
    alpha = b.eigenvalues[0]
    I_formula = r0**2 * alpha / (lam**2 * (1 - math.exp(-2 * alpha * T)))
    I_qp = _discrete_qp(b, setup.plan.steps, T, r0, lam)
    prob = ActionProblem(b.zeros(), T, setup.plan.steps, LINEAR_HEAT, b.unit(0, r0), radius=1e-4 * r0,
                         amplitudes=setup.noise(delta).mode_amps)
    inst = minimize_action(prob)
    inst_ok = inst.converged and abs(inst.action_value - I_formula) <= 5e-3 * I_formula
    qp_ok = abs(inst.action_value - I_qp) <= 1e-3 * I_qp

    family = ScalingFamily(0.5, 1, fixed_delta=delta)
    event = EventSpec("terminal_exceedance", r0, modes=(0,))
    eps_grid = [0.2, 0.1, 0.05]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FeasibilityWarning)
        curve = ldp_curve(event, eps_grid, family, setup, 10_000, SEED)
    last = curve.rows[-1]
    sigma2 = last.eps * lam**2 * (1 - math.exp(-2 * alpha * T)) / (2 * alpha)
    p_exact = 2 * stats.norm.sf(r0 / math.sqrt(sigma2))
    gap = abs(last.scaled_rate - I_formula) / I_formula if not last.censored else math.inf
    elapsed = time.perf_counter() - t0
    detail = (
        f"I* {inst.action_value:.5f} vs closed form {I_formula:.5f} ({(inst.action_value / I_formula - 1):+.1e}), "
        f"vs discrete QP {I_qp:.5f}; MC at eps={last.eps}: hits {last.hits}/{last.reps}, exact p {p_exact:.1e}, "
        f"gap {'censored' if last.censored else f'{gap:.1%}'}, {elapsed:.0f}s"
    )
    ok = verdict(6, inst_ok and qp_ok and gap <= 0.15 and elapsed < 300, detail)
    assert ok


# -- 7 ------------------------------------------------------------------------------


def test_criterion_7_regime_classifier(verdict):
    t0 = time.perf_counter()
    mismatches, total = [], 0
    for d in (2, 3):
        for alpha in (0.0, 1.0):
            for a in a_grid():
                fam = ScalingFamily(a, d, alpha)
                total += 1
                if classify_regime(fam).holds_rd46 != direct_regime_check(fam).holds_rd46:
                    mismatches.append((d, alpha, a))
    elapsed = time.perf_counter() - t0
    ok = verdict(7, not mismatches and elapsed < 1, f"{len(mismatches)} mismatches in {total} families, {elapsed:.2f}s")
    assert ok


# -- 8 ------------------------------------------------------------------------------


def test_criterion_8_controlled_convergence(verdict):
    t0 = time.perf_counter()
    b = build_basis(1, np.pi, 32)
    x = b.unit(0, 0.5)
    phi = Control.from_function(b, 1.0, 256, lambda t: np.r_[np.cos(t), 0.5, np.zeros(b.size - 2)])
    setup = ModelSetup(b, PolynomialDrift(n=1), x, T=1.0, dt=1 / 256, beta=1.0, output_stride=4)
    family = ScalingFamily(0.5, 1)
    assert classify_regime(family).holds_rd46
    taus, decreasing = [], 0
    for seed in range(10):
        tab = condition2_experiment(
            x, phi, oscillatory_schedule(), [0.2, 0.1, 0.05, 0.025], family, setup, 200, seed, s=0.5, gamma=10.0
        )
        taus.append(tab.kendall_tau)
        decreasing += tab.strictly_decreasing()
    elapsed = time.perf_counter() - t0
    ok = verdict(
        8,
        max(taus) <= -0.8 and decreasing == 10 and elapsed < 600,
        f"Kendall tau in [{min(taus):.2f}, {max(taus):.2f}], strictly decreasing for {decreasing}/10 seeds, "
        f"{elapsed:.0f}s",
    )
    assert ok


# -- 9 ------------------------------------------------------------------------------

BASE = """
[domain]
d = 1
M = 8
[drift]
n = 1
lambda1 = 1.0
[noise]
delta = 0.1
seed = 11
[solver]
T = 0.5
dt = 0.015625
output_stride = 2
"""

EXPERIMENT = {
    "simulate": "[experiment]\neps = 0.05\nx0 = { coeffs = [0.5, 0.1] }\n",
    "instanton": "[experiment]\ntarget = { mode = 0, amplitude = 0.4 }\nradius = 1e-3\n",
    "ldp-curve": "[experiment]\nreps = 400\neps_grid = [0.2, 0.1]\nblock = 64\n"
    'event = { kind = "terminal_exceedance", radius = 0.3 }\n',
    "noise-scaling": "[experiment]\nreps = 1000\ndeltas = [0.25, 0.125, 0.0625]\nn_times = 4\n",
    "condition2": "[experiment]\nreps = 150\neps_grid = [0.2, 0.1, 0.05]\nblock = 40\nx0 = { coeffs = [0.5] }\n",
}


def test_criterion_9_determinism(verdict, tmp_path):
    def files(d):
        return {p.name: p.read_bytes() for p in sorted(d.iterdir())}

    problems = []
    for cmd in ("simulate", "instanton", "ldp-curve", "noise-scaling", "condition2", "regime"):
        if cmd == "regime":
            base = ["regime", "--d", "3", "--a", "0.5", "--gamma", "1.5"]
        else:
            cfg = tmp_path / f"{cmd}.toml"
            cfg.write_text(BASE + EXPERIMENT[cmd])
            base = [cmd, "--config", str(cfg)]
        runs = {}
        for label, extra in (("a", []), ("b", []), ("parallel", ["--threads", "4"])):
            if cmd in ("simulate", "instanton", "regime") and label == "parallel":
                continue
            out = tmp_path / cmd / label
            if cli_main(base + ["--out", str(out)] + extra) != 0:
                problems.append(f"{cmd} {label}: nonzero exit")
            runs[label] = files(out)
        if not runs["a"]:
            problems.append(f"{cmd}: no output files")
        if runs["a"] != runs["b"]:
            problems.append(f"{cmd}: rerun differs")
        if "parallel" in runs and runs["parallel"] != runs["a"]:
            problems.append(f"{cmd}: parallel differs from serial")
    ok = verdict(9, not problems, "all subcommands byte-identical on rerun and across thread counts" if not problems
                 else "; ".join(problems))
    assert ok
