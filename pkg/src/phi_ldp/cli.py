"""Command-line entry point ``phi-ldp``.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .action import ActionProblem, minimize_action
from .config import ConfigError, RunConfig
from .dynamics import NumericalFailure, solve_stochastic
from .io import read_field, write_csv, write_json, write_trajectory
from .ldp_lab import (
    EventSpec,
    ModelSetup,
    ScalingFamily,
    classify_regime,
    condition2_experiment,
    ldp_curve,
    no_perturbation,
    oscillatory_schedule,
)
from .noise import NoiseModel, RngStream, box_family, moment_scaling_experiment, synthetic_family
from .spectral import SpectralField, coeffs_to_tensor, sine_synthesis
from .trajectory import Control, Trajectory

log = logging.getLogger("phi_ldp")

SUBCOMMANDS = ("simulate", "instanton", "ldp-curve", "noise-scaling", "condition2", "regime")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _meta(cfg: RunConfig, seed: int) -> dict:
    return {"config_hash": cfg.hash(), "seed": seed, "version": __version__}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup(cfg: RunConfig, exp: dict) -> ModelSetup:
    basis = cfg.basis()
    s = cfg.solver
    return ModelSetup(
        basis,
        cfg.drift(),
        cfg.field(exp.get("x0"), basis),
        T=float(s["T"]),
        dt=float(s["dt"]),
        beta=float(cfg.section("noise")["beta"]),
        output_stride=int(s["output_stride"]),
        block=int(exp.get("block", 250)),
    )


def _family(cfg: RunConfig, exp: dict) -> ScalingFamily:
    dom = cfg.section("domain")
    return ScalingFamily(
        float(exp.get("a", 0.5)),
        int(dom["d"]),
        float(exp.get("alpha", 0.0)),
        exp.get("fixed_delta"),
    )


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args, cfg: RunConfig) -> int:
    exp = cfg.experiment
    seed = cfg.seed
    setup = _setup(cfg, exp)
    eps = float(args.eps if args.eps is not None else exp.get("eps", 0.01))
    s = float(exp.get("s", 0.5))
    noise = NoiseModel.from_config(setup.basis, cfg.section("noise"))
    u = solve_stochastic(
        setup.x0, eps, noise, setup.drift, setup.dt, RngStream(seed, (0,)), T=setup.T, output_stride=setup.output_stride
    )
    out = _out_dir(args)
    w = setup.basis.eigenvalues ** (-s)
    grid = sine_synthesis(coeffs_to_tensor(setup.basis, u.states), setup.basis.d, setup.basis.L)
    max_abs = np.abs(grid.reshape(u.times.size, -1)).max(axis=1)
    rows = [
        (t, math.sqrt(float(c @ c)), math.sqrt(float(np.sum(w * c * c))), float(m))
        for t, c, m in zip(u.times, u.states, max_abs)
    ]
    write_csv(out / "trajectory.csv", ("time", "norm_H", f"norm_H-{s:g}", "max_abs"), rows, _meta(cfg, seed))
    write_trajectory(out / "trajectory.bin", u)
    write_json(
        out / "simulate.json",
        {"eps": eps, "delta": noise.delta, "seed": seed, **_meta(cfg, seed), "diagnostics": u.diagnostics},
    )
    return 0


def _load_target(path: str, basis) -> SpectralField:
    p = Path(path)
    if p.suffix == ".json":
        vals = np.asarray(json.loads(p.read_text()), dtype=float)
        c = np.zeros(basis.size)
        c[: vals.size] = vals
        return SpectralField(basis, c)
    f = read_field(p, basis.L)
    if f.basis != basis:
        raise ConfigError("target file basis differs from the configured domain")
    return f


def cmd_instanton(args, cfg: RunConfig) -> int:
    exp = cfg.experiment
    setup = _setup(cfg, exp)
    basis = setup.basis
    target = _load_target(args.target_file, basis) if args.target_file else cfg.field(exp.get("target"), basis)
    radius = float(args.radius if args.radius is not None else exp.get("radius", 1e-3))
    mu0 = float(args.mu0 if args.mu0 is not None else exp.get("mu0", 10.0))
    tol = float(args.tol if args.tol is not None else exp.get("tol", 1e-6))
    max_iter = int(args.max_iter if args.max_iter is not None else exp.get("max_iter", 500))
    amps = None
    if exp.get("noise_amplitudes", False):
        amps = NoiseModel(basis, float(cfg.section("noise")["delta"]), setup.beta).mode_amps
    problem = ActionProblem(setup.x0, setup.T, setup.plan.steps, setup.drift, target, radius, mu0, exp.get("norm_s"), amps)
    res = minimize_action(problem, tol=tol, max_iter=max_iter)
    out = _out_dir(args)
    write_json(out / "instanton.json", {**res.summary(), **_meta(cfg, cfg.seed)})
    # piecewise-constant control stored on the full grid, last value repeated at T
    vals = res.control.values
    write_trajectory(out / "phi.bin", Trajectory(basis, res.control.times, np.vstack([vals, vals[-1:]])))
    write_trajectory(out / "path.bin", res.path)
    return 0 if res.converged else 3


def _event(cfg: RunConfig, exp: dict, basis) -> EventSpec:
    ev = exp.get("event", {})
    modes = ev.get("modes")
    return EventSpec(
        kind=ev.get("kind", "terminal_exceedance"),
        radius=float(ev.get("radius", 1.0)),
        norm=ev.get("norm_s"),
        target=cfg.field(ev["target"], basis) if "target" in ev else None,
        modes=tuple(int(m) for m in modes) if modes is not None else None,
    )


def cmd_ldp_curve(args, cfg: RunConfig) -> int:
    exp = cfg.experiment
    seed = cfg.seed
    setup = _setup(cfg, exp)
    event = _event(cfg, exp, setup.basis)
    reps = int(args.reps if args.reps is not None else exp.get("reps", 10_000))
    eps_grid = exp.get("eps_grid", [0.2, 0.1, 0.05])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        curve = ldp_curve(event, eps_grid, _family(cfg, exp), setup, reps, seed, threads=args.threads)
    out = _out_dir(args)
    write_csv(out / "ldp_curve.csv", curve.columns, [r.as_tuple() for r in curve.rows], _meta(cfg, seed))
    write_json(out / "ldp_curve.json", {**curve.summary(), **_meta(cfg, seed)})
    return 0 if curve.instanton.converged else 3


def cmd_noise_scaling(args, cfg: RunConfig) -> int:
    exp = cfg.experiment
    seed = cfg.seed
    dom = cfg.section("domain")
    beta = float(cfg.section("noise")["beta"])
    kind = exp.get("spectrum", "box")
    if kind == "synthetic":
        family = synthetic_family(int(dom["d"]), float(exp.get("alpha_exponent", 1.0)), beta)
    elif kind == "box":
        family = box_family(int(dom["d"]), float(dom["L"]), int(dom["M"]), beta)
    elif kind == "basis":
        basis = cfg.basis()
        family = lambda delta: NoiseModel(basis, delta, beta)  # noqa: E731
    else:
        raise ConfigError(f"unknown spectrum kind {kind!r}")
    deltas = exp.get("deltas", [2.0**-k for k in range(3, 9)])
    res = moment_scaling_experiment(
        family,
        deltas,
        theta=float(exp.get("theta", 0.0)),
        p=float(exp.get("p", 2.0)),
        kappa=float(exp.get("kappa", 2.0)),
        T=float(cfg.solver["T"]),
        reps=int(args.reps if args.reps is not None else exp.get("reps", 1000)),
        s=exp.get("s"),
        n_times=int(exp.get("n_times", 1)),
        sup=exp.get("sup", "outside"),
        seed=seed,
        threads=args.threads,
    )
    out = _out_dir(args)
    write_csv(out / "noise_scaling.csv", ("delta", "estimate", "stderr", "reps"), res.csv_rows(), _meta(cfg, seed))
    write_json(
        out / "noise_scaling.json",
        {
            "slope": res.slope,
            "intercept": res.intercept,
            "log_fit_r2": res.log_fit_r2,
            "oracle": [r.oracle for r in res.rows],
            **_meta(cfg, seed),
        },
    )
    return 0


def cmd_condition2(args, cfg: RunConfig) -> int:
    exp = cfg.experiment
    seed = cfg.seed
    setup = _setup(cfg, exp)
    basis = setup.basis
    ctl = exp.get("control", {})
    const = cfg.field({"coeffs": ctl.get("constant", [0.0])}, basis).coeffs
    cosine = cfg.field({"coeffs": ctl.get("cosine", [1.0])}, basis).coeffs
    phi = Control.from_function(basis, setup.T, setup.plan.steps, lambda t: const + cosine * math.cos(t))
    pert = exp.get("perturbation", "oscillatory")
    if pert == "oscillatory":
        schedule = oscillatory_schedule(float(exp.get("amplitude", 1.0)), int(exp.get("mode", 0)))
    elif pert == "none":
        schedule = no_perturbation
    else:
        raise ConfigError(f"unknown perturbation {pert!r}")
    tab = condition2_experiment(
        setup.x0,
        phi,
        schedule,
        exp.get("eps_grid", [0.2, 0.1, 0.05, 0.025]),
        _family(cfg, exp),
        setup,
        int(args.reps if args.reps is not None else exp.get("reps", 200)),
        seed,
        s=exp.get("s", 0.5),
        gamma=exp.get("gamma"),
        threads=args.threads,
    )
    out = _out_dir(args)
    write_csv(
        out / "condition2.csv",
        ("eps", "delta", "gap", "stderr", "reps"),
        [(r.eps, r.delta, r.gap, r.stderr, r.reps) for r in tab.rows],
        _meta(cfg, seed),
    )
    write_json(out / "condition2.json", {**tab.summary(), **_meta(cfg, seed)})
    return 0


def cmd_regime(args, cfg: RunConfig | None) -> int:
    fam = ScalingFamily(args.a, args.d, args.alpha)
    res = classify_regime(fam, args.gamma)
    text = "\n".join(res.lines())
    print(text)
    if args.out:
        _out_dir(args)
        write_json(Path(args.out) / "regime.json", {"d": args.d, "alpha": args.alpha, "a": args.a,
                                                     "gamma": args.gamma, "holds_rd46": res.holds_rd46,
                                                     "holds_rd5050": res.holds_rd5050})
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phi-ldp", description="Stochastic reaction-diffusion large-deviation laboratory")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, seeded=True):
        sp.add_argument("--config", help="TOML configuration file")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (capped by PHI_LDP_THREADS)")
        if seeded:
            sp.add_argument("--seed", type=int, help="override noise.seed")
        return sp

    sp = common(sub.add_parser("simulate", help="one stochastic trajectory"))
    sp.add_argument("--eps", type=float)
    sp = common(sub.add_parser("instanton", help="minimum-action control to a target"))
    sp.add_argument("--target-file")
    sp.add_argument("--radius", type=float)
    sp.add_argument("--mu0", type=float)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int)
    for name, helptext in (
        ("ldp-curve", "Monte Carlo LDP curve vs minimized action"),
        ("noise-scaling", "stochastic-convolution moment scaling in delta"),
        ("condition2", "convergence of controlled paths"),
    ):
        sp = common(sub.add_parser(name, help=helptext))
        sp.add_argument("--reps", type=int)
    sp = sub.add_parser("regime", help="classify a power-law scaling delta = eps^a")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--a", type=float, required=True)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--out")
    return p


HANDLERS = {
    "simulate": cmd_simulate,
    "instanton": cmd_instanton,
    "ldp-curve": cmd_ldp_curve,
    "noise-scaling": cmd_noise_scaling,
    "condition2": cmd_condition2,
    "regime": cmd_regime,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if args.command == "regime":
            return cmd_regime(args, None)
        cfg = RunConfig.load(args.config)
        if getattr(args, "seed", None) is not None:
            cfg = cfg.with_overrides(noise={"seed": args.seed})
        return HANDLERS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def main() -> None:  # console-script shim
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
