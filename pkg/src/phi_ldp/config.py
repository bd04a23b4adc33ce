"""TOML run configuration with sections domain, drift, noise, solver, experiment."""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .nonlinearity import PolynomialDrift
from .spectral import SpectralBasis, SpectralField, build_basis

__all__ = ["ConfigError", "RunConfig", "DEFAULTS"]

SECTIONS = ("domain", "drift", "noise", "solver", "experiment")

DEFAULTS: dict = {
    "domain": {"d": 1, "L": float(np.pi), "M": 32},
    "drift": {"n": 1, "lambda1": 0.0, "lambda2": 0.0, "nonlinear": True, "dealias": True},
    "noise": {"delta": 0.1, "beta": 1.0, "seed": 0, "synthetic": {"enabled": False, "alpha_exponent": 0.0}},
    "solver": {"T": 1.0, "dt": 1.0 / 256, "output_stride": 1},
    "experiment": {},
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True, eq=False)
class RunConfig:
    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        for k, v in raw.items():
            if not isinstance(v, dict):
                raise ConfigError(f"section [{k}] must be a table")
        cfg = cls(_merge(DEFAULTS, raw))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls.from_dict({})
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from None
        return cls.from_dict(raw)

    def validate(self) -> None:
        try:
            dom = self.data["domain"]
            if int(dom["d"]) not in (1, 2, 3):
                raise ValueError(f"invalid dimension d={dom['d']}")
            if not float(dom["L"]) > 0 or int(dom["M"]) < 2:
                raise ValueError("domain needs L > 0 and M >= 2")
            self.drift()
            s = self.solver
            if not s["T"] > 0 or not s["dt"] > 0:
                raise ValueError("solver T and dt must be positive")
            steps = round(s["T"] / s["dt"])
            if abs(steps * s["dt"] - s["T"]) > 1e-9 * s["T"]:
                raise ValueError("solver dt must divide T")
            if steps % int(s["output_stride"]):
                raise ValueError("output_stride must divide the number of steps")
            n = self.data["noise"]
            if n["delta"] < 0 or n["beta"] < 0:
                raise ValueError("noise delta and beta must be >= 0")
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from None

    # -- accessors ---------------------------------------------------------

    def section(self, name: str) -> dict:
        return self.data[name]

    @property
    def solver(self) -> dict:
        return self.data["solver"]

    @property
    def experiment(self) -> dict:
        return self.data["experiment"]

    @property
    def seed(self) -> int:
        return int(self.data["noise"]["seed"])

    def with_overrides(self, **sections) -> "RunConfig":
        return RunConfig.from_dict(_merge(self.data, {k: v for k, v in sections.items() if v}))

    def basis(self) -> SpectralBasis:
        dom = self.data["domain"]
        return build_basis(int(dom["d"]), float(dom["L"]), int(dom["M"]))

    def drift(self) -> PolynomialDrift:
        return PolynomialDrift.from_config(self.data["drift"])

    def field(self, spec, basis: SpectralBasis) -> SpectralField:
        """Field from ``{coeffs = [...]}`` or ``{mode = k, amplitude = a}`` (0-based mode)."""
        c = np.zeros(basis.size)
        if spec is None:
            return SpectralField(basis, c)
        if "coeffs" in spec:
            vals = np.asarray(spec["coeffs"], dtype=float)
            if vals.size > basis.size:
                raise ConfigError("more coefficients than modes")
            c[: vals.size] = vals
        else:
            m = int(spec.get("mode", 0))
            if not 0 <= m < basis.size:
                raise ConfigError(f"mode index {m} out of range")
            c[m] = float(spec.get("amplitude", 1.0))
        return SpectralField(basis, c)

    def hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
