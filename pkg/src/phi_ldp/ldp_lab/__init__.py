"""Experiment harness: scaling regimes, rare-event Monte Carlo, LDP curves and
convergence of controlled paths."""

from .condition2 import (
    Condition2Row,
    Condition2Table,
    CostClampError,
    condition2_experiment,
    no_perturbation,
    oscillatory_schedule,
)
from .curve import CurveRow, LdpCurve, instanton_problem, ldp_curve
from .events import (
    EventSpec,
    FeasibilityWarning,
    ModelSetup,
    ProbabilityEstimate,
    estimate_probability,
    wilson_interval,
)
from .regime import (
    RegimeClassification,
    ScalingFamily,
    a_grid,
    classify_regime,
    direct_regime_check,
    eps_Lambda,
)

__all__ = [
    "Condition2Row",
    "Condition2Table",
    "CostClampError",
    "condition2_experiment",
    "no_perturbation",
    "oscillatory_schedule",
    "CurveRow",
    "LdpCurve",
    "instanton_problem",
    "ldp_curve",
    "EventSpec",
    "FeasibilityWarning",
    "ModelSetup",
    "ProbabilityEstimate",
    "estimate_probability",
    "wilson_interval",
    "RegimeClassification",
    "ScalingFamily",
    "a_grid",
    "classify_regime",
    "direct_regime_check",
    "eps_Lambda",
]
