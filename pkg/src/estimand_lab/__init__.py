"""Instrumental-variable estimands in simulated structural causal models.

Declare a model in a small text format, check Z-X homogeneity and X-Y
linearity symbolically, and compare the Wald estimand with the average
derivative effect by Monte Carlo over potential outcomes.
"""

__version__ = "0.1.0"

from .model import ModelError, StructuralModel  # noqa: E402
from .parser import parse_model, parse_template, pretty_print  # noqa: E402
from .symbolic import check_assumptions, differentiate, linear_decompose, simplify  # noqa: E402
from .estimands import (  # noqa: E402
    Estimate,
    GapReport,
    WaldEstimator,
    ace,
    ade,
    diagnostics,
    reduced_form_dydz,
    scan_gap,
    wald_observational,
    wald_true,
)

__all__ = [
    "Estimate",
    "GapReport",
    "ModelError",
    "StructuralModel",
    "WaldEstimator",
    "ace",
    "ade",
    "check_assumptions",
    "diagnostics",
    "differentiate",
    "linear_decompose",
    "parse_model",
    "parse_template",
    "pretty_print",
    "reduced_form_dydz",
    "scan_gap",
    "simplify",
    "wald_observational",
    "wald_true",
]
