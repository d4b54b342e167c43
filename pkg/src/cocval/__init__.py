"""Market-consistent valuation of insurance liabilities with cost-of-capital dividends."""

from .analytic import NormalLiabilitySpec
from .engine import (
    DividendRule,
    NodeValuation,
    ValuationResult,
    acceptability_residual,
    cutoff_value,
    node_value,
    value_liability,
    value_stagewise,
)
from .errors import InvalidInputError, NumericalError
from .margins import MarginReport, margin_report, stagewise_margin_report
from .risk_measure import RiskMeasureSpec, lower_quantile, rho
from .scenario_tree import (
    ConditionalDistribution,
    ScenarioTree,
    StagewiseLiability,
    TreeNode,
    discretize_normal,
    validate,
)
from .term_structure import TermStructure, pv, tv

__version__ = "0.1.0"

__all__ = [
    "ConditionalDistribution",
    "DividendRule",
    "InvalidInputError",
    "MarginReport",
    "NodeValuation",
    "NormalLiabilitySpec",
    "NumericalError",
    "RiskMeasureSpec",
    "ScenarioTree",
    "StagewiseLiability",
    "TermStructure",
    "TreeNode",
    "ValuationResult",
    "acceptability_residual",
    "cutoff_value",
    "discretize_normal",
    "lower_quantile",
    "margin_report",
    "node_value",
    "pv",
    "rho",
    "stagewise_margin_report",
    "tv",
    "validate",
    "value_liability",
    "value_stagewise",
]
