"""Test-based stopping for sequential variable selection.

The stopping statistic is the largest absolute partial correlation between
the response and the inactive covariates given the current active set.
"""

from .linalg import ActiveBasis, DesignData
from .nulldist import EquicorrContext, NullParams, null_params, pvalue_equicorr, pvalue_iid
from .procedure import SelectionConfig, SelectionTrace, replay_trace, run_selection
from .selectors import Method, run_path
from .testing import StepStatistics, TestMode, TestOutcome, permutation_pvalue, step_statistics

__all__ = [
    "ActiveBasis",
    "DesignData",
    "EquicorrContext",
    "Method",
    "NullParams",
    "SelectionConfig",
    "SelectionTrace",
    "StepStatistics",
    "TestMode",
    "TestOutcome",
    "null_params",
    "permutation_pvalue",
    "pvalue_equicorr",
    "pvalue_iid",
    "replay_trace",
    "run_path",
    "run_selection",
    "step_statistics",
]
