"""Route discovery: the analytic layer.

The flooding simulator lives in ``adhoc_capacity.rdp.flood``; it is not
imported here because ``adhoc_capacity.config`` depends on this package.
"""
from .analysis import (
    GModel,
    IdentityG,
    KTargetG,
    StepRepairG,
    TableG,
    g_eval,
    parse_gmodel,
    solve_lambda,
    validate_gmodel,
)

__all__ = [
    "GModel",
    "IdentityG",
    "KTargetG",
    "StepRepairG",
    "TableG",
    "g_eval",
    "parse_gmodel",
    "solve_lambda",
    "validate_gmodel",
]
