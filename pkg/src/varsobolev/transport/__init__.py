"""Exact and entropic discrete optimal transport for quadratic cost."""

from .core import (
    BrenierApprox,
    DiscreteMeasure,
    PlanDiagnostics,
    TransportPlan,
    barycentric_map,
    cdf_inversion_map,
    cost_matrix,
    density_from_function,
    export_plan,
    monotonicity_min,
    plan_diagnostics,
    read_plan_triplets,
    solve_ot,
    support_monotonicity_violation,
    transport_identity_residual,
)

__all__ = [
    "BrenierApprox",
    "DiscreteMeasure",
    "PlanDiagnostics",
    "TransportPlan",
    "barycentric_map",
    "cdf_inversion_map",
    "cost_matrix",
    "density_from_function",
    "export_plan",
    "monotonicity_min",
    "plan_diagnostics",
    "read_plan_triplets",
    "solve_ot",
    "support_monotonicity_violation",
    "transport_identity_residual",
]
