"""Quasipotential barriers and maximum-likelihood transition curves.

A toolkit for metastable stochastic systems with state-dependent noise:
the geometric minimum action method on discretized curves, equilibrium
and saddle location, saddle-node continuation, and barrier-scaling fits,
applied to a discrete sequential-tunneling transport model and to
analytic benchmark systems.
"""

from .curves import Curve, init_curve, read_curve_csv, redistribute, write_curve_csv
from .equilibria import (
    Equilibrium,
    EquilibriumBranch,
    StringResult,
    continue_branch,
    find_saddle,
    locate_fold,
    newton_equilibrium,
    relax_equilibrium,
    string_relax,
    transition_triple,
)
from .scaling import (
    HigherOrderFit,
    PowerLawFit,
    ScalingFit,
    SweepRecord,
    analyze_sweep,
    fit_higher_order,
    fit_power_law,
    log_mean_escape_time,
    sweep,
)
from .solver import (
    GmamResult,
    GmamSettings,
    action,
    covariance_gradient_matrix,
    evolution_rhs,
    gmam_step,
    momentum,
    solve,
    speed_ratio,
)
from .superlattice import (
    SlParameters,
    Superlattice,
    covariance_det_closed_form,
    tunneling_field_factor,
)
from .systems import (
    MetricContext,
    SdeSystem,
    check_system,
    inverse_metric_inner,
    local_action_density,
    metric_norm,
)

__version__ = "0.1.0"

__all__ = [
    "Curve",
    "Equilibrium",
    "EquilibriumBranch",
    "GmamResult",
    "GmamSettings",
    "HigherOrderFit",
    "MetricContext",
    "PowerLawFit",
    "ScalingFit",
    "SdeSystem",
    "SlParameters",
    "StringResult",
    "Superlattice",
    "SweepRecord",
    "action",
    "analyze_sweep",
    "check_system",
    "continue_branch",
    "covariance_det_closed_form",
    "covariance_gradient_matrix",
    "evolution_rhs",
    "find_saddle",
    "fit_higher_order",
    "fit_power_law",
    "gmam_step",
    "init_curve",
    "inverse_metric_inner",
    "local_action_density",
    "locate_fold",
    "log_mean_escape_time",
    "metric_norm",
    "momentum",
    "newton_equilibrium",
    "read_curve_csv",
    "redistribute",
    "relax_equilibrium",
    "solve",
    "speed_ratio",
    "string_relax",
    "sweep",
    "transition_triple",
    "tunneling_field_factor",
    "write_curve_csv",
]
