"""Numerical laboratory for reverse Hardy-Littlewood-Sobolev inequalities.

Core objects: radial grids/profiles with exact-to-quadrature interaction
functionals (`radial_core`), closed-form constants and parameter-region
machinery (`constants`), the relaxed-quotient minimizer (`minimize`), free
energies (`energy`), the gradient-flow and toy-model solvers (`flow`), the
q >= 1 regimes (`regimes_q_ge_1`), parameter sweeps (`sweep`) and the
acceptance suites (`acceptance`).
"""

from .radial_core import (
    DegenerateProfileError,
    Params,
    RadialGrid,
    RadialProfile,
    RelaxedMeasure,
    angular_kernel,
    interaction_energy,
    kernel_matrix,
    moments,
    potential,
    quotient,
    relaxed_interaction,
    sphere_area,
)
from .constants import (
    ParameterRangeError,
    B_lower_bound,
    alpha_exponent,
    carlson_levin,
    closed_form_constant,
    conformal_constant,
    kappa_star,
    lambda2_constant,
    qbar_curve,
    ratio_F,
    sup_ratio_A,
    thresholds,
    uniqueness_region,
)
from .minimize import (
    MinimizerReport,
    classify_minimizer,
    degenerate_quotient_curve,
    dirac_exchange_probe,
    el_iterate,
    fit_origin_exponent,
    minimize_relaxed,
    optimal_dirac_mass,
)
from .energy import (
    EnergyReport,
    coercivity_constant,
    energy_report,
    free_energy_relaxed,
    moment_bound_check,
    optimal_rescale,
)
from .flow import (
    ExternalPotential,
    FlowState,
    drift_velocity,
    run,
    step,
    toy_critical_mass,
    toy_mass,
    toy_profile,
    toy_run,
)
from .regimes_q_ge_1 import PMParams, log_deficit, pm_minimize, pm_quotient

__version__ = "0.1.0"
