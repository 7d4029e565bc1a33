"""Stochastic transport and continuity equations solved along stochastic characteristics."""

__version__ = "0.1.0"

from .bounds import (BoundConstants, MomentEstimate, compute_constants, mc_flow_fourth_moment,
                     mc_inverse_jacobian_moment, mc_jacobian_moment_p, weighted_apriori_check)
from .commutator import (DecayCurve, commutator_lebris_lions, commutator_primitive,
                         decay_curve)
from .field import (CutoffSpec, DriftField, MollifierKernel, compose_cutoff, drift_from_spec,
                    lps_exponent, mollify, mollify_drift, verify_linear_growth)
from .flow import (FlowEnsemble, cofactor_transpose, forward_flow, inverse_flow,
                   inverse_flow_2d, jacobian)
from .grid import GridFunction
from .paths import BrownianEnsemble, sample_brownian
from .solution import (TestFunction, WeightSpec, continuity_solution, initial_condition,
                       transport_solution, transport_solution_2d, weighted_norm_sq)
from .weakform import (ResidualSeries, composition_identity_check, ito_residual_continuity,
                       ito_residual_transport, uniqueness_experiment)

__all__ = [
    "BoundConstants", "BrownianEnsemble", "CutoffSpec", "DecayCurve", "DriftField",
    "FlowEnsemble", "GridFunction", "MollifierKernel", "MomentEstimate", "ResidualSeries",
    "TestFunction", "WeightSpec", "cofactor_transpose", "commutator_lebris_lions",
    "commutator_primitive", "compose_cutoff", "composition_identity_check", "compute_constants",
    "continuity_solution", "decay_curve", "drift_from_spec", "forward_flow", "initial_condition",
    "inverse_flow", "inverse_flow_2d", "ito_residual_continuity", "ito_residual_transport",
    "jacobian", "lps_exponent", "mc_flow_fourth_moment", "mc_inverse_jacobian_moment",
    "mc_jacobian_moment_p", "mollify", "mollify_drift", "sample_brownian", "transport_solution",
    "transport_solution_2d", "uniqueness_experiment", "verify_linear_growth",
    "weighted_apriori_check", "weighted_norm_sq",
]
