"""Numerical laboratory for quantitative stability of the critical p-Laplace equation.

Radial fields are expression trees with analytic derivatives; on top of them
sit the bubble family, deficit functionals, the P-function and stress tensor,
a constructive bubble-extraction pipeline, and a perturbation sweep.
"""
from .params import Params, make_params, surface_measure
from .errors import (DegeneratePoint, DerivativeUndefined, DomainError, ExtractionError,
                     NonPositiveField, QuadratureError, ScheduleError, UnsupportedConfiguration)
from .fields import (Bump, Constant, KappaField, Paraboloid, RadialField, Talenti, dilate,
                     eval_derivs, induced_kappa, load_grid, p_laplacian, power, reciprocal)
from .quadrature import IntegralResult, QuadConfig, ball_mean, integrate, norms
from .bubble import (Bubble, SobolevLevel, TalentiElement, bubble_eval, bubble_field,
                     sobolev_level, talenti_eval, talenti_field, to_talenti, transform)
from .deficit import (DeficitReport, deficit_cfm, deficit_report, kappa0, normalize,
                      sobolev_deficit)
from .pfunction import (CpConstant, VField, WComponents, c_p, identity_residual,
                        matrix_inequality_check, p_and_remainder, v_of_u, w_components,
                        weighted_diagnostics)
from .extraction import (ExtractionConfig, ExtractionReport, Schedule, extract, locate_peak,
                         paraboloids, schedule)
from .lab import (SweepConfig, SweepRecord, decay_envelope, dual_lower_bound, make_perturbed,
                  projection_distance, sweep)

__version__ = "0.1.0"
