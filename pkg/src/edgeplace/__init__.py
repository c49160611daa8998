"""Robust edge-node placement under decision-dependent demand uncertainty."""

__version__ = "0.1.0"

from .instance import (GeneratorConfig, NetworkInstance, generate_instance,
                       load_instance, save_instance, validate_instance)
from .moments import (DemandSpec, InfeasibleAmbiguityError, MomentValues,
                      WorstCaseDistribution, is_ambiguity_nonempty,
                      moment_values, worst_case_distribution)
from .recourse import ThetaTable, inner_lp, theta_closed_form, theta_table
from .reformulation import (ReformulationOptions, build_milp,
                            default_big_m, inner_dual_value,
                            lambda_coefficients)
from .cuts import ExtremeRay, build_feasibility_cuts, compute_extreme_rays
from .solver import SolveOptions, SolveResult, solve_lp, solve_milp
from .external import AdapterUnavailableError, external_adapter, get_backend
from .baselines import (PlacementSolution, solve_bspa, solve_ddu, solve_det,
                        solve_dro_diu, solve_heu, solve_scheme, solve_so)
from .evaluation import (EvaluationReport, allocate_actual, actual_cost,
                         compare_schemes, sample_actual_demand,
                         sensitivity_sweep, with_impact_form)

__all__ = [name for name in dir() if not name.startswith("_")]
