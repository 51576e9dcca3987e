"""Rough McKean-Vlasov simulation: rough paths, Lions-derivative kernels, Davie-type
particle schemes and Monte Carlo diagnostics."""

__version__ = "0.1.0"

from .coeffs import (CoefficientSet, EmpiricalMeasure, GenericField, Kernel, eval_D1, eval_D2, eval_field,
                     make_kernel, permutation_check, second_level_coeff, zero_kernel)
from .diagnostics import (DiagnosticsReport, conditional_remainder, holder_seminorm_Lm, moment_norm,
                          stability_report)
from .mkv import ParticleEnsemble, PicardState, picard_solve, simulate_mkv, step_ensemble
from .randomize import (classical_common_noise_solver, conditional_law_compare, run_randomization,
                        sample_common_lift)
from .roughpath import (GridRoughPath, HolderReport, chen_defect, holder_norms, ito_lift, lift_smooth,
                        rp_distance)
from .rsde import BlowUpError, FrozenFields, Trajectory, davie_step, remainder_series, solve_rsde
