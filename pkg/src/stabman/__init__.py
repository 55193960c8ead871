"""stabman: quantitative local stable manifolds and foliation charts.

Numerics for partially hyperbolic singularities of smooth families of vector
fields: explicit spectral constants, the weighted path-space contraction whose
fixed point gives the local stable-manifold graph, truncation by a plateau
function, and charts straightening the stable foliation of a zero set.
"""

from .errors import StabmanError
from .spectral import (
    SpectralAnalysis,
    analyze_matrix,
    exp_growth_coefficient,
    matrix_exponential,
    principal_angle,
)
from .hypotheses import Splitting, Thresholds, build_splitting, phi_bound_rhs, smallness_thresholds
from .field import FieldFamily, NormTable, build_family, eval_derivative, sampled_norms
from .bump import plateau_jet, truncate_family
from .gammaspace import (
    DiscretePath,
    OperatorContext,
    apply_T,
    estimate_contraction,
    gamma_norm,
    make_context,
    solve_fixed_point,
    solve_variational,
)
from .graph import GraphContext, check_phi_bounds, make_graph_context, phi, phi_batch, phi_jet
from .foliation import Chart, build_chart, eval_chart, overlap_defect, straightening_residual
from .flowverify import (
    Trajectory,
    decay_exponent,
    graph_invariance_residual,
    integrate,
    omega_limit_on_G,
)

__version__ = "0.1.0"

__all__ = [
    "StabmanError",
    "SpectralAnalysis", "analyze_matrix", "exp_growth_coefficient", "matrix_exponential",
    "principal_angle",
    "Splitting", "Thresholds", "build_splitting", "phi_bound_rhs", "smallness_thresholds",
    "FieldFamily", "NormTable", "build_family", "eval_derivative", "sampled_norms",
    "plateau_jet", "truncate_family",
    "DiscretePath", "OperatorContext", "apply_T", "estimate_contraction", "gamma_norm",
    "make_context", "solve_fixed_point", "solve_variational",
    "GraphContext", "check_phi_bounds", "make_graph_context", "phi", "phi_batch", "phi_jet",
    "Chart", "build_chart", "eval_chart", "overlap_defect", "straightening_residual",
    "Trajectory", "decay_exponent", "graph_invariance_residual", "integrate", "omega_limit_on_G",
]
