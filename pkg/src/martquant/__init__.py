"""Convex-order preserving quantization and martingale transport on finite grids.

Voronoi grids quantize a law from below in the convex order, splitting
(dual) grids from above; couplings between the two quantizations stay
martingales, so transport values can be computed on small LPs.
"""
__version__ = "0.1.0"

from .coupling import QuantizedCouplingBundle, aw_p, build_pi_bar, coupling_distance_w_p, wmot_value_via_kernel_cost
from .dual import (
    SplittingKernel,
    dual_distortion_1d,
    dual_distortion_lp,
    dual_quantize_1d,
    optimal_dual_1d,
    optimal_dual_1d_quadratic,
    split_1d,
)
from .exceptions import ConvergenceError, ConvexOrderError
from .lp import LinearProgram, LpError, LpSolution, solve
from .measure import (
    Analytic1DMeasure,
    DiscreteMeasure,
    PotentialFunction,
    convex_order_leq_1d,
    discretize,
    invsqrt,
    mu6,
    mu6check,
    potential,
    power,
    tri2x,
    uniform,
    uniform01,
)
from .primal import (
    QuantizationResult,
    Quantizer,
    assign,
    distortion,
    lloyd,
    optimal_primal_1d,
    project,
    sqrt_density_grid,
    stationarity_residual,
)
from .transport import (
    Coupling,
    CostSpec,
    MartingaleCoupling,
    convex_order_feasible,
    m_p,
    mot_value,
    w_p,
    w_p_analytic_1d,
)
