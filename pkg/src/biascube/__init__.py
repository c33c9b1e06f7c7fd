"""Concentration inequalities on the biased discrete cube, verified numerically.

The package enumerates the biased cube exactly at small size, estimates by
seeded Monte Carlo at larger size, and ties both to the product-Poisson
scaling limit and to average-distortion bounds for cube embeddings. See the
cube, semigroup, engine, poisson and distortion modules, or drive everything
through the command line entry point (`biascube --help`).
"""

from biascube._core import BACKEND, HAVE_COMPILED
from biascube.cube import (
    BiasedMeasure,
    CubeFunction,
    CubePoint,
    NormSpec,
    biased_derivative,
    centered_lp_moment,
    diagonal_function,
    expect,
    flip_derivative,
    gradient_pth_moment_sum,
    lp_norm_spec,
    measure_weights,
    partial_derivative,
    random_cube_function,
    two_point_centered_moment,
)
from biascube.engine import (
    InequalityReport,
    MCSpec,
    concentration_ratio,
    extremal_search,
    pisier_rhs,
    poincare_rhs,
    score_gradient_moment_exact,
    score_gradient_moment_mc,
    sharpness_scan,
    verify_pisier,
    verify_poincare,
)
from biascube.quadrature import QuadratureError, QuadratureSpec, integrate_time
from biascube.semigroup import (
    KernelParams,
    apply_heat,
    dirichlet_form,
    dirichlet_form_gradient,
    generator,
    heat_derivative_residual,
    kernel_1d,
    sample_walk,
    sample_walk_clock,
    score,
    score_abs_moment,
    score_moment_bound,
    score_vector,
)

__version__ = "0.1.0"
