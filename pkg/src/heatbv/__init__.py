"""Heat-semigroup characterizations of total variation on model manifolds.

The package computes ``t^(-1/2) int int |f(x) - f(y)| p_t(x, y)`` and related
functionals on the circle, flat tori and the unit sphere, and checks their
small-time limit ``(2/sqrt(pi)) ||Df||(M)`` against closed-form total
variations and an independent Brownian-motion Monte Carlo.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .manifolds import (  # noqa: F401
    Kind,
    ManifoldDescriptor,
    QuadratureGrid,
    build_quadrature,
    circle,
    distance,
    exp_map,
    flat_torus,
    manifold_from_id,
    parallel_transport,
    polar_jacobian,
    sample_uniform,
    sphere2,
)
from .kernels import (  # noqa: F401
    KernelComparisonReport,
    SpectralKernel,
    TruncationPolicy,
    apply_semigroup,
    compare_kernels,
    eval_gaussian_kernel,
    eval_heat_kernel,
    semigroup_defect,
)
from .fields import (  # noqa: F401
    ScalarField,
    VariationReference,
    canonical_field,
    complement,
    gradient_norm_field,
    parse_field,
    registry_ids,
    sobolev_p_energy,
    total_variation_reference,
)
from .functionals import (  # noqa: F401
    ConvergenceReport,
    FunctionalConfig,
    bv_functional,
    bv_functional_gaussian_ball,
    degiorgi_functional,
    extrapolate_limit,
    run_convergence,
    sobolev_constant,
    tail_contribution,
)
from .stochastic import (  # noqa: F401
    BrownianPath,
    MCEstimate,
    RandomWalkConfig,
    feynman_kac_oneform,
    gaussian_absmoment_check,
    mc_bv_estimate,
    sample_path,
)
