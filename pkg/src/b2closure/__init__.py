"""Three-term beta moment closure for the 3D radiative transfer equation.

Given realizable moments (E0, E1, E2) of an angular intensity, the closure
reconstructs a non-negative ansatz as a sum of three axisymmetric beta
kernels aligned with the eigenvectors of E2, and from it the third moments
needed to close the moment system.
"""

from .beta import (
    AnsatzTerm,
    BetaShape,
    Branch,
    beta_moment,
    beta_pdf,
    eval_ansatz,
    shape_from_moments,
    spherical_moments,
)
from .closure import (
    ClosureParams,
    closure_params,
    fluxes,
    g_func,
    h_func,
    nonneg_diagnostics,
    q_func,
    r_func,
    sigma_positive,
    sigma_weights,
    third_moments,
)
from .errors import *  # noqa: F401,F403
from .moments import (
    ClosureFrame,
    MomentState,
    Rotation,
    ThirdMoments,
    build_moments,
    eigenframe,
    moment_transform,
    realizability_margin,
    rotate_moments,
)

__version__ = "0.1.0"
