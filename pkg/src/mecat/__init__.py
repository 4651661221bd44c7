"""Master-equation computation toolkit for the driven isomerisation model.

Submodules:

* :mod:`mecat.generators` -- banded/sparse generator construction and checks
* :mod:`mecat.magnus` -- time-ordering correction ``sigma(t)`` and its kernel
* :mod:`mecat.exactexp` -- exact spectral/Jordan factorizations, fast
  binomial transforms, validated splitting, and the propagation front end
* :mod:`mecat.pseudospectra` -- resolvent norm grids and contours
* :mod:`mecat.stochastic` -- exact-thinning SSA and empirical marginals
* :mod:`mecat.cli` -- command-line entry point
"""

from __future__ import annotations

__version__ = "0.1.0"

from .generators import (  # noqa: F401
    Involution,
    LaplacianReport,
    RateFunction,
    SparseGenerator,
    TridiagonalGenerator,
    assemble,
    build_a0,
    build_a1,
    build_tasep_generator,
    cartan_split,
    check_laplacian,
    commutator,
    parse_rate,
)
from .magnus import (  # noqa: F401
    MagnusCoefficients,
    QuadratureSpec,
    sigma,
    sigma_reference,
    sigma_truncated,
    theta_kernel,
    volterra_residual,
)
from .exactexp import (  # noqa: F401
    JordanFactorization,
    SpectralFactorization,
    adjudicate_splittings,
    binomial_column,
    expm_a0_action,
    expm_a1_action,
    fast_z_apply,
    fast_ztilde_apply,
    jordan_factorization,
    propagate,
    spectral_factorization,
)
from .pseudospectra import (  # noqa: F401
    PseudospectrumGrid,
    contour_levels,
    eig_sensitivity_report,
    grid,
    smin,
)
from .stochastic import (  # noqa: F401
    EmpiricalMarginal,
    Trajectory,
    binomial_pmf,
    empirical_marginal,
    rre_theta,
    ssa_path,
    tv_distance,
)
