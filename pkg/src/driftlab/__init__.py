"""Checks and Monte Carlo estimators for uniform moment bounds of stochastic processes under drift conditions."""

__version__ = "0.1.0"

from .core import OrthantMask, in_orthant, leq_orthant, norm_l1, norm_l2, reflect  # noqa: E402
from .model import Ball, Box, FunctionModel, ModelError, ProcessModel, Trajectory, simulate_trajectory  # noqa: E402
from .stability import (  # noqa: E402
    check_drift,
    check_jump_bound,
    check_structural,
    estimate_sup_moment,
    theorem_rate_bound,
)
from .walks import CoordinateWalk, LatticeWalk, walk_preset  # noqa: E402
from .ifs import IfsModel, check_prop_ifs, radial_ifs  # noqa: E402
from .invariant import (  # noqa: E402
    EmpiricalMeasure,
    cesaro_estimate,
    stationarity_residual,
    tightness_diagnostic,
    truncated_stationary_oracle,
)
from .brn import (  # noqa: E402
    JumpChainModel,
    ReactionNetwork,
    check_brs,
    drift_F,
    invariant_from_jumpchain,
    jump_chain_kernel,
    moment_Fp,
    propensity,
    simulate_ctmc,
    simulate_jump_chain,
    total_rate,
)
from .martlab import doob_decompose, fit_increment_scaling, fit_tau_tail  # noqa: E402
