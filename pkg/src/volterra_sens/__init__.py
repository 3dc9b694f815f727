"""Monte Carlo simulation of stochastic Volterra models and estimation of
functional sensitivities of expectations with respect to the initial curve."""

__version__ = "0.1.0"

from .directions import DirectionSpec, apply_forward, direction_norm, preimage
from .engine import (
    PathBatch,
    TangentBatch,
    dump_batch,
    load_batch,
    shifted_curve,
    shifted_curves_at,
    simulate,
    simulate_rough_vol,
    simulate_tangent,
)
from .estimators import (
    Estimate,
    WeightTrack,
    bel_weight,
    chain_rule_oracle,
    estimate_additive,
    estimate_bel,
    estimate_fractional,
    estimate_fractional_singular,
    estimate_rough_vol_greek,
    estimate_second_order,
    fd_oracle,
    martingale_tracks,
)
from .fractional import (
    MartingaleTrack,
    frac_derivative_at_start_increments,
    frac_derivative_at_start_representation,
    rl_derivative_right,
    rl_integral_right,
)
from .grids import GridFunction, TimeGrid
from .kernels import (
    KernelSpec,
    ResolventSpec,
    kernel_cell_average,
    kernel_eval,
    resolvent_eval,
    resolvent_identity_residual,
)
from .models import (
    Coefficient1D,
    CoefficientSet,
    PayoffSpec,
    RoughVolModel,
    SVEModel,
    builtin_models,
    builtin_payoffs,
    make_model,
    make_payoff,
)
from .seeds import SeedSpec
from .special import MittagLefflerError, mittag_leffler

__all__ = [name for name in dir() if not name.startswith("_")]
