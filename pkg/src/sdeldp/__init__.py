"""Small-noise large deviation toolkit for one-dimensional SDEs whose drift
and diffusion coefficients may have jump discontinuities."""

from .action import (ActionBreakdown, Case1Params, action_decomposition,
                     case1_lagrangian, case1_reduced, occupation_measure,
                     rate_functional)
from .harness import (LdpReport, McEstimate, TiltPolicy, estimate_event,
                      ldp_curve, wilson_interval)
from .minimize import (EventSpec, FixedEndpoint, MinimizeResult, SupBall,
                       TerminalInterval, minimize_action, zero_energy_trajectory)
from .paths import GridPath
from .piecewise import (ConsistencyError, ModifiedPair, NonElliptic,
                        PiecewiseFunction, RatioNotPiecewiseConstant, SdeModel,
                        Segment, UnboundedGrowth, hat_coefficients, modify,
                        s_transform, side_limits, sigma_transform,
                        tilde_decomposition, validate_bounds)
from .simulate import (Misaligned, NotPiecewiseConstant, SimConfig, TiltSpec,
                       euler_maruyama, girsanov_weight, patchwork_sample,
                       standard_normals, terminal_values, tilted_sampler)
from .timechange import (Clock, ClockShort, apply_time_change, eta_clock,
                         invert_time_change)

__version__ = "0.1.0"

__all__ = [
    "ActionBreakdown", "Case1Params", "action_decomposition", "case1_lagrangian",
    "case1_reduced", "occupation_measure", "rate_functional",
    "LdpReport", "McEstimate", "TiltPolicy", "estimate_event", "ldp_curve",
    "wilson_interval",
    "EventSpec", "FixedEndpoint", "MinimizeResult", "SupBall", "TerminalInterval",
    "minimize_action", "zero_energy_trajectory",
    "GridPath",
    "ConsistencyError", "ModifiedPair", "NonElliptic", "PiecewiseFunction",
    "RatioNotPiecewiseConstant", "SdeModel", "Segment", "UnboundedGrowth",
    "hat_coefficients", "modify", "s_transform", "side_limits", "sigma_transform",
    "tilde_decomposition", "validate_bounds",
    "Misaligned", "NotPiecewiseConstant", "SimConfig", "TiltSpec",
    "euler_maruyama", "girsanov_weight", "patchwork_sample", "standard_normals",
    "terminal_values", "tilted_sampler",
    "Clock", "ClockShort", "apply_time_change", "eta_clock", "invert_time_change",
]
