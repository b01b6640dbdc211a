"""Neural-network calibration of differential-equation models.

A feed-forward net maps observed state frames to model parameters; a
differentiable solver turns those parameters into predicted frames, and the
losses recorded along training yield posterior marginal densities.
"""
from .autodiff import Value, backward
from .density import expectation_std, marginal, mle, peak_stats
from .nn import NetSpec, forward, init_net
from .trainer import HWProblem, SIRProblem, TrainingConfig, calibrated_forecast, run_multiseed

__all__ = [
    "HWProblem",
    "NetSpec",
    "SIRProblem",
    "TrainingConfig",
    "Value",
    "backward",
    "calibrated_forecast",
    "expectation_std",
    "forward",
    "init_net",
    "marginal",
    "mle",
    "peak_stats",
    "run_multiseed",
]
