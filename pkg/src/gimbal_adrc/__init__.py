"""Two-axis gimbal tracking with ADRC, a learned compensator and a second computed-torque loop."""

from .adrc import AdrcGains
from .controllers import VARIANTS, ControllerVariant, mean_tracking_error, percent_decrease
from .disturbance import DisturbanceCoeffs, Distortion, default_coeff_set, make_coeff_set
from .dynamics import BaseMotionSample, GimbalParams, GimbalState, forward_dynamics
from .errors import ConfigError, GimbalError, InvalidInputError, NumericError
from .harness import Reference, RunLog, Scenario, run_scenario, train_pipeline
from .nn import Mlp

__version__ = "0.1.0"

__all__ = [
    "AdrcGains", "VARIANTS", "ControllerVariant", "mean_tracking_error", "percent_decrease",
    "DisturbanceCoeffs", "Distortion", "default_coeff_set", "make_coeff_set",
    "BaseMotionSample", "GimbalParams", "GimbalState", "forward_dynamics",
    "ConfigError", "GimbalError", "InvalidInputError", "NumericError",
    "Reference", "RunLog", "Scenario", "run_scenario", "train_pipeline", "Mlp",
]
