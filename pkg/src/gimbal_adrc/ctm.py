"""Computed Torque Model: ideal inverse dynamics of the gimbal.

The CTM is handed the *nominal* parameter set; disturbance torques and any
plant-side parameter distortions never enter it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import STATIONARY, BaseMotionSample, GimbalParams, GimbalState, mass_and_bias
from .errors import InvalidInputError


def _vec2(name, value) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be a finite 2-vector, got {value!r}")
    return arr


@dataclass(frozen=True)
class CtmInput:
    """Reference kinematics plus commanded acceleration, (azimuth, elevation) order."""

    q_ref: np.ndarray
    q_dot_ref: np.ndarray
    q_ddot_cmd: np.ndarray
    base: BaseMotionSample = STATIONARY

    def __post_init__(self):
        object.__setattr__(self, "q_ref", _vec2("q_ref", self.q_ref))
        object.__setattr__(self, "q_dot_ref", _vec2("q_dot_ref", self.q_dot_ref))
        object.__setattr__(self, "q_ddot_cmd", _vec2("q_ddot_cmd", self.q_ddot_cmd))


def _torque(params, q, q_dot, q_ddot, base):
    state = GimbalState(q[0], q[1], q_dot[0], q_dot[1])
    m, h = mass_and_bias(params, state, base)
    return m @ q_ddot + h


def inverse_dynamics(params: GimbalParams, ctm_input: CtmInput) -> np.ndarray:
    """Joint torques T = M(q_ref) q_ddot_cmd + h(q_ref, q_dot_ref, base)."""
    return _torque(params, ctm_input.q_ref, ctm_input.q_dot_ref, ctm_input.q_ddot_cmd,
                   ctm_input.base)


def delta_torque(params: GimbalParams, first: CtmInput, plant_q, plant_q_dot, plant_q_ddot,
                 base: BaseMotionSample | None = None) -> np.ndarray:
    """Torque difference between the feedforward CTM and a second CTM fed with plant outputs."""
    base = first.base if base is None else base
    second = _torque(params, _vec2("plant_q", plant_q), _vec2("plant_q_dot", plant_q_dot),
                     _vec2("plant_q_ddot", plant_q_ddot), base)
    return inverse_dynamics(params, first) - second
