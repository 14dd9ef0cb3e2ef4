"""The three closed-loop controller variants.

``adrc``      per-axis ADRC -> acceleration command u -> CTM -> torque
``nn-adrc``   u + network compensation (shared MIMO network) -> CTM
``ctm-adrc``  CTM torque plus the difference between the feedforward CTM and
              a second CTM driven by plant outputs
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adrc import AdrcGains, EsoState, TgState, adrc_axis_step
from .ctm import CtmInput, delta_torque, inverse_dynamics
from .dynamics import BaseMotionSample, GimbalParams, GimbalState, mass_and_bias
from .errors import ConfigError, InvalidInputError
from .nn import Mlp, nn_compensate

VARIANTS = ("adrc", "nn-adrc", "ctm-adrc")


@dataclass(frozen=True)
class ControllerVariant:
    """Controller structure and tuning.

    swap_schedule: ((t_switch, Mlp), ...) replacing ``network`` from t_switch on.
    eso_input: "pre" feeds each observer the ADRC command before network
        compensation, "post" the compensated command sent to the CTM.
    ctm_loop: "algebraic" resolves the second-CTM loop within the step using
        the plant's instantaneous acceleration response; "measured" uses the
        measured plant acceleration as is.
    """

    tag: str = "adrc"
    gains_az: AdrcGains = field(default_factory=AdrcGains)
    gains_el: AdrcGains = field(default_factory=AdrcGains)
    network: Mlp | None = None
    swap_schedule: tuple = ()
    eso_input: str = "pre"
    ctm_loop: str = "algebraic"

    def __post_init__(self):
        if self.tag not in VARIANTS:
            raise ConfigError(f"unknown controller {self.tag!r}; expected one of {VARIANTS}")
        if self.tag == "nn-adrc" and self.network is None:
            raise ConfigError("nn-adrc requires a trained network")
        if self.eso_input not in ("pre", "post"):
            raise ConfigError(f"eso_input must be 'pre' or 'post', got {self.eso_input!r}")
        if self.ctm_loop not in ("algebraic", "measured"):
            raise ConfigError(f"ctm_loop must be 'algebraic' or 'measured', got {self.ctm_loop!r}")
        object.__setattr__(self, "swap_schedule",
                           tuple(sorted(((float(t), n) for t, n in self.swap_schedule),
                                        key=lambda item: item[0])))

    def network_at(self, t: float) -> Mlp | None:
        net = self.network
        for t_switch, candidate in self.swap_schedule:
            if t >= t_switch:
                net = candidate
        return net


@dataclass(frozen=True)
class ControllerState:
    tg: tuple = (TgState(), TgState())
    eso: tuple = (EsoState(), EsoState())
    u_prev: tuple = (0.0, 0.0)

    @classmethod
    def initial(cls, q0=(0.0, 0.0)) -> "ControllerState":
        """Profile generators and observers started at the plant's initial angles."""
        return cls((TgState(q0[0], 0.0, q0[0]), TgState(q0[1], 0.0, q0[1])), (EsoState(q0[0]), EsoState(q0[1])))


@dataclass(frozen=True)
class PlantFeedback:
    """Plant outputs available to the controller at one step.

    q_ddot is the plant acceleration under the torque currently held. The
    optional affine response (accel_gain, accel_offset) gives the plant's
    acceleration for any torque applied at this instant.
    """

    q: np.ndarray
    q_dot: np.ndarray
    q_ddot: np.ndarray
    accel_gain: np.ndarray | None = None
    accel_offset: np.ndarray | None = None

    @property
    def kinematics(self) -> np.ndarray:
        return np.concatenate([self.q, self.q_dot, self.q_ddot])


@dataclass(frozen=True)
class ControlFrame:
    t: float
    v1: np.ndarray
    v2: np.ndarray
    u0: np.ndarray
    u_adrc: np.ndarray
    u_cmd: np.ndarray        # acceleration command handed to the CTM
    compensation: np.ndarray  # network accel (nn-adrc), delta torque (ctm-adrc), else 0
    torque: np.ndarray


def control_step(variant: ControllerVariant, params: GimbalParams, state: ControllerState,
                 references, measurements, feedback: PlantFeedback, base: BaseMotionSample,
                 dt: float, t: float = 0.0):
    """Advance the controller by one sample; returns (state, torques, frame).

    ``params`` is the nominal model used by the CTM blocks.
    """
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    references = np.asarray(references, dtype=float)
    measurements = np.asarray(measurements, dtype=float)
    gains = (variant.gains_az, variant.gains_el)
    steps = [adrc_axis_step(state.tg[i], state.eso[i], float(references[i]), float(measurements[i]), gains[i],
                            dt, state.u_prev[i]) for i in range(2)]
    v1 = np.array([s.v1 for s in steps])
    v2 = np.array([s.v2 for s in steps])
    u = np.array([s.u for s in steps])
    u0 = np.array([s.u0 for s in steps])
    compensation = np.zeros(2)
    u_cmd = u

    if variant.tag == "nn-adrc":
        net = variant.network_at(t)
        if net is None:
            raise ConfigError("nn-adrc requires a trained network")
        compensation = nn_compensate(net, feedback.kinematics)
        u_cmd = u + compensation

    first = CtmInput(v1, v2, u_cmd, base)
    torque = inverse_dynamics(params, first)

    if variant.tag == "ctm-adrc":
        if variant.ctm_loop == "algebraic" and feedback.accel_gain is not None:
            compensation = _resolve_second_ctm(params, torque, feedback, base)
        else:
            compensation = delta_torque(params, first, feedback.q, feedback.q_dot,
                                        feedback.q_ddot, base)
        torque = torque + compensation

    u_fed = u_cmd if variant.eso_input == "post" else u
    if not all(map(math.isfinite, torque)):
        raise InvalidInputError(f"controller produced non-finite torque at t={t}")
    new_state = ControllerState(tuple(s.tg for s in steps), tuple(s.eso for s in steps),
                                (float(u_fed[0]), float(u_fed[1])))
    frame = ControlFrame(t, v1, v2, u0, u, u_cmd, compensation, torque)
    return new_state, torque, frame


def _resolve_second_ctm(params, first_torque, feedback: PlantFeedback, base):
    """Delta torque T - T1 with T = T1 + (T1 - CTM2(plant acceleration under T)).

    The second CTM is linear in the plant acceleration and the plant's
    acceleration is affine in the applied torque, so the loop closes exactly:
    (I + M A) T = 2 T1 - M c - h.
    """
    state = GimbalState(feedback.q[0], feedback.q[1], feedback.q_dot[0], feedback.q_dot[1])
    m, h = mass_and_bias(params, state, base)
    lhs = np.eye(2) + m @ feedback.accel_gain
    rhs = 2.0 * first_torque - m @ feedback.accel_offset - h
    return np.linalg.solve(lhs, rhs) - first_torque


def mean_tracking_error(log, settle_skip: float = 1.0, t_end: float | None = None) -> np.ndarray:
    """Per-axis mean |reference - plant angle| in degrees over settle_skip < t <= t_end."""
    t = np.asarray(log.t)
    mask = t > settle_skip
    if t_end is not None:
        mask &= t <= t_end
    if not np.any(mask):
        raise InvalidInputError(f"no samples in MTE window ({settle_skip}, {t_end}]")
    err = np.abs(np.asarray(log.ref)[mask] - np.asarray(log.q)[mask])
    return np.degrees(err.mean(axis=0))


# Baselines below this (deg) make a relative change meaningless; reported as NaN.
MTE_FLOOR = 1e-9


def percent_decrease(baseline, variant) -> np.ndarray:
    baseline = np.asarray(baseline, dtype=float)
    variant = np.asarray(variant, dtype=float)
    safe = np.where(np.abs(baseline) > MTE_FLOOR, baseline, 1.0)
    return np.where(np.abs(baseline) > MTE_FLOOR, 100.0 * (baseline - variant) / safe, np.nan)
