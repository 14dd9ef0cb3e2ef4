"""Closed-loop simulation: fixed-step RK4 plant, 1 kHz controller, logging."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .controllers import (ControllerState, ControllerVariant, PlantFeedback, control_step)
from .disturbance import (ZERO_DISTURBANCE, ZERO_PROFILE, BaseMotionProfile, DisturbanceCoeffs,
                          disturbance_torque, sample_base_motion)
from .dynamics import GimbalParams, GimbalState, mass_and_bias, total_energy
from .errors import ConfigError, NumericError
from .nn import LmConfig, LmResult, Mlp, build_dataset, lm_train


def rk4_step(f, x, t: float, dt: float):
    """Classical fourth-order Runge-Kutta step of x' = f(t, x)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite state after RK4 step at t={t:.6f}")
    return out


@dataclass(frozen=True)
class Reference:
    """Per-axis position reference, radians.

    kind ``step``: amplitude from t0 on. ``sine``: amplitude*sin(2*pi*f*t + phase).
    ``sweep``: amplitude ramps amplitude->amplitude_end while the frequency
    ramps frequency->frequency_end linearly over ``span`` seconds.
    """

    kind: str = "step"
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    t0: float = 0.0
    amplitude_end: float = 0.0
    frequency_end: float = 0.0
    span: float = 1.0

    def __post_init__(self):
        if self.kind not in ("step", "sine", "sweep"):
            raise ConfigError(f"unknown reference kind {self.kind!r}")
        if self.frequency < 0 or self.frequency_end < 0:
            raise ConfigError("reference frequencies must be >= 0")
        if self.kind == "sweep" and not self.span > 0:
            raise ConfigError("sweep span must be positive")

    @property
    def peak(self) -> float:
        if self.kind == "sweep":
            return max(abs(self.amplitude), abs(self.amplitude_end))
        return abs(self.amplitude)

    def __call__(self, t: float) -> float:
        if self.kind == "step":
            return self.amplitude if t >= self.t0 else 0.0
        if self.kind == "sine":
            return self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)
        tau = min(t, self.span)
        amp = self.amplitude + (self.amplitude_end - self.amplitude) * tau / self.span
        cycles = self.frequency * tau + 0.5 * (self.frequency_end - self.frequency) * tau * tau / self.span
        if t > self.span:
            cycles += self.frequency_end * (t - self.span)
        return amp * math.sin(2.0 * math.pi * cycles + self.phase)


@dataclass(frozen=True)
class Scenario:
    """Everything that defines one closed-loop run.

    ``params`` is the plant (possibly distorted), ``nominal_params`` the model
    the controller's CTM blocks use.
    """

    duration: float = 8.0
    dt: float = 0.001
    params: GimbalParams = field(default_factory=GimbalParams)
    nominal_params: GimbalParams = field(default_factory=GimbalParams)
    disturbance: DisturbanceCoeffs = ZERO_DISTURBANCE
    base_motion: BaseMotionProfile = ZERO_PROFILE
    reference_az: Reference = Reference()
    reference_el: Reference = Reference()
    variant: ControllerVariant = field(default_factory=ControllerVariant)
    plant_substeps: int = 1
    motor_tau: float = 0.0
    torque_limit: float | None = None
    noise_std: float = 0.0
    seed: int = 0
    initial_state: GimbalState = GimbalState()
    name: str = "scenario"

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if not self.dt > 0:
            raise ConfigError("control period must be positive")
        if self.duration < self.dt:
            raise ConfigError(f"duration {self.duration} s is shorter than one control period")
        if self.plant_substeps < 1:
            raise ConfigError("plant_substeps must be >= 1")
        if self.motor_tau < 0 or self.noise_std < 0:
            raise ConfigError("motor_tau and noise_std must be >= 0")
        for axis, ref, limits in (("azimuth", self.reference_az, self.params.for_limit_az),
                                  ("elevation", self.reference_el, self.params.for_limit_el)):
            bound = min(abs(limits[0]), limits[1])
            if ref.peak > bound + 1e-12:
                raise ConfigError(f"{axis} reference amplitude {math.degrees(ref.peak):.3f} deg "
                                  f"exceeds FOR limit {math.degrees(bound):.3f} deg")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass
class RunLog:
    """Uniformly sampled record of a run; row k describes control step k at t = k*dt."""

    dt: float
    t: np.ndarray
    ref: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    q: np.ndarray
    q_dot: np.ndarray
    acc: np.ndarray        # realized plant acceleration under this step's torque
    acc_fb: np.ndarray     # acceleration seen by the controller (previous torque held)
    u0: np.ndarray
    u_adrc: np.ndarray
    u_cmd: np.ndarray
    comp: np.ndarray
    torque: np.ndarray
    dist_torque: np.ndarray
    energy: np.ndarray
    for_flag: np.ndarray
    final_state: np.ndarray = None

    CSV_HEADER = ("t,ref_az,ref_el,v1_az,v1_el,psi_a,theta_m,psi_a_dot,theta_m_dot,u_az,u_el,"
                  "comp_az,comp_el,T_az,T_el,Td_az,Td_el,energy").split(",")

    def __len__(self):
        return len(self.t)

    def csv_rows(self):
        cols = np.column_stack([self.t, self.ref, self.v1, self.q, self.q_dot, self.u_cmd,
                                self.comp, self.torque, self.dist_torque, self.energy])
        return cols

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_HEADER)
            for row in self.csv_rows():
                writer.writerow([repr(float(v)) for v in row])


def _motor(torque_cmd, applied, scenario: Scenario):
    out = torque_cmd
    if scenario.motor_tau > 0:
        alpha = 1.0 - math.exp(-scenario.dt / scenario.motor_tau)
        out = applied + alpha * (torque_cmd - applied)
    if scenario.torque_limit is not None:
        out = np.clip(out, -scenario.torque_limit, scenario.torque_limit)
    return out


def run_scenario(scenario: Scenario, controller_override=None) -> RunLog:
    """Simulate the closed loop; deterministic for a given scenario.

    ``controller_override(k, t, frame, feedback)`` is an optional per-step
    observer hook (used by tests to drive a shadow controller).
    """
    params, nominal = scenario.params, scenario.nominal_params
    coeffs, profile, variant = scenario.disturbance, scenario.base_motion, scenario.variant
    dt, n = scenario.dt, scenario.n_steps
    h = dt / scenario.plant_substeps
    rng = np.random.default_rng(scenario.seed)
    no_dist = coeffs.is_zero
    static_base = profile.is_zero

    def derivative(torque):
        def f(t, x):
            state = GimbalState(x[0], x[1], x[2], x[3])
            base = sample_base_motion(profile, t) if not static_base else _STATIC
            td = disturbance_torque(coeffs, state) if not no_dist else _ZERO2
            m, bias = mass_and_bias(params, state, base)
            acc = np.linalg.solve(m, torque + td - bias)
            return np.array([x[2], x[3], acc[0], acc[1]])
        return f

    cols = {name: np.zeros((n, 2)) for name in
            ("ref", "v1", "v2", "q", "q_dot", "acc", "acc_fb", "u0", "u_adrc", "u_cmd", "comp",
             "torque", "dist_torque")}
    energy = np.zeros(n)
    for_flag = np.zeros(n, dtype=bool)
    t_grid = np.arange(n) * dt

    x = scenario.initial_state.as_vector().astype(float)
    ctrl = ControllerState.initial(x[:2])
    applied = np.zeros(2)
    limits = (params.for_limit_az, params.for_limit_el)
    flagged = False

    for k in range(n):
        t = t_grid[k]
        state = GimbalState(x[0], x[1], x[2], x[3])
        base = sample_base_motion(profile, t)
        td = disturbance_torque(coeffs, state)
        m, bias = mass_and_bias(params, state, base)
        gain = np.linalg.inv(m)
        offset = gain @ (td - bias)
        feedback = PlantFeedback(x[:2].copy(), x[2:].copy(), gain @ applied + offset, gain, offset)
        refs = (scenario.reference_az(t), scenario.reference_el(t))
        meas = x[:2] + (rng.normal(0.0, scenario.noise_std, 2) if scenario.noise_std else 0.0)
        ctrl, torque_cmd, frame = control_step(variant, nominal, ctrl, refs, meas, feedback, base,
                                               dt, t)
        if controller_override is not None:
            controller_override(k, t, frame, feedback)
        applied = _motor(torque_cmd, applied, scenario)

        cols["ref"][k] = refs
        cols["v1"][k] = frame.v1
        cols["v2"][k] = frame.v2
        cols["q"][k] = x[:2]
        cols["q_dot"][k] = x[2:]
        cols["acc"][k] = gain @ applied + offset
        cols["acc_fb"][k] = feedback.q_ddot
        cols["u0"][k] = frame.u0
        cols["u_adrc"][k] = frame.u_adrc
        cols["u_cmd"][k] = frame.u_cmd
        cols["comp"][k] = frame.compensation
        cols["torque"][k] = applied
        cols["dist_torque"][k] = td
        energy[k] = total_energy(params, state, base)
        for_flag[k] = flagged

        f = derivative(applied)
        for j in range(scenario.plant_substeps):
            x = rk4_step(f, x, t + j * h, h)
        flagged = False
        for axis in range(2):
            lo, hi = limits[axis]
            if x[axis] < lo or x[axis] > hi:
                x[axis] = min(max(x[axis], lo), hi)
                x[axis + 2] = 0.0
                flagged = True

    return RunLog(dt, t_grid, energy=energy, for_flag=for_flag, final_state=x, **cols)


_STATIC = sample_base_motion(ZERO_PROFILE, 0.0)
_ZERO2 = np.zeros(2)


@dataclass(frozen=True)
class TrainingConfig:
    lm: LmConfig = LmConfig()
    seed: int = 7
    stride: int = 5


@dataclass
class TrainingOutcome:
    net: Mlp
    result: LmResult
    n_rows: int
    target_variance: float

    @property
    def final_mse(self) -> float:
        return self.result.history[-1]


def train_pipeline(scenario: Scenario, config: TrainingConfig = TrainingConfig(),
                   out_path=None) -> TrainingOutcome:
    """Run the sweep scenario under plain ADRC, build the dataset and fit the network."""
    sweep = scenario.replace(variant=replace(scenario.variant, tag="adrc", network=None,
                                             swap_schedule=()))
    log = run_scenario(sweep)
    data = build_dataset(log, stride=config.stride)
    net = Mlp.random(config.seed, inputs=data.inputs, targets=data.targets)
    result = lm_train(net, data, config.lm)
    if not np.all(np.isfinite(result.history)) or result.history[-1] > result.history[0]:
        raise NumericError("network training diverged", result.history)
    if out_path is not None:
        result.net.save(out_path)
    return TrainingOutcome(result.net, result, len(data), float(np.mean(data.targets.var(axis=0))))
