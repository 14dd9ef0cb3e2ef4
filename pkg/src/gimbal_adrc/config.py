"""YAML scenario configuration: schema, validation and conversion to library objects.

Angles are given in degrees (angular rates in deg/s), frequencies in Hz,
everything else in SI. Unknown keys are rejected. Relative paths for input
files (base motion CSV, ``train_from`` configs) resolve against the config
file's directory; relative network paths resolve against the output directory.
See README.md for the full schema.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .adrc import AdrcGains
from .controllers import VARIANTS, ControllerVariant
from .disturbance import (BASE_CHANNELS, N_TERMS, ZERO_DISTURBANCE, ZERO_PROFILE,
                          BaseMotionProfile, DisturbanceCoeffs, Distortion, Sinusoid,
                          load_base_motion_csv, make_coeff_set)
from .dynamics import GimbalParams, GimbalState
from .errors import ConfigError, GimbalError
from .harness import Reference, Scenario, TrainingConfig
from .nn import LmConfig

OUT_ROOT_ENV = "GIMBAL_ADRC_OUT"
DEFAULT_OUT_ROOT = "runs"

_TOP_KEYS = {"name", "scenario", "reference", "plant", "nominal", "distortion", "disturbance",
             "base_motion", "controller", "training", "output"}
_ANGULAR_BASE = {"p", "q", "r", "phi", "theta", "psi"}


@dataclass(frozen=True)
class NetworkSpec:
    path: Path
    train_from: Path | None = None   # config whose training section produces this network


@dataclass(frozen=True)
class TrainingSpec:
    duration: float = 12.0
    reference_az: Reference = Reference("sweep", math.radians(5.0), 0.5, amplitude_end=math.radians(25.0),
                                        frequency_end=4.0, span=12.0)
    reference_el: Reference = Reference("sweep", math.radians(2.0), 0.5, amplitude_end=math.radians(18.0),
                                        frequency_end=4.0, span=12.0)
    config: TrainingConfig = TrainingConfig()
    network_out: str = "network.gmlp"


@dataclass(frozen=True)
class Config:
    source: Path | None
    name: str
    scenario: Scenario
    training: TrainingSpec
    network: NetworkSpec | None = None
    swap: tuple | None = None            # (t_switch, NetworkSpec)
    out_dir: Path = Path(DEFAULT_OUT_ROOT)
    settle_skip: float = 1.0
    variant_tag: str = "adrc"            # controller used by `run` when none is given

    def training_scenario(self) -> Scenario:
        tr = self.training
        return self.scenario.replace(duration=tr.duration, reference_az=tr.reference_az,
                                     reference_el=tr.reference_el,
                                     variant=ControllerVariant("adrc", self.scenario.variant.gains_az,
                                                               self.scenario.variant.gains_el))

    def default_network_path(self) -> Path:
        return self.out_dir / self.training.network_out


def _mapping(value, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(value).__name__}")
    return value


def _check_keys(section: dict, allowed, where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}; "
                          f"allowed: {', '.join(sorted(allowed))}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    return float(value)


def _int(value, where: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{where}: expected an integer >= {minimum}, got {value!r}")
    return value


def _vector(value, n: int, where: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ConfigError(f"{where}: expected a list of {n} numbers")
    return np.array([_number(v, f"{where}[{i}]") for i, v in enumerate(value)])


def _inertia(value, where: str) -> np.ndarray:
    if isinstance(value, (list, tuple)) and len(value) == 3 and all(isinstance(r, (list, tuple)) for r in value):
        return np.array([_vector(r, 3, f"{where}[{i}]") for i, r in enumerate(value)])
    return np.diag(_vector(value, 3, f"{where} (diagonal)"))


def _reference(section, where: str, span: float, for_sweep: bool = False) -> Reference:
    section = _mapping(section, where)
    _check_keys(section, {"kind", "amplitude", "frequency", "phase", "t0", "amplitude_end",
                          "frequency_end"}, where)
    kind = section.get("kind", "sweep" if for_sweep else "step")
    if kind not in ("step", "sine", "sweep"):
        raise ConfigError(f"{where}.kind: expected step, sine or sweep, got {kind!r}")
    get = lambda key, default=0.0: _number(section.get(key, default), f"{where}.{key}")
    return Reference(kind=kind, amplitude=math.radians(get("amplitude")), frequency=get("frequency"),
                     phase=math.radians(get("phase")), t0=get("t0"),
                     amplitude_end=math.radians(get("amplitude_end")),
                     frequency_end=get("frequency_end"), span=span)


def _params(section, where: str, base: GimbalParams = GimbalParams()) -> GimbalParams:
    section = _mapping(section, where)
    names = {f.name for f in fields(GimbalParams)}
    _check_keys(section, names, where)
    changes = {}
    for key, value in section.items():
        if key in ("inertia_az", "inertia_el"):
            changes[key] = _inertia(value, f"{where}.{key}")
        elif key.startswith("r_"):
            changes[key] = _vector(value, 3, f"{where}.{key}")
        elif key.startswith("for_limit"):
            lo, hi = _vector(value, 2, f"{where}.{key}")
            changes[key] = (math.radians(lo), math.radians(hi))
        else:
            changes[key] = _number(value, f"{where}.{key}")
    return base.replace(**changes)


def _disturbance(section, where: str) -> DisturbanceCoeffs:
    if section is None:
        return ZERO_DISTURBANCE
    section = _mapping(section, where)
    _check_keys(section, {"seed", "magnitude", "coeffs_az", "coeffs_el", "scale_az", "scale_el"}, where)
    explicit = "coeffs_az" in section or "coeffs_el" in section
    if explicit and ("seed" in section or "magnitude" in section):
        raise ConfigError(f"{where}: give either seed/magnitude or explicit coefficients, not both")
    scale_az = _number(section.get("scale_az", 1.0), f"{where}.scale_az")
    scale_el = _number(section.get("scale_el", 1.0), f"{where}.scale_el")
    if explicit:
        coeffs = [_vector(section.get(k, [0.0] * N_TERMS), N_TERMS, f"{where}.{k}")
                  for k in ("coeffs_az", "coeffs_el")]
        return DisturbanceCoeffs(coeffs[0], coeffs[1], scale_az, scale_el)
    seed = _int(section.get("seed", 0), f"{where}.seed", 0)
    magnitude = _number(section.get("magnitude", 0.0), f"{where}.magnitude")
    if magnitude < 0:
        raise ConfigError(f"{where}.magnitude must be >= 0")
    return make_coeff_set(seed, magnitude).scaled(scale_az, scale_el)


def _base_motion(section, where: str, root: Path) -> BaseMotionProfile:
    if section is None:
        return ZERO_PROFILE
    section = _mapping(section, where)
    _check_keys(section, {"kind", "channels", "offsets", "path"}, where)
    kind = section.get("kind", "zero")
    if kind == "zero":
        return ZERO_PROFILE
    if kind == "csv":
        if "path" not in section:
            raise ConfigError(f"{where}: csv base motion needs 'path'")
        path = Path(section["path"])
        return load_base_motion_csv(path if path.is_absolute() else root / path)
    if kind != "sinusoid-mix":
        raise ConfigError(f"{where}.kind: expected zero, sinusoid-mix or csv, got {kind!r}")
    unit = lambda name: math.radians(1.0) if name in _ANGULAR_BASE else 1.0
    channels = {}
    for name, terms in _mapping(section.get("channels"), f"{where}.channels").items():
        if name not in BASE_CHANNELS:
            raise ConfigError(f"{where}.channels: unknown channel {name!r}")
        if not isinstance(terms, list):
            raise ConfigError(f"{where}.channels.{name}: expected a list of sinusoids")
        out = []
        for i, term in enumerate(terms):
            w = f"{where}.channels.{name}[{i}]"
            term = _mapping(term, w)
            _check_keys(term, {"amplitude", "frequency", "phase"}, w)
            out.append(Sinusoid(_number(term.get("amplitude", 0.0), w) * unit(name),
                                _number(term.get("frequency", 0.0), w),
                                math.radians(_number(term.get("phase", 0.0), w))))
        channels[name] = out
    offsets = {}
    for name, value in _mapping(section.get("offsets"), f"{where}.offsets").items():
        if name not in BASE_CHANNELS:
            raise ConfigError(f"{where}.offsets: unknown channel {name!r}")
        offsets[name] = _number(value, f"{where}.offsets.{name}") * unit(name)
    return BaseMotionProfile("sinusoid-mix", channels, offsets)


def _gains(section, where: str) -> tuple:
    section = _mapping(section, where)
    names = {f.name for f in fields(AdrcGains)}
    if set(section) <= {"az", "el"} and section:
        per_axis = [section.get("az", {}), section.get("el", {})]
    else:
        per_axis = [section, section]
    out = []
    for axis, values in zip(("az", "el"), per_axis):
        values = _mapping(values, f"{where}.{axis}")
        _check_keys(values, names, f"{where}.{axis}")
        kwargs = {}
        for key, value in values.items():
            if key == "tg_substeps":
                kwargs[key] = _int(value, f"{where}.{axis}.tg_substeps", 1)
            else:
                kwargs[key] = _number(value, f"{where}.{axis}.{key}")
        out.append(AdrcGains(**kwargs))
    return tuple(out)


def _network(value, where: str, root: Path) -> NetworkSpec:
    if isinstance(value, str):
        value = {"path": value}
    section = _mapping(value, where)
    _check_keys(section, {"path", "train_from"}, where)
    if "path" not in section:
        raise ConfigError(f"{where}: missing 'path'")
    train_from = section.get("train_from")
    if train_from is not None:
        train_from = Path(train_from)
        train_from = train_from if train_from.is_absolute() else root / train_from
    return NetworkSpec(Path(section["path"]), train_from)


def _training(section, where: str) -> TrainingSpec:
    section = _mapping(section, where)
    _check_keys(section, {"duration", "sweep_az", "sweep_el", "seed", "stride", "lm",
                          "network_out"}, where)
    spec = TrainingSpec()
    duration = _number(section.get("duration", spec.duration), f"{where}.duration")
    if duration <= 0:
        raise ConfigError(f"{where}.duration must be positive")
    refs = []
    for key, default in (("sweep_az", spec.reference_az), ("sweep_el", spec.reference_el)):
        ref = _reference(section[key], f"{where}.{key}", duration, for_sweep=True) if key in section \
            else default
        refs.append(Reference(ref.kind, ref.amplitude, ref.frequency, ref.phase, ref.t0,
                              ref.amplitude_end, ref.frequency_end, span=duration))
    lm_section = _mapping(section.get("lm"), f"{where}.lm")
    lm_names = {f.name for f in fields(LmConfig)}
    _check_keys(lm_section, lm_names, f"{where}.lm")
    lm_kwargs = {}
    for key, value in lm_section.items():
        lm_kwargs[key] = (_int(value, f"{where}.lm.{key}", 1) if key == "max_iter"
                          else _number(value, f"{where}.lm.{key}"))
    cfg = TrainingConfig(LmConfig(**lm_kwargs),
                         seed=_int(section.get("seed", spec.config.seed), f"{where}.seed", 0),
                         stride=_int(section.get("stride", spec.config.stride), f"{where}.stride", 1))
    return TrainingSpec(duration, refs[0], refs[1], cfg, str(section.get("network_out", spec.network_out)))


def _out_dir(section, name: str) -> Path:
    root = Path(os.environ.get(OUT_ROOT_ENV, DEFAULT_OUT_ROOT))
    if section.get("dir") is not None:
        path = Path(str(section["dir"]))
        return path if path.is_absolute() else root / path
    return root / name


def parse_config(data, source: Path | None = None) -> Config:
    """Build a Config from an already-parsed YAML document."""
    try:
        return _parse(data, source)
    except ConfigError:
        raise
    except GimbalError as exc:   # library validation errors surface as config errors here
        raise ConfigError(str(exc)) from exc


def _parse(data, source: Path | None) -> Config:
    data = _mapping(data, "config")
    _check_keys(data, _TOP_KEYS, "config")
    root = source.parent if source is not None else Path(".")
    name = str(data.get("name", source.stem if source is not None else "scenario"))

    sc = _mapping(data.get("scenario"), "scenario")
    _check_keys(sc, {"duration", "dt", "plant_substeps", "motor_tau", "torque_limit", "noise_std",
                     "seed", "initial"}, "scenario")
    initial = _mapping(sc.get("initial"), "scenario.initial")
    _check_keys(initial, {"psi_a", "theta_m", "psi_a_dot", "theta_m_dot"}, "scenario.initial")
    init = GimbalState(*(math.radians(_number(initial.get(k, 0.0), f"scenario.initial.{k}"))
                         for k in ("psi_a", "theta_m", "psi_a_dot", "theta_m_dot")))

    ref = _mapping(data.get("reference"), "reference")
    _check_keys(ref, {"az", "el"}, "reference")

    nominal = _params(data.get("nominal"), "nominal")
    plant = _params(data.get("plant"), "plant")
    dist = _mapping(data.get("distortion"), "distortion")
    _check_keys(dist, {f.name for f in fields(Distortion)}, "distortion")
    plant = Distortion(**{k: _number(v, f"distortion.{k}") for k, v in dist.items()}).apply(plant)

    ctrl = _mapping(data.get("controller"), "controller")
    _check_keys(ctrl, {"variant", "gains", "network", "swap", "eso_input", "ctm_loop"}, "controller")
    tag = ctrl.get("variant", "adrc")
    if tag not in VARIANTS:
        raise ConfigError(f"controller.variant: expected one of {VARIANTS}, got {tag!r}")
    gains = _gains(ctrl.get("gains"), "controller.gains")
    network = _network(ctrl["network"], "controller.network", root) if "network" in ctrl else None
    swap = None
    if "swap" in ctrl:
        sw = _mapping(ctrl["swap"], "controller.swap")
        _check_keys(sw, {"time", "network"}, "controller.swap")
        if "time" not in sw or "network" not in sw:
            raise ConfigError("controller.swap needs 'time' and 'network'")
        swap = (_number(sw["time"], "controller.swap.time"),
                _network(sw["network"], "controller.swap.network", root))
    # The network itself is attached later (it may not exist yet).
    variant = ControllerVariant("adrc", gains[0], gains[1],
                                eso_input=ctrl.get("eso_input", "pre"),
                                ctm_loop=ctrl.get("ctm_loop", "algebraic"))

    torque_limit = sc.get("torque_limit")
    duration = _number(sc.get("duration", 8.0), "scenario.duration")
    scenario = Scenario(
        duration=duration,
        dt=_number(sc.get("dt", 0.001), "scenario.dt"),
        params=plant, nominal_params=nominal,
        disturbance=_disturbance(data.get("disturbance"), "disturbance"),
        base_motion=_base_motion(data.get("base_motion"), "base_motion", root),
        reference_az=_reference(ref.get("az"), "reference.az", duration),
        reference_el=_reference(ref.get("el"), "reference.el", duration),
        variant=variant,
        plant_substeps=_int(sc.get("plant_substeps", 1), "scenario.plant_substeps", 1),
        motor_tau=_number(sc.get("motor_tau", 0.0), "scenario.motor_tau"),
        torque_limit=None if torque_limit is None else _number(torque_limit, "scenario.torque_limit"),
        noise_std=math.radians(_number(sc.get("noise_std", 0.0), "scenario.noise_std")),
        seed=_int(sc.get("seed", 0), "scenario.seed", 0),
        initial_state=init, name=name)
    training = _training(data.get("training"), "training")
    out = _mapping(data.get("output"), "output")
    _check_keys(out, {"dir", "settle_skip"}, "output")
    config = Config(source, name, scenario, training, network, swap, _out_dir(out, name),
                    _number(out.get("settle_skip", 1.0), "output.settle_skip"), tag)
    # Validate the training sweep against the FOR limits up front.
    config.training_scenario()
    return config


def load_config(path) -> Config:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config not found: {path}")
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return parse_config(data, path)


def resolve_network_path(config: Config, spec: NetworkSpec) -> Path:
    return spec.path if spec.path.is_absolute() else config.out_dir / spec.path
