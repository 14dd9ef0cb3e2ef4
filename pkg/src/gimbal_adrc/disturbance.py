"""Polynomial disturbance torques and base-motion profiles.

Disturbance basis (37 terms, index 0..36 <-> k1..k37):

    singles   s = [th_dot, th, psi_dot, psi, psi^2, psi_dot^2, th^2, th_dot^2]
    0..7      s[0..7]
    8..35     s[i]*s[j] for i < j, in itertools.combinations order
    36        1 (state independent bias)

with th = theta_m, psi = psi_a. This ordering puts th_dot / th at k1 / k2
and psi_dot^2*th^2, psi_dot^2*th_dot^2, th_dot^2*th^2 at k34..k36.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import BaseMotionSample, GimbalParams, GimbalState
from .errors import InvalidInputError

N_TERMS = 37
SINGLE_NAMES = ("th_dot", "th", "psi_dot", "psi", "psi^2", "psi_dot^2", "th^2", "th_dot^2")
_PAIRS = tuple(itertools.combinations(range(8), 2))
_PAIR_I = np.array([i for i, _ in _PAIRS])
_PAIR_J = np.array([j for _, j in _PAIRS])
# Polynomial degree of each basis entry (used for coefficient scaling).
SINGLE_DEGREE = np.array([1, 1, 1, 1, 2, 2, 2, 2])
TERM_DEGREE = np.concatenate([SINGLE_DEGREE, SINGLE_DEGREE[_PAIR_I] + SINGLE_DEGREE[_PAIR_J], [0]])
# Number of rate factors (psi_dot, th_dot) in each basis entry.
SINGLE_RATE_ORDER = np.array([1, 0, 1, 0, 0, 2, 0, 2])
TERM_RATE_ORDER = np.concatenate([SINGLE_RATE_ORDER,
                                  SINGLE_RATE_ORDER[_PAIR_I] + SINGLE_RATE_ORDER[_PAIR_J], [0]])

BASE_CHANNELS = ("p", "q", "r", "ax", "ay", "az", "phi", "theta", "psi")
_FIELD = dict(zip(BASE_CHANNELS, ("p", "q", "r", "a_x", "a_y", "a_z", "phi", "theta", "psi")))


def term_names() -> list[str]:
    """Human-readable names of the 37 basis entries, in basis order."""
    pairs = [f"{SINGLE_NAMES[i]}*{SINGLE_NAMES[j]}" for i, j in _PAIRS]
    return list(SINGLE_NAMES) + pairs + ["1"]


def _singles(theta_m, theta_m_dot, psi_a, psi_a_dot):
    return np.array([theta_m_dot, theta_m, psi_a_dot, psi_a, psi_a * psi_a,
                     psi_a_dot * psi_a_dot, theta_m * theta_m, theta_m_dot * theta_m_dot])


def monomial_basis(theta_m: float, theta_m_dot: float, psi_a: float, psi_a_dot: float) -> np.ndarray:
    s = _singles(theta_m, theta_m_dot, psi_a, psi_a_dot)
    return np.concatenate([s, s[_PAIR_I] * s[_PAIR_J], [1.0]])


def monomial_basis_batch(theta_m, theta_m_dot, psi_a, psi_a_dot) -> np.ndarray:
    """Vectorized basis, shape (N, 37)."""
    s = _singles(*(np.asarray(a, dtype=float) for a in (theta_m, theta_m_dot, psi_a, psi_a_dot))).T
    return np.concatenate([s, s[:, _PAIR_I] * s[:, _PAIR_J], np.ones((len(s), 1))], axis=1)


@dataclass(frozen=True)
class DisturbanceCoeffs:
    coeffs_az: np.ndarray = field(default_factory=lambda: np.zeros(N_TERMS))
    coeffs_el: np.ndarray = field(default_factory=lambda: np.zeros(N_TERMS))
    scale_az: float = 1.0
    scale_el: float = 1.0

    def __post_init__(self):
        for name in ("coeffs_az", "coeffs_el"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (N_TERMS,):
                raise InvalidInputError(f"{name} must have exactly {N_TERMS} entries, got {arr.size}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        if not (math.isfinite(self.scale_az) and math.isfinite(self.scale_el)):
            raise InvalidInputError("disturbance scales must be finite")

    def scaled(self, scale_az: float, scale_el: float) -> "DisturbanceCoeffs":
        return DisturbanceCoeffs(self.coeffs_az, self.coeffs_el, scale_az, scale_el)

    def __add__(self, other: "DisturbanceCoeffs") -> "DisturbanceCoeffs":
        return DisturbanceCoeffs(self.scale_az * self.coeffs_az + other.scale_az * other.coeffs_az,
                                 self.scale_el * self.coeffs_el + other.scale_el * other.coeffs_el)

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.coeffs_az) and self.scale_az) and not (
            np.any(self.coeffs_el) and self.scale_el)

    def to_dict(self) -> dict:
        return {"coeffs_az": self.coeffs_az.tolist(), "coeffs_el": self.coeffs_el.tolist(),
                "scale_az": self.scale_az, "scale_el": self.scale_el}


ZERO_DISTURBANCE = DisturbanceCoeffs()


def disturbance_torque(coeffs: DisturbanceCoeffs, state: GimbalState) -> np.ndarray:
    """Per-axis disturbance torque (azimuth, elevation), N*m."""
    basis = monomial_basis(state.theta_m, state.theta_m_dot, state.psi_a, state.psi_a_dot)
    return np.array([coeffs.scale_az * float(coeffs.coeffs_az @ basis),
                     coeffs.scale_el * float(coeffs.coeffs_el @ basis)])


# Box over which make_coeff_set normalizes the torque magnitude.
COEFF_BOX = {"psi": math.radians(25.0), "th": math.radians(18.0), "rate": 10.0}
# Relative weight per polynomial degree 0..4: first-order (viscous, spring)
# terms dominate, high-order cross terms are small corrections. The constant
# bias is kept small since any observer removes it trivially.
DEGREE_WEIGHT = np.array([0.2, 1.0, 0.2, 0.04, 0.008])
# Extra factor per rate in a term. Rates at the box corner are far above
# typical tracking rates, so rate terms would otherwise set the torque
# ceiling while contributing little at ordinary operating points.
RATE_WEIGHT = 0.3


def term_box_maxima() -> np.ndarray:
    """|monomial| at the corner of the normalization box, per basis entry."""
    box = COEFF_BOX
    return np.abs(monomial_basis(box["th"], box["rate"], box["psi"], box["rate"]))


def make_coeff_set(seed: int, magnitude: float) -> DisturbanceCoeffs:
    """Reproducible synthetic coefficients with torque of order ``magnitude`` over the box.

    Each coefficient is uniform in [-1, 1], divided by its monomial's box
    maximum and weighted by degree and rate order, then the set is scaled so that the sum of
    absolute term contributions at the box corner equals ``2 * magnitude``.
    """
    if not magnitude >= 0:
        raise InvalidInputError("magnitude must be non-negative")
    rng = np.random.default_rng(seed)
    weights = DEGREE_WEIGHT[TERM_DEGREE] * RATE_WEIGHT ** TERM_RATE_ORDER / term_box_maxima()
    out = []
    for _ in range(2):
        raw = rng.uniform(-1.0, 1.0, N_TERMS) * weights
        corner_sum = float(np.sum(np.abs(raw) * term_box_maxima()))
        out.append(2.0 * magnitude * raw / corner_sum)
    return DisturbanceCoeffs(out[0], out[1])


# Seeded set used by the shipped scenarios.
DEFAULT_COEFF_SEED = 2
DEFAULT_MAGNITUDE = 5.0


def default_coeff_set() -> DisturbanceCoeffs:
    return make_coeff_set(DEFAULT_COEFF_SEED, DEFAULT_MAGNITUDE)


@dataclass(frozen=True)
class Distortion:
    """Plant-only parameter changes the controller's model does not know about.

    cog_az_y: azimuth CoG y coordinate (m); cog_el_z: elevation CoG z
    coordinate (m); inertia_az_xy: azimuth product of inertia J_xy = J_yx.
    None leaves the nominal value.
    """

    cog_az_y: float | None = None
    cog_el_z: float | None = None
    inertia_az_xy: float | None = None

    def apply(self, params: GimbalParams) -> GimbalParams:
        r_ga, r_gm, inertia = params.r_Ga_a.copy(), params.r_Gm_m.copy(), params.inertia_az.copy()
        if self.cog_az_y is not None:
            r_ga[1] = self.cog_az_y
        if self.cog_el_z is not None:
            r_gm[2] = self.cog_el_z
        if self.inertia_az_xy is not None:
            inertia[0, 1] = inertia[1, 0] = self.inertia_az_xy
        return params.replace(r_Ga_a=r_ga, r_Gm_m=r_gm, inertia_az=inertia)


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.frequency >= 0:
            raise InvalidInputError("sinusoid frequency must be >= 0")


@dataclass(frozen=True)
class BaseMotionProfile:
    """Base motion source: ``zero``, ``sinusoid-mix`` or ``csv``.

    For sinusoid-mix, ``channels`` maps a channel name (p, q, r, ax, ay, az,
    phi, theta, psi) to a list of Sinusoid terms and ``offsets`` to constant
    values. For csv, ``table`` is an (N, 10) array with columns
    t, p, q, r, ax, ay, az, phi, theta, psi.
    """

    kind: str = "zero"
    channels: dict = field(default_factory=dict)
    offsets: dict = field(default_factory=dict)
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "sinusoid-mix", "csv"):
            raise InvalidInputError(f"unknown base motion kind {self.kind!r}")
        for name in list(self.channels) + list(self.offsets):
            if name not in BASE_CHANNELS:
                raise InvalidInputError(f"unknown base motion channel {name!r}")
        if self.kind == "csv":
            table = np.asarray(self.table, dtype=float)
            if table.ndim != 2 or table.shape[1] != 10 or len(table) < 2:
                raise InvalidInputError("csv base motion needs >= 2 rows of 10 columns")
            if not np.all(np.diff(table[:, 0]) > 0):
                raise InvalidInputError("csv base motion times must be strictly increasing")
            if not np.all(np.isfinite(table)):
                raise InvalidInputError("csv base motion has non-finite entries")
            object.__setattr__(self, "table", table)

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "sinusoid-mix":
            return not any(self.offsets.values()) and not any(
                s.amplitude for terms in self.channels.values() for s in terms)
        return not np.any(self.table[:, 1:])


ZERO_PROFILE = BaseMotionProfile()


def load_base_motion_csv(path) -> BaseMotionProfile:
    """Read a base motion CSV with header ``t,p,q,r,ax,ay,az,phi,theta,psi``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        expected = ["t", *BASE_CHANNELS]
        if header != expected:
            raise InvalidInputError(f"{path}: header must be {','.join(expected)}")
        rows = [[float(v) for v in row] for row in reader if row]
    return BaseMotionProfile(kind="csv", table=np.array(rows))


def write_base_motion_csv(path, table) -> None:
    table = np.asarray(table, dtype=float)
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", *BASE_CHANNELS])
        writer.writerows([repr(float(v)) for v in row] for row in table)


def sample_base_motion(profile: BaseMotionProfile, t: float) -> BaseMotionSample:
    """Base motion at time t (linear interpolation for csv data)."""
    if t < 0:
        raise InvalidInputError("time must be non-negative")
    if profile.kind == "zero":
        return BaseMotionSample()
    values = {}
    rates = {"p": 0.0, "q": 0.0, "r": 0.0}
    if profile.kind == "sinusoid-mix":
        for name in BASE_CHANNELS:
            val = profile.offsets.get(name, 0.0)
            for s in profile.channels.get(name, ()):
                w = 2.0 * math.pi * s.frequency
                val += s.amplitude * math.sin(w * t + s.phase)
                if name in rates:
                    rates[name] += s.amplitude * w * math.cos(w * t + s.phase)
            values[name] = val
    else:
        table = profile.table
        times = table[:, 0]
        if t < times[0] or t > times[-1]:
            raise InvalidInputError(f"t={t} outside base motion data range [{times[0]}, {times[-1]}]")
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(max(k, 0), len(times) - 2)
        t0, t1 = times[k], times[k + 1]
        w = (t - t0) / (t1 - t0)
        row = table[k] * (1.0 - w) + table[k + 1] * w
        if w == 0.0:
            row = table[k]
        elif w == 1.0:
            row = table[k + 1]
        slope = (table[k + 1] - table[k]) / (t1 - t0)
        for i, name in enumerate(BASE_CHANNELS, start=1):
            values[name] = float(row[i])
            if name in rates:
                rates[name] = float(slope[i])
    kwargs = {_FIELD[name]: val for name, val in values.items()}
    return BaseMotionSample(**kwargs, p_dot=rates["p"], q_dot=rates["q"], r_dot=rates["r"])
