"""Single-axis ADRC: transient profile generator, extended state observer, WSEF.

One instance of the state pair (TgState, EsoState) exists per gimbal axis;
the functions here are pure and return new states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import InvalidInputError


@dataclass(frozen=True)
class AdrcGains:
    """Tunable ADRC parameter set for one axis.

    r        profile generator acceleration bound (rad/s^2)
    k1, k2   WSEF position / rate weights
    beta01..beta03  observer gains
    alpha1, alpha2  fal exponents
    delta    fal linear-zone half width (rad)
    b0       input scaling
    tg_substeps  profile generator substeps per sample; the reference is
             linearly interpolated between samples so v2 tracks its slope

    The defaults place the linearized loops at wc = 80 rad/s (k1 = wc^2,
    k2 = 2 wc) and the observer at wo = 300 rad/s (beta01 = 3 wo, and
    beta02, beta03 chosen so that inside the fal linear zone the effective
    gains are 3 wo^2 and wo^3); see ``from_bandwidth``.
    """

    r: float = 1000.0
    k1: float = 6400.0
    k2: float = 160.0
    beta01: float = 900.0
    beta02: float = 27000.0
    beta03: float = 853815.0
    alpha1: float = 0.5
    alpha2: float = 0.25
    delta: float = 0.01
    b0: float = 1.0
    tg_substeps: int = 20

    @classmethod
    def from_bandwidth(cls, wc: float, wo: float, r: float = 1000.0, delta: float = 0.01,
                       **overrides) -> "AdrcGains":
        """Gains from controller / observer bandwidths (rad/s)."""
        alpha1 = overrides.pop("alpha1", 0.5)
        alpha2 = overrides.pop("alpha2", 0.25)
        return cls(r=r, k1=wc * wc, k2=2.0 * wc, beta01=3.0 * wo,
                   beta02=3.0 * wo * wo * delta ** (1.0 - alpha1),
                   beta03=wo ** 3 * delta ** (1.0 - alpha2),
                   alpha1=alpha1, alpha2=alpha2, delta=delta, **overrides)

    def __post_init__(self):
        values = [getattr(self, f) for f in self.__dataclass_fields__]
        if not all(math.isfinite(v) for v in values):
            raise InvalidInputError(f"non-finite ADRC gain in {self}")
        if self.r <= 0:
            raise InvalidInputError("r must be positive")
        if self.delta <= 0:
            raise InvalidInputError("delta must be positive")
        if not 0 < self.alpha2 <= self.alpha1 <= 1:
            raise InvalidInputError("need 0 < alpha2 <= alpha1 <= 1")
        if self.b0 == 0:
            raise InvalidInputError("b0 must be non-zero")
        if min(self.beta01, self.beta02, self.beta03) <= 0:
            raise InvalidInputError("observer gains must be positive")
        if int(self.tg_substeps) != self.tg_substeps or self.tg_substeps < 1:
            raise InvalidInputError("tg_substeps must be a positive integer")


@dataclass(frozen=True)
class TgState:
    """Profile generator state; ``ref`` is the last reference sample (None before the first)."""

    v1: float = 0.0
    v2: float = 0.0
    ref: float | None = None


@dataclass(frozen=True)
class EsoState:
    z1: float = 0.0
    z2: float = 0.0
    z3: float = 0.0


class AxisStep(NamedTuple):
    tg: TgState
    eso: EsoState
    u: float
    v1: float
    v2: float
    u0: float


def _sign(x: float) -> float:
    return float(x > 0) - float(x < 0)


def fal(e: float, alpha: float, delta: float) -> float:
    """Power-law gain, linear inside |e| <= delta."""
    if not delta > 0:
        raise InvalidInputError(f"fal needs delta > 0, got {delta}")
    if abs(e) <= delta:
        return e / delta ** (1.0 - alpha)
    return abs(e) ** alpha * _sign(e)


def tg_step(state: TgState, v: float, r: float, dt: float) -> TgState:
    """Advance v1' = v2, v2' = -r sign(v1 - v + v2|v2|/(2r)) by dt, reference held.

    The bang-bang system is integrated exactly: a constant-acceleration arc
    up to the switching curve, then the braking arc along the curve (the
    sliding solution), then rest at (v, 0). A plain Euler update chatters
    across the curve and overshoots by O(r dt^2).
    """
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    if not (math.isfinite(v) and math.isfinite(state.v1) and math.isfinite(state.v2)):
        raise InvalidInputError("non-finite profile generator input")
    x, y = state.v1 - v, state.v2
    remaining = dt
    for _ in range(3):
        if x == 0.0 and y == 0.0:
            break
        s = x + y * abs(y) / (2.0 * r)
        scale = abs(x) + y * y / (2.0 * r)
        if abs(s) <= 1e-12 * scale:
            if y == 0.0:
                x = 0.0
                break
            t_stop = abs(y) / r
            if remaining >= t_stop:
                x, y = 0.0, 0.0
                break
            y -= r * _sign(y) * remaining
            x = -y * abs(y) / (2.0 * r)
            break
        sigma = _sign(s)
        a = -r * sigma
        t_hit = (sigma * y + math.sqrt(0.5 * y * y + r * sigma * x)) / r
        if t_hit >= remaining:
            x += y * remaining + 0.5 * a * remaining * remaining
            y += a * remaining
            break
        y += a * t_hit
        x = -y * abs(y) / (2.0 * r)
        remaining -= t_hit
    return TgState(v + x, y, v)


def tg_advance(state: TgState, v: float, r: float, dt: float, substeps: int = 1) -> TgState:
    """Advance the profile generator over one sample period toward sample ``v``.

    The reference is interpolated linearly from the previous sample over
    ``substeps`` exact sub-intervals. With a held reference the generator
    reaches each new sample within a fraction of the period when r is large
    and v2 collapses to zero between samples; interpolation keeps v2 on the
    reference slope.
    """
    start = v if state.ref is None else state.ref
    h = dt / substeps
    for j in range(1, substeps + 1):
        target = v if j == substeps else start + (v - start) * (j / substeps)
        state = tg_step(state, target, r, h)
    return state


def eso_step(state: EsoState, y: float, u: float, gains: AdrcGains, dt: float) -> EsoState:
    """One explicit-Euler step of the third-order extended state observer."""
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    e = state.z1 - y
    fe = fal(e, gains.alpha1, gains.delta)
    fe1 = fal(e, gains.alpha2, gains.delta)
    z1 = state.z1 + dt * (state.z2 - gains.beta01 * e)
    z2 = state.z2 + dt * (state.z3 + gains.b0 * u - gains.beta02 * fe)
    z3 = state.z3 + dt * (-gains.beta03 * fe1)
    if not (math.isfinite(z1) and math.isfinite(z2) and math.isfinite(z3)):
        raise InvalidInputError("observer state became non-finite")
    return EsoState(z1, z2, z3)


def wsef(e1: float, e2: float, z3: float, gains: AdrcGains) -> tuple[float, float]:
    """Weighted state error feedback: returns (u0, u) with u = (u0 - z3) / b0."""
    u0 = gains.k1 * e1 + gains.k2 * e2
    return u0, (u0 - z3) / gains.b0


def adrc_axis_step(tg: TgState, eso: EsoState, reference: float, measurement: float,
                   gains: AdrcGains, dt: float, u_prev: float = 0.0) -> AxisStep:
    """Profile generator, observer (fed the previous command) and WSEF for one axis."""
    tg = tg_advance(tg, reference, gains.r, dt, int(gains.tg_substeps))
    eso = eso_step(eso, measurement, u_prev, gains, dt)
    u0, u = wsef(tg.v1 - eso.z1, tg.v2 - eso.z2, eso.z3, gains)
    return AxisStep(tg, eso, u, tg.v1, tg.v2, u0)
