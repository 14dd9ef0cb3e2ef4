"""
Rigid-body dynamics of a two-axis (azimuth over elevation) gimbal on a moving base.

Kinematic chain
---------------
    F_b  --(rotate psi_a about z_b)-->  F_a  --(rotate theta_m about y_a)-->  F_m

The azimuth joint A sits at ``r_a_b`` from the base origin (base frame), the
elevation joint M at ``r_m_a`` from A (azimuth frame). Each body's centre of
gravity is offset from its own joint by ``r_Ga_a`` / ``r_Gm_m``.

Equations of motion
-------------------
Generalized coordinates q = (psi_a, theta_m). Everything is expressed in the
base frame. For each body i the velocities are affine in q_dot,

    v_i = Jv_i q_dot (+ base terms),    w_i = Jw_i q_dot + w_b

with (z = base z axis, y_a = Rz(psi_a) e_y)

    Jw_a = [z, 0]                     Jv_a = [z x dGa, 0]
    Jw_m = [z, y_a]                   Jv_m = [z x (dM + dGm), y_a x dGm]

Projecting Newton-Euler onto the partial velocities (Kane's equations) gives

    M(q) q_ddot + h(q, q_dot, base) = T + T_dist

    M = sum_i  m_i Jv_i^T Jv_i + Jw_i^T I_i Jw_i
    h = sum_i  Jv_i^T m_i (a_i0 - g) + Jw_i^T (I_i alpha_i0 + w_i x I_i w_i)

where a_i0 / alpha_i0 are the absolute CoG / angular accelerations evaluated
with q_ddot = 0 (Coriolis, centripetal, base rotation and base translation
terms). Reaction forces never appear since the joint constraints are built
into the coordinates. ``total_energy`` provides the independent energy
function used to cross-check M and h (Euler-Lagrange residual, energy
balance).

Conventions: SI units, base z axis points down (NED-like), so a level base
sees gravity along +z_b. Base Euler angles are Z-Y-X (psi, theta, phi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError

MM = 1e-3
_Z = np.array([0.0, 0.0, 1.0])


def _diag_inertia(jxx, jyy, jzz):
    return np.diag([jxx, jyy, jzz]).astype(float)


@dataclass(frozen=True)
class GimbalParams:
    """Physical parameters of the two gimbal bodies.

    Defaults describe the reference hardware; offsets are stored in metres.
    """

    mass_az: float = 0.55
    mass_el: float = 1.138
    inertia_az: np.ndarray = field(default_factory=lambda: _diag_inertia(0.002, 0.004, 0.002))
    inertia_el: np.ndarray = field(default_factory=lambda: _diag_inertia(0.004, 0.003, 0.004))
    r_Ga_a: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.575]) * MM)
    r_Gm_m: np.ndarray = field(default_factory=lambda: np.array([0.0, -44.5, 0.0]) * MM)
    r_m_a: np.ndarray = field(default_factory=lambda: np.array([0.0, 44.5, 57.5]) * MM)
    r_a_b: np.ndarray = field(default_factory=lambda: np.array([31.625, 0.0, -57.5]) * MM)
    for_limit_az: tuple = (-math.radians(45.0), math.radians(45.0))
    for_limit_el: tuple = (-math.radians(20.0), math.radians(20.0))
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("inertia_az", "inertia_el"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(3, 3))
        for name in ("r_Ga_a", "r_Gm_m", "r_m_a", "r_a_b"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(3))
        object.__setattr__(self, "for_limit_az", tuple(float(v) for v in self.for_limit_az))
        object.__setattr__(self, "for_limit_el", tuple(float(v) for v in self.for_limit_el))

        if not (self.mass_az > 0 and self.mass_el > 0):
            raise InvalidInputError("gimbal masses must be strictly positive")
        for name in ("inertia_az", "inertia_el"):
            inertia = getattr(self, name)
            if not np.all(np.isfinite(inertia)):
                raise InvalidInputError(f"{name} has non-finite entries")
            if not np.allclose(inertia, inertia.T, rtol=0.0, atol=1e-15):
                raise InvalidInputError(f"{name} must be symmetric")
            # Off-diagonal distortions may break positive definiteness of a
            # single tensor (see is_physical); the diagonal must stay positive.
            if np.any(np.diag(inertia) <= 0):
                raise InvalidInputError(f"{name} needs positive principal moments")
        for name in ("r_Ga_a", "r_Gm_m", "r_m_a", "r_a_b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidInputError(f"{name} has non-finite entries")
        for name in ("for_limit_az", "for_limit_el"):
            lo, hi = getattr(self, name)
            if not lo < 0 < hi:
                raise InvalidInputError(f"{name} must satisfy lower < 0 < upper, got {(lo, hi)}")
        if not math.isfinite(self.gravity):
            raise InvalidInputError("gravity must be finite")

    def is_physical(self) -> bool:
        """True if both inertia tensors are positive definite."""
        return all(np.linalg.eigvalsh(i).min() > 0 for i in (self.inertia_az, self.inertia_el))

    def replace(self, **changes) -> "GimbalParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class GimbalState:
    psi_a: float = 0.0
    theta_m: float = 0.0
    psi_a_dot: float = 0.0
    theta_m_dot: float = 0.0

    def __post_init__(self):
        if not all(map(math.isfinite, (self.psi_a, self.theta_m, self.psi_a_dot, self.theta_m_dot))):
            raise InvalidInputError(f"non-finite gimbal state {self}")

    @classmethod
    def from_vector(cls, x) -> "GimbalState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))

    def as_vector(self) -> np.ndarray:
        return np.array([self.psi_a, self.theta_m, self.psi_a_dot, self.theta_m_dot])

    @property
    def q(self) -> np.ndarray:
        return np.array([self.psi_a, self.theta_m])

    @property
    def q_dot(self) -> np.ndarray:
        return np.array([self.psi_a_dot, self.theta_m_dot])


@dataclass(frozen=True)
class BaseMotionSample:
    """Carrier motion at one instant.

    ``p_dot, q_dot, r_dot`` (base angular acceleration) are needed for exact
    inertial coupling; profiles that know them analytically fill them in.
    """

    p: float = 0.0
    q: float = 0.0
    r: float = 0.0
    a_x: float = 0.0
    a_y: float = 0.0
    a_z: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    p_dot: float = 0.0
    q_dot: float = 0.0
    r_dot: float = 0.0

    def __post_init__(self):
        vals = (self.p, self.q, self.r, self.a_x, self.a_y, self.a_z, self.phi, self.theta,
                self.psi, self.p_dot, self.q_dot, self.r_dot)
        if not all(map(math.isfinite, vals)):
            raise InvalidInputError(f"non-finite base motion sample {self}")

    @property
    def omega(self) -> np.ndarray:
        return np.array([self.p, self.q, self.r])

    @property
    def omega_dot(self) -> np.ndarray:
        return np.array([self.p_dot, self.q_dot, self.r_dot])

    @property
    def accel(self) -> np.ndarray:
        return np.array([self.a_x, self.a_y, self.a_z])

    @property
    def is_stationary(self) -> bool:
        return not any((self.p, self.q, self.r, self.a_x, self.a_y, self.a_z,
                        self.p_dot, self.q_dot, self.r_dot))


STATIONARY = BaseMotionSample()


def gravity_in_base(params: GimbalParams, base: BaseMotionSample) -> np.ndarray:
    """Gravity acceleration vector expressed in the base frame."""
    sphi, cphi = math.sin(base.phi), math.cos(base.phi)
    sth, cth = math.sin(base.theta), math.cos(base.theta)
    return params.gravity * np.array([-sth, sphi * cth, cphi * cth])


def _cross(a, b):
    # Scalar form; np.cross is an order of magnitude slower on 3-vectors.
    a0, a1, a2 = a.tolist()
    b0, b1, b2 = b.tolist()
    return np.array((a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0))


@dataclass
class _Bodies:
    """Per-body kinematic quantities at one configuration (base frame)."""

    rho: list        # CoG positions relative to base origin
    jv: list         # 3x2 linear-velocity Jacobians
    jw: list         # 3x2 angular-velocity Jacobians
    inertia: list    # inertia tensors rotated into the base frame
    v_rel: list      # CoG velocity relative to the base
    w_rel: list      # angular velocity relative to the base
    a_rel0: list     # relative CoG acceleration with q_ddot = 0
    alpha_rel0: list


def _kinematics(params: GimbalParams, psi, theta, psi_dot, theta_dot) -> _Bodies:
    cp, sp = math.cos(psi), math.sin(psi)
    ct, st = math.cos(theta), math.sin(theta)
    rz = np.array([[cp, -sp, 0.0], [sp, cp, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[ct, 0.0, st], [0.0, 1.0, 0.0], [-st, 0.0, ct]])
    r_bm = rz @ ry
    y_a = rz[:, 1]

    joint_a = params.r_a_b
    d_ga = rz @ params.r_Ga_a
    d_m = rz @ params.r_m_a
    d_gm = r_bm @ params.r_Gm_m

    w_a = psi_dot * _Z
    w_m = w_a + theta_dot * y_a

    jv_a = np.zeros((3, 2))
    jv_a[:, 0] = _cross(_Z, d_ga)
    jv_m = np.empty((3, 2))
    jv_m[:, 0] = _cross(_Z, d_m + d_gm)
    jv_m[:, 1] = _cross(y_a, d_gm)
    jw_a = np.zeros((3, 2))
    jw_a[2, 0] = 1.0
    jw_m = np.column_stack((_Z, y_a))

    v_a = _cross(w_a, d_ga)
    v_m = _cross(w_a, d_m) + _cross(w_m, d_gm)

    alpha_m0 = psi_dot * theta_dot * _cross(_Z, y_a)
    a_a0 = _cross(w_a, _cross(w_a, d_ga))
    a_m0 = (_cross(w_a, _cross(w_a, d_m)) + _cross(alpha_m0, d_gm)
            + _cross(w_m, _cross(w_m, d_gm)))

    return _Bodies(
        rho=[joint_a + d_ga, joint_a + d_m + d_gm],
        jv=[jv_a, jv_m],
        jw=[jw_a, jw_m],
        inertia=[rz @ params.inertia_az @ rz.T, r_bm @ params.inertia_el @ r_bm.T],
        v_rel=[v_a, v_m],
        w_rel=[w_a, w_m],
        a_rel0=[a_a0, a_m0],
        alpha_rel0=[np.zeros(3), alpha_m0],
    )


def _check_state(state: GimbalState):
    if not isinstance(state, GimbalState):
        raise InvalidInputError(f"expected GimbalState, got {type(state).__name__}")


def _mass_matrix(params, bodies: _Bodies) -> np.ndarray:
    m = np.zeros((2, 2))
    for mass, jv, jw, inertia in zip((params.mass_az, params.mass_el), bodies.jv, bodies.jw,
                                     bodies.inertia):
        m += mass * (jv.T @ jv) + jw.T @ inertia @ jw
    return 0.5 * (m + m.T)


def _bias(params, bodies: _Bodies, base: BaseMotionSample) -> np.ndarray:
    g = gravity_in_base(params, base)
    w_b, wd_b, a_b = base.omega, base.omega_dot, base.accel
    moving = not base.is_stationary
    h = np.zeros(2)
    for i, mass in enumerate((params.mass_az, params.mass_el)):
        rho, v_rel, w_rel = bodies.rho[i], bodies.v_rel[i], bodies.w_rel[i]
        a0, w, alpha0 = bodies.a_rel0[i], w_rel, bodies.alpha_rel0[i]
        if moving:
            a0 = (a_b + _cross(wd_b, rho) + _cross(w_b, _cross(w_b, rho))
                  + 2.0 * _cross(w_b, v_rel) + a0)
            w = w_b + w_rel
            alpha0 = wd_b + alpha0 + _cross(w_b, w_rel)
        inertia = bodies.inertia[i]
        moment = inertia @ alpha0 + _cross(w, inertia @ w)
        h += bodies.jv[i].T @ (mass * (a0 - g)) + bodies.jw[i].T @ moment
    return h


def mass_matrix(params: GimbalParams, state: GimbalState) -> np.ndarray:
    """Generalized 2x2 inertia matrix M(q), symmetric positive definite."""
    _check_state(state)
    return _mass_matrix(params, _kinematics(params, state.psi_a, state.theta_m, 0.0, 0.0))


def bias_terms(params: GimbalParams, state: GimbalState,
               base: BaseMotionSample = STATIONARY) -> np.ndarray:
    """Generalized torque h(q, q_dot, base): Coriolis/centripetal, base coupling and gravity."""
    _check_state(state)
    return _bias(params, _kinematics(params, *state.as_vector()), base)


def mass_and_bias(params: GimbalParams, state: GimbalState,
                  base: BaseMotionSample = STATIONARY):
    """(M, h) sharing one kinematics evaluation."""
    _check_state(state)
    bodies = _kinematics(params, *state.as_vector())
    return _mass_matrix(params, bodies), _bias(params, bodies, base)


def forward_dynamics(params: GimbalParams, state: GimbalState, base: BaseMotionSample,
                     torques, disturbance=(0.0, 0.0)) -> np.ndarray:
    """Relative joint accelerations M^-1 (T + T_dist - h)."""
    torques = np.asarray(torques, dtype=float)
    disturbance = np.asarray(disturbance, dtype=float)
    if not (np.all(np.isfinite(torques)) and np.all(np.isfinite(disturbance))):
        raise InvalidInputError(f"non-finite torque input {torques}, {disturbance}")
    m, h = mass_and_bias(params, state, base)
    return np.linalg.solve(m, torques + disturbance - h)


def energy_terms(params: GimbalParams, state: GimbalState,
                 base: BaseMotionSample = STATIONARY):
    """(kinetic, potential) energy relative to a stationary base; potential datum at the base origin."""
    _check_state(state)
    bodies = _kinematics(params, *state.as_vector())
    g = gravity_in_base(params, base)
    kinetic = potential = 0.0
    for i, mass in enumerate((params.mass_az, params.mass_el)):
        v, w = bodies.v_rel[i], bodies.w_rel[i]
        kinetic += 0.5 * mass * float(v @ v) + 0.5 * float(w @ bodies.inertia[i] @ w)
        potential -= mass * float(g @ bodies.rho[i])
    return kinetic, potential


def total_energy(params: GimbalParams, state: GimbalState,
                 base: BaseMotionSample = STATIONARY) -> float:
    """Kinetic plus gravitational potential energy of both bodies (stationary base)."""
    kinetic, potential = energy_terms(params, state, base)
    return kinetic + potential
