"""Attitude, velocity, and position loops plus pole-placement gain tuning.

Quaternion attitude errors map to body-rate references through the
shortest-rotation axis; position control is nonlinear dynamic inversion of
a^I = R f^B + G^I around a cascade of proportional loops.  All gains derive
from the fitted actuator time constant: each cascade stage places the
damping of its closed second-order characteristic and is then approximated
as a first-order lag for the stage above.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .dynamics import GRAVITY

GRAVITY_VEC = np.array([0.0, 0.0, GRAVITY])  # inertial, z-down

DEFAULT_ZETAS = (0.8, 0.7, 0.7, 0.9)  # rate, attitude, velocity, position
ACCEL_REF_LIMIT = 2.0 * GRAVITY       # norm clamp on acceleration references
MIN_THRUST_DEMAND = 0.1 * GRAVITY     # below this the NDI direction is ill-defined


@dataclass
class Gains:
    """Cascade gains, one entry per body axis / inertial axis."""

    rate: np.ndarray = field(default_factory=lambda: np.zeros(3))      # D
    attitude: np.ndarray = field(default_factory=lambda: np.zeros(3))  # A
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))  # V
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))  # P
    zetas: tuple = DEFAULT_ZETAS


@dataclass
class Setpoint:
    """Where the vehicle should go and which way it should face."""

    position_ref: np.ndarray
    yaw_ref: float = 0.0


def attitude_rates(q, q_r, attitude_gains):
    """Body-rate reference from the attitude error q_e = q^-1 q_r.

    The error is forced onto the short side of the double cover; the rate
    reference is (rotation angle) * (unit axis o gains).
    """
    qe = quat.multiply(quat.conjugate(q), q_r)
    if qe[0] < 0.0:
        qe = -qe
    vec = qe[1:]
    norm = float(np.linalg.norm(vec))
    if norm < 1e-9:
        return np.zeros(3)
    angle = 2.0 * math.acos(min(1.0, max(-1.0, qe[0])))
    return angle * (vec / norm) * np.asarray(attitude_gains, dtype=float)


def rate_to_nu(omega_ref, omega_meas, rate_gains):
    """Angular-acceleration demand: elementwise D (omega_ref - omega)."""
    return np.asarray(rate_gains, dtype=float) * (np.asarray(omega_ref, dtype=float)
                                                  - np.asarray(omega_meas, dtype=float))


def position_ndi(a_ref, yaw_ref, last_q_r=None):
    """Attitude reference and thrust demand realizing an inertial
    acceleration reference.

    The body -z axis is aligned with the required specific force
    f^I = a_ref - G^I and the heading chosen so the body x axis projects
    onto the yaw_ref direction.  Returns (q_r, f_z_ref, ok); when the thrust
    demand is too small for the direction to be well defined, the last
    reference is held and ok = False.
    """
    f_inertial = np.asarray(a_ref, dtype=float) - GRAVITY_VEC
    f_norm = float(np.linalg.norm(f_inertial))
    if f_norm <= MIN_THRUST_DEMAND:
        held = last_q_r if last_q_r is not None else np.array([1.0, 0.0, 0.0, 0.0])
        return held, -max(f_norm, 0.0), False

    body_z = -f_inertial / f_norm
    heading = np.array([math.cos(yaw_ref), math.sin(yaw_ref), 0.0])
    body_y = np.cross(body_z, heading)
    n = float(np.linalg.norm(body_y))
    if n < 1e-6:
        # thrust nearly along the heading: fall back to the orthogonal heading
        heading = np.array([-math.sin(yaw_ref), math.cos(yaw_ref), 0.0])
        body_y = np.cross(body_z, heading)
        n = float(np.linalg.norm(body_y))
    body_y /= n
    body_x = np.cross(body_y, body_z)
    q_r = quat.from_matrix(np.column_stack([body_x, body_y, body_z]))
    return q_r, -f_norm, True


def pid_accel(pos_err, vel_err, gains):
    """Acceleration reference from the position/velocity cascade.

    The position loop emits a velocity reference P o pos_err; the velocity
    loop turns (that + vel_err) into acceleration through V.  No integral
    term -- the simulation has no steady disturbances to trim out.  The
    result is norm-clamped to 2 g.
    """
    pos_err = np.asarray(pos_err, dtype=float)
    vel_err = np.asarray(vel_err, dtype=float)
    a_ref = gains.velocity * (gains.position * pos_err + vel_err)
    norm = float(np.linalg.norm(a_ref))
    if norm > ACCEL_REF_LIMIT:
        a_ref = a_ref * (ACCEL_REF_LIMIT / norm)
    return a_ref


def tune_gains(tau_fitted, zetas=DEFAULT_ZETAS):
    """Pole-placement cascade gains from the fitted actuator time constant.

    Rate loop: the closed characteristic tau s^2 + s + D has damping
    zeta_D, giving D = 1/(4 zeta_D^2 tau).  Approximating the closed rate
    loop as D/(s + D), the same placement repeats up the cascade:
    A = D/(4 zeta_A^2), V = A/(4 zeta_V^2), P = V/(4 zeta_P^2).
    """
    if not 0.002 <= tau_fitted <= 0.200:
        raise ValueError(f"tau {tau_fitted * 1e3:.2f} ms outside the tuning gate")
    zd, za, zv, zp = zetas
    d = 1.0 / (4.0 * zd * zd * tau_fitted)
    a = d / (4.0 * za * za)
    v = a / (4.0 * zv * zv)
    p = v / (4.0 * zp * zp)
    return Gains(rate=np.full(3, d), attitude=np.full(3, a),
                 velocity=np.full(3, v), position=np.full(3, p), zetas=tuple(zetas))
