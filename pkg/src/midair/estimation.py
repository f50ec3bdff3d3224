"""Minimal onboard-style observers: complementary attitude filter and
constant-gain position/velocity fusion with external position fixes.

The attitude filter integrates bias-corrected gyro rates and pulls the tilt
toward the accelerometer gravity direction, but only while the specific
force magnitude is near 1 g -- during free fall or hard maneuvers the
correction is gated off and the filter coasts on the gyro.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .dynamics import GRAVITY

ATT_KP = 0.5          # tilt correction gain, 1/s
ATT_KI = 0.05         # gyro bias correction gain, 1/s^2
ACCEL_GATE = 0.3      # fraction of g: correction active if ||f|| within this of g
POS_GAIN = 5.0        # 1/s
VEL_GAIN = 2.0        # 1/s
FIX_TIMEOUT = 0.1     # s: dead-reckon only beyond this fix age


@dataclass
class NavState:
    """Estimated attitude, velocity, position, and gyro bias."""

    attitude_est: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    velocity_est: np.ndarray = field(default_factory=lambda: np.zeros(3))
    position_est: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias_est: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time_since_fix: float = math.inf
    _last_fix: np.ndarray = None
    _vel_fix: np.ndarray = None


def attitude_update(nav, gyro, specific_force, dt):
    """One complementary-filter step; mutates and returns nav.

    The accelerometer only observes tilt, so the correction is the cross
    product of measured and predicted gravity directions in the body frame.
    """
    rate = np.asarray(gyro, dtype=float) - nav.gyro_bias_est
    f = np.asarray(specific_force, dtype=float)
    f_norm = float(np.linalg.norm(f))
    if abs(f_norm - GRAVITY) <= ACCEL_GATE * GRAVITY:
        up_meas = f / f_norm  # direction opposite gravity, body frame
        up_pred = quat.rotate_inverse(nav.attitude_est, np.array([0.0, 0.0, -1.0]))
        err = np.cross(up_meas, up_pred)
        rate = rate + ATT_KP * err
        nav.gyro_bias_est = nav.gyro_bias_est - ATT_KI * err * dt
    nav.attitude_est = quat.integrate_rates(nav.attitude_est, rate, dt)
    return nav


def posvel_update(nav, accel_inertial, fix, dt):
    """Dead-reckon on the estimated inertial acceleration and blend in
    position fixes (and fix-derived velocity) with constant gains.

    fix is None on ticks without external positioning; a fix older than
    FIX_TIMEOUT stops the blending entirely.
    """
    a = np.asarray(accel_inertial, dtype=float)
    nav.position_est = nav.position_est + nav.velocity_est * dt + 0.5 * a * dt * dt
    nav.velocity_est = nav.velocity_est + a * dt
    nav.time_since_fix += dt

    if fix is not None:
        fix = np.asarray(fix, dtype=float)
        if nav._last_fix is not None and nav.time_since_fix < FIX_TIMEOUT:
            nav._vel_fix = (fix - nav._last_fix) / nav.time_since_fix
        nav._last_fix = fix.copy()
        nav.time_since_fix = 0.0

    if nav.time_since_fix <= FIX_TIMEOUT and nav._last_fix is not None:
        nav.position_est = nav.position_est \
            + POS_GAIN * dt * (nav._last_fix - nav.position_est)
        if nav._vel_fix is not None:
            nav.velocity_est = nav.velocity_est \
                + VEL_GAIN * dt * (nav._vel_fix - nav.velocity_est)
    return nav


def estimated_inertial_accel(nav, specific_force):
    """a^I = R(q_est) f^B + G^I from the current attitude estimate."""
    return quat.rotate(nav.attitude_est, specific_force) + np.array([0.0, 0.0, GRAVITY])
