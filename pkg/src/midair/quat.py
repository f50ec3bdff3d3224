"""Unit-quaternion helpers.

Convention used throughout the package: scalar-first q = (w, x, y, z),
Hamilton product, and q represents the rotation taking body-frame vectors
into the inertial frame, v_I = rotate(q, v_B).
"""

import math

import numpy as np


def normalize(q):
    return np.asarray(q, dtype=float) / math.sqrt(float(np.dot(q, q)))


def multiply(q1, q2):
    """Hamilton product q1 ⊗ q2."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def rotate(q, v):
    """Rotate body-frame vector v into the inertial frame."""
    w, x, y, z = q
    vx, vy, vz = v
    # v' = v + 2 w (u × v) + 2 u × (u × v), u = vector part
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.array([
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    ])


def rotate_inverse(q, v):
    """Rotate inertial-frame vector v into the body frame."""
    return rotate(conjugate(q), v)


def to_matrix(q):
    """3×3 rotation matrix R with v_I = R @ v_B."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def from_matrix(R):
    """Quaternion from an orthonormal rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s,
                      0.25 * s,
                      (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s,
                      (R[0, 1] + R[1, 0]) / s,
                      0.25 * s,
                      (R[1, 2] + R[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s,
                      (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s,
                      0.25 * s])
    return normalize(q)


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    n = float(np.linalg.norm(axis))
    if n < 1e-15:
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = 0.5 * angle
    s = math.sin(half) / n
    return np.array([math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def integrate_rates(q, omega_body, dt):
    """Exact step for constant body rates: q ⊗ exp(½ ω dt)."""
    wx, wy, wz = omega_body
    angle = math.sqrt(wx * wx + wy * wy + wz * wz) * dt
    if angle < 1e-14:
        return normalize(multiply(q, np.array([1.0, 0.5 * wx * dt, 0.5 * wy * dt, 0.5 * wz * dt])))
    return normalize(multiply(q, from_axis_angle(np.array([wx, wy, wz]), angle)))


def random_unit(rng):
    """Uniformly distributed unit quaternion (uniform attitude)."""
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def tilt_angle(q):
    """Angle between the body z axis and the inertial z axis, rad.

    Zero when level (body z-down aligned with inertial down).
    """
    w, x, y, z = q
    c = 1.0 - 2.0 * (x * x + y * y)  # R[2,2]
    return math.acos(min(1.0, max(-1.0, c)))


def yaw_angle(q):
    """Heading of the body x axis projected on the horizontal plane, rad."""
    w, x, y, z = q
    return math.atan2(2.0 * (x * y + w * z), 1.0 - 2.0 * (y * y + z * z))
