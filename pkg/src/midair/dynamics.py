"""Ground-truth rigid-body quadrotor simulator.

Frames: body x-forward / y-right / z-down, inertial z-down, so gravity is
(0, 0, +g) and rotor thrust acts along -z in the body frame.  Rotors follow
a first-order speed lag toward the ESC steady-state map, thrust is quadratic
in rotor speed, and yaw reaction torque combines propeller drag with the
rotor-inertia term from spin-up/spin-down.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import quat

GRAVITY = 9.81  # m/s^2

# Hard clip applied to rate measurements, +-2000 deg/s in rad/s.
GYRO_LIMIT = math.radians(2000.0)

MAX_STEP_DT = 0.005  # s


@dataclass
class VehicleParams:
    """Physical description of one (possibly randomized) quadrotor.

    rotor_positions are body-frame offsets of each rotor from the CoM [m],
    rotor_spin_dirs are +-1 (positive = right-handed about the thrust axis),
    k_thrust maps speed to thrust via T = k w^2 [N s^2/rad^2], moment_const
    is the propeller torque-to-thrust ratio [m], and rotor_inertia is the
    spinning mass inertia that generates yaw reaction torque from wdot.
    """

    mass: float
    inertia: np.ndarray                 # 3x3, kg m^2
    rotor_positions: np.ndarray         # 4x3, m
    rotor_spin_dirs: np.ndarray         # 4, +-1
    k_thrust: float                     # N s^2/rad^2
    moment_const: float                 # m
    tau: float                          # s
    kappa: float
    omega_max: float                    # rad/s
    omega_idle: float                   # rad/s
    imu_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotor_inertia: float = 1.0e-6       # kg m^2

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        self.rotor_positions = np.asarray(self.rotor_positions, dtype=float)
        self.rotor_spin_dirs = np.asarray(self.rotor_spin_dirs, dtype=float)
        self.imu_offset = np.asarray(self.imu_offset, dtype=float)
        self.validate()
        self._cache = None

    def validate(self):
        if not self.mass > 0.0:
            raise ValueError("mass must be positive")
        if not np.allclose(self.inertia, self.inertia.T, rtol=1e-9, atol=1e-12):
            raise ValueError("inertia tensor must be symmetric")
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0.0):
            raise ValueError("inertia tensor must be positive definite")
        if not self.tau > 0.0:
            raise ValueError("tau must be positive")
        if self.kappa < 0.0:
            raise ValueError("kappa must be non-negative")
        if not self.omega_max > self.omega_idle >= 0.0:
            raise ValueError("need omega_max > omega_idle >= 0")

    def hover_feasible(self):
        return 4.0 * self.k_thrust * self.omega_max ** 2 > self.mass * GRAVITY

    def _scalars(self):
        """Flat tuple of python floats for the integration hot loop."""
        if self._cache is None:
            inv_inertia = np.linalg.inv(self.inertia)
            self._cache = (
                1.0 / self.mass,
                tuple(self.inertia.ravel()),
                tuple(inv_inertia.ravel()),
                tuple(self.rotor_positions[:, 0]),
                tuple(self.rotor_positions[:, 1]),
                tuple(self.rotor_spin_dirs),
                self.k_thrust,
                self.moment_const,
                self.rotor_inertia,
                1.0 / self.tau,
                self.omega_max,
                self.kappa,
                self.omega_idle,
            )
        return self._cache


@dataclass
class VehicleRanges:
    """Uniform sampling ranges (lo, hi) for vehicle randomization.

    Inertia is built from gyration-radius fractions of the motor spans, so
    the sampled tensors are diagonal and automatically physical.  b2_yaw is
    the target magnitude of the yaw column of the rotor-acceleration
    effectiveness; rotor_inertia is derived from it.  thrust_to_weight is a
    rejection band, not a sampled field: candidates outside it are redrawn,
    which both enforces hover capability and keeps the excitation impulse
    commensurate with the gyro margin.
    """

    mass: tuple = (0.45, 0.80)
    span_x: tuple = (0.18, 0.26)        # front-rear motor distance, m
    span_y: tuple = (0.18, 0.26)        # left-right motor distance, m
    k_thrust: tuple = (2.0e-7, 3.2e-7)
    moment_const: tuple = (0.010, 0.020)
    tau: tuple = (0.011, 0.020)
    kappa: tuple = (0.15, 0.75)
    omega_max: tuple = (3600.0, 4600.0)
    omega_idle: tuple = (150.0, 500.0)
    gyration_radius: tuple = (0.055, 0.085)      # roll-axis, m (mass sits centrally)
    pitch_roll_inertia_ratio: tuple = (0.95, 1.25)  # Iyy / Ixx
    z_inertia_ratio: tuple = (0.60, 0.75)        # Izz / (Ixx + Iyy)
    b2_yaw: tuple = (0.6e-3, 1.4e-3)    # rad/s^2 per rad/s^2
    imu_offset: tuple = (-0.005, 0.005)
    thrust_to_weight: tuple = (1.8, 3.2)

    def validate(self):
        for name, (lo, hi) in self.__dict__.items():
            if lo > hi:
                raise ValueError(f"degenerate range for {name}: {lo} > {hi}")


# Motor order: front-right, rear-left, front-left, rear-right.  Diagonal
# pairs share spin direction; the excitation schedule walks this order.
_LAYOUT_X = np.array([+0.5, -0.5, +0.5, -0.5])
_LAYOUT_Y = np.array([+0.5, -0.5, -0.5, +0.5])
_SPIN_DIRS = np.array([+1.0, +1.0, -1.0, -1.0])


def randomize_vehicle(rng_seed, ranges=None):
    """Sample a vehicle uniformly within `ranges`, retrying until feasible.

    Feasibility means hover capability (4 k w_max^2 > m g) plus the
    configured thrust-to-weight rejection band.  Deterministic for a fixed
    seed; raises RuntimeError after 1000 consecutive rejections.
    """
    ranges = ranges or VehicleRanges()
    ranges.validate()
    rng = np.random.default_rng(rng_seed)
    for _ in range(1000):
        u = lambda pair: rng.uniform(pair[0], pair[1])
        mass = u(ranges.mass)
        span_x = u(ranges.span_x)
        span_y = u(ranges.span_y)
        ixx = mass * u(ranges.gyration_radius) ** 2
        iyy = ixx * u(ranges.pitch_roll_inertia_ratio)
        izz = (ixx + iyy) * u(ranges.z_inertia_ratio)
        positions = np.column_stack([_LAYOUT_X * span_x, _LAYOUT_Y * span_y, np.zeros(4)])
        params = VehicleParams(
            mass=mass,
            inertia=np.diag([ixx, iyy, izz]),
            rotor_positions=positions,
            rotor_spin_dirs=_SPIN_DIRS.copy(),
            k_thrust=u(ranges.k_thrust),
            moment_const=u(ranges.moment_const),
            tau=u(ranges.tau),
            kappa=u(ranges.kappa),
            omega_max=u(ranges.omega_max),
            omega_idle=u(ranges.omega_idle),
            imu_offset=np.array([u(ranges.imu_offset) for _ in range(3)]),
            rotor_inertia=u(ranges.b2_yaw) * izz,
        )
        tw = 4.0 * params.k_thrust * params.omega_max ** 2 / (params.mass * GRAVITY)
        if params.hover_feasible() and \
                ranges.thrust_to_weight[0] <= tw <= ranges.thrust_to_weight[1]:
            return params
    raise RuntimeError("no feasible vehicle found in 1000 samples")


class RigidBodyState:
    """Simulator state: position, velocity, attitude, body rates, rotor speeds.

    Backed by a flat 17-vector [p(3), v(3), q(4), omega(3), rotors(4)]; the
    attribute views share its memory.
    """

    __slots__ = ("vec",)

    def __init__(self, position, velocity, attitude, omega_body, rotor_speeds):
        self.vec = np.concatenate([
            np.asarray(position, dtype=float),
            np.asarray(velocity, dtype=float),
            np.asarray(attitude, dtype=float),
            np.asarray(omega_body, dtype=float),
            np.asarray(rotor_speeds, dtype=float),
        ])

    @classmethod
    def from_vector(cls, vec):
        s = cls.__new__(cls)
        s.vec = np.asarray(vec, dtype=float)
        return s

    position = property(lambda self: self.vec[0:3])
    velocity = property(lambda self: self.vec[3:6])
    attitude = property(lambda self: self.vec[6:10])
    omega_body = property(lambda self: self.vec[10:13])
    rotor_speeds = property(lambda self: self.vec[13:17])

    def copy(self):
        return RigidBodyState.from_vector(self.vec.copy())


@dataclass
class SensorNoise:
    """White Gaussian 1-sigma levels plus the gyro hard-clip limit."""

    gyro_rms: float = 0.02        # rad/s
    accel_rms: float = 0.2        # m/s^2
    rotor_rms: float = 5.0        # rad/s
    gyro_limit: float = GYRO_LIMIT


@dataclass
class SensorSample:
    """One 2 kHz tick of measurements (post saturation and noise)."""

    gyro: np.ndarray            # rad/s, clipped at +-gyro_limit
    specific_force: np.ndarray  # m/s^2, at the IMU location
    rotor_speeds: np.ndarray    # rad/s
    rotor_accels: np.ndarray    # rad/s^2, backward difference
    timestamp: float            # s


def steady_speed(params, delta):
    """ESC steady-state rotor speed for throttle delta in [0, 1]."""
    d = max(0.0, min(1.0, float(delta)))
    return params.omega_max * (params.kappa * d + (1.0 - params.kappa) * math.sqrt(d)) \
        + params.omega_idle


def hover_speed(params):
    return math.sqrt(params.mass * GRAVITY / (4.0 * params.k_thrust))


def delta_for_speed(params, omega_target):
    """Invert the ESC map: throttle producing steady speed omega_target."""
    c = (omega_target - params.omega_idle) / params.omega_max
    if c <= 0.0:
        return 0.0
    kappa = params.kappa
    if kappa < 1e-12:
        s = c
    else:
        qq = 1.0 - kappa
        disc = math.sqrt(qq * qq + 4.0 * kappa * c)
        s = 2.0 * c / (qq + disc) if qq >= 0.0 else (-qq + disc) / (2.0 * kappa)
    return min(s * s, 1.0)


def _derivative(y, delta, c):
    """Time derivative of the 17-state vector (scalar math: hot path)."""
    (inv_m, (ixx, ixy, ixz, iyx, iyy, iyz, izx, izy, izz),
     (jxx, jxy, jxz, jyx, jyy, jyz, jzx, jzy, jzz),
     rx, ry, spin, k, cm, jr, inv_tau, wmax, kappa, widle) = c

    vx, vy, vz = y[3], y[4], y[5]
    qw, qx, qy, qz = y[6], y[7], y[8], y[9]
    wx, wy, wz = y[10], y[11], y[12]

    thrust_sum = 0.0
    tx = 0.0
    ty = 0.0
    tz = 0.0
    rotor_dots = [0.0, 0.0, 0.0, 0.0]
    for i in range(4):
        d = delta[i]
        w = y[13 + i]
        ws = wmax * (kappa * d + (1.0 - kappa) * math.sqrt(d)) + widle
        wd = (ws - w) * inv_tau
        rotor_dots[i] = wd
        t = k * w * w
        thrust_sum += t
        # r x (0,0,-T) and spin-weighted yaw reaction
        tx -= ry[i] * t
        ty += rx[i] * t
        tz += spin[i] * (cm * t + jr * wd)

    # Euler's equation with gyroscopic term W x (I W)
    iw_x = ixx * wx + ixy * wy + ixz * wz
    iw_y = iyx * wx + iyy * wy + iyz * wz
    iw_z = izx * wx + izy * wy + izz * wz
    mx = tx - (wy * iw_z - wz * iw_y)
    my = ty - (wz * iw_x - wx * iw_z)
    mz = tz - (wx * iw_y - wy * iw_x)
    wdx = jxx * mx + jxy * my + jxz * mz
    wdy = jyx * mx + jyy * my + jyz * mz
    wdz = jzx * mx + jzy * my + jzz * mz

    # translational: gravity + thrust along body -z rotated to inertial
    fzb = -thrust_sum * inv_m
    ax = 2.0 * (qx * qz + qw * qy) * fzb
    ay = 2.0 * (qy * qz - qw * qx) * fzb
    az = GRAVITY + (1.0 - 2.0 * (qx * qx + qy * qy)) * fzb

    return np.array([
        vx, vy, vz,
        ax, ay, az,
        0.5 * (-qx * wx - qy * wy - qz * wz),
        0.5 * (qw * wx + qy * wz - qz * wy),
        0.5 * (qw * wy + qz * wx - qx * wz),
        0.5 * (qw * wz + qx * wy - qy * wx),
        wdx, wdy, wdz,
        rotor_dots[0], rotor_dots[1], rotor_dots[2], rotor_dots[3],
    ])


def step_dynamics(state, esc_cmds, params, dt):
    """Advance the rigid body by one fixed RK4 step of length dt.

    esc_cmds are the four throttle inputs in [0, 1].  The quaternion is
    renormalized and rotor speeds clamped non-negative after the step.
    """
    if not 0.0 < dt <= MAX_STEP_DT:
        raise ValueError(f"dt must be in (0, {MAX_STEP_DT}] s")
    y = state.vec
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite state input")
    delta = tuple(min(1.0, max(0.0, float(d))) for d in esc_cmds)
    c = params._scalars()

    k1 = _derivative(y, delta, c)
    k2 = _derivative(y + (0.5 * dt) * k1, delta, c)
    k3 = _derivative(y + (0.5 * dt) * k2, delta, c)
    k4 = _derivative(y + dt * k3, delta, c)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    q = out[6:10]
    out[6:10] = q / math.sqrt(float(np.dot(q, q)))
    np.maximum(out[13:17], 0.0, out=out[13:17])
    return RigidBodyState.from_vector(out)


def sample_sensors(state, prev_state, params, noise, rng, dt=5e-4, t=0.0,
                   prev_sample=None):
    """Simulated IMU + rotor telemetry for the step prev_state -> state.

    The specific force is evaluated at the IMU offset (rigid-body lever-arm
    terms included) and the gyro is hard-clipped at +-noise.gyro_limit.
    Rotor accelerations are backward differences: of measured speeds when
    prev_sample is given, of true speeds otherwise.
    """
    y = state.vec
    yp = prev_state.vec
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yp))):
        raise ValueError("non-finite state input")

    omega = y[10:13]
    gyro = omega + noise.gyro_rms * rng.standard_normal(3)
    np.clip(gyro, -noise.gyro_limit, noise.gyro_limit, out=gyro)

    thrust = params.k_thrust * float(np.dot(y[13:17], y[13:17]))
    f = np.array([0.0, 0.0, -thrust / params.mass])
    r = params.imu_offset
    if r.any():
        alpha = (omega - yp[10:13]) / dt
        f += np.cross(alpha, r) + np.cross(omega, np.cross(omega, r))
    f += noise.accel_rms * rng.standard_normal(3)

    speeds = np.maximum(y[13:17] + noise.rotor_rms * rng.standard_normal(4), 0.0)
    if prev_sample is not None:
        accels = (speeds - prev_sample.rotor_speeds) / dt
    else:
        accels = (y[13:17] - yp[13:17]) / dt

    return SensorSample(gyro=gyro, specific_force=f, rotor_speeds=speeds,
                        rotor_accels=accels, timestamp=t)


def com_specific_force(specific_force, gyro, prev_gyro, imu_offset, dt):
    """Move a specific-force measurement from the IMU location to the CoM.

    The IMU position is the one piece of prior platform knowledge the stack
    assumes; the angular acceleration comes from differenced gyro samples,
    whose noise is dealt with by the downstream low-pass filters.
    """
    r = np.asarray(imu_offset, dtype=float)
    f = np.asarray(specific_force, dtype=float)
    if not r.any():
        return f
    gyro = np.asarray(gyro, dtype=float)
    alpha = (gyro - np.asarray(prev_gyro, dtype=float)) / dt
    return f - np.cross(alpha, r) - np.cross(gyro, np.cross(gyro, r))


def spawn_throw(height, omega0, rng, omega_idle=0.0, position=(0.0, 0.0, 0.0)):
    """Initial state at release: upward speed for the given apex height,
    uniformly random attitude, prescribed tumble rate, rotors idling."""
    if not height > 0.0:
        raise ValueError("throw height must be positive")
    omega0 = np.asarray(omega0, dtype=float)
    if np.linalg.norm(omega0) > 10.0 + 1e-9:
        raise ValueError("|omega0| must not exceed 10 rad/s")
    v0 = math.sqrt(2.0 * GRAVITY * height)
    return RigidBodyState(
        position=np.asarray(position, dtype=float),
        velocity=np.array([0.0, 0.0, -v0]),
        attitude=quat.random_unit(rng),
        omega_body=omega0,
        rotor_speeds=np.full(4, float(omega_idle)),
    )


def true_effectiveness(params):
    """Ground-truth (B1*k, B2) of a vehicle, in the identified parametrization.

    B1k maps 2 w dw (thrust increments divided by k) to pseudo-control
    increments; B2 maps rotor acceleration increments to body-rate
    acceleration increments.  Force rows of B2 are structurally zero.
    """
    inv_inertia = np.linalg.inv(params.inertia)
    b1k = np.zeros((6, 4))
    b2 = np.zeros((3, 4))
    for i in range(4):
        rx, ry, _ = params.rotor_positions[i]
        spin = params.rotor_spin_dirs[i]
        b1k[2, i] = -params.k_thrust / params.mass
        moment = np.array([-ry, rx, spin * params.moment_const])
        b1k[3:6, i] = params.k_thrust * (inv_inertia @ moment)
        b2[:, i] = inv_inertia @ np.array([0.0, 0.0, spin * params.rotor_inertia])
    return b1k, b2
