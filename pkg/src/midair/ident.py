"""Online identification of the 52 control parameters.

Three estimation problems run side by side at the sensor rate, all on
identically low-pass filtered signals (20 Hz group of the filter bank):

 * motor model, per motor:   w = a d + b sqrt(d) + w_idle - tau wdot
 * force effectiveness:      d(f)    = B1k_f . (2 w dw)
 * rate effectiveness:       d(Wdot) = B1k_r . (2 w dw) + B2 . (dwdot)

The force and rate rows each share one regressor, so their RLS gain and
covariance are computed once per group.  Increments (d·) are differences of
filtered values one sample apart; the rotor-speed factor uses the midpoint
of the two samples, which makes the quadratic-thrust linearization exact.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .rls import RlsState, SharedRlsState, forgetting_factor

# Pre-scaling applied to RLS regressors/outputs so the recursion runs on
# order-one numbers (motor speeds ~1e3 rad/s, accelerations ~1e4 rad/s^2).
OMEGA_SCALE = 1.0e3
OMEGA_DOT_SCALE = 1.0e4
THRUST_CHANNEL_SCALE = 1.0e5   # 2 w dw per tick, (rad/s)^2
DWDOT_CHANNEL_SCALE = 1.0e4    # dwdot per tick, rad/s^2
FORCE_TARGET_SCALE = 0.1       # df per tick, m/s^2
RATE_TARGET_SCALE = 10.0       # d(Wdot) per tick, rad/s^3 * dt

# Validity gates applied when assembling the fitted parameter set.
OMEGA_MAX_GATE = (500.0, 20000.0)   # rad/s
TAU_GATE = (0.002, 0.200)           # s
KAPPA_CLAMP = (0.0, 1.5)


def motor_regressor(delta, omega_f, omega_dot_f, sqrt_delta=None):
    """Regressor/target pair for the motor model, before pre-scaling.

    x = (d, sqrt(d), 1, -wdot), y = w.  Pass sqrt_delta explicitly when the
    channels have been filtered: sqrt-then-filter and filter-then-sqrt do
    not commute.
    """
    if sqrt_delta is None:
        sqrt_delta = math.sqrt(max(0.0, delta))
    return np.array([delta, sqrt_delta, 1.0, -omega_dot_f]), omega_f


def motor_params(a, b):
    """(omega_max, kappa) from the linear motor-fit parameters.

    omega_max = a + b and kappa = a / (a + b), kappa clamped to [0, 1.5] so
    the downstream ESC inversion stays solvable.
    """
    s = a + b
    if not s > 0.0:
        raise ValueError("motor fit invalid: a + b must be positive")
    kappa = min(max(a / s, KAPPA_CLAMP[0]), KAPPA_CLAMP[1])
    return s, kappa


def effectiveness_regressor(omega_f, d_omega, d_omega_dot):
    """8-channel effectiveness regressor (2 w dw per motor, then dwdot)."""
    omega_f = np.asarray(omega_f, dtype=float)
    d_omega = np.asarray(d_omega, dtype=float)
    x = np.empty(8)
    x[:4] = 2.0 * omega_f * d_omega
    x[4:] = d_omega_dot
    return x


@dataclass
class MotorFit:
    """Fitted motor-model parameters for one motor."""

    a: float
    b: float
    omega_idle: float
    tau: float

    @property
    def valid(self):
        return self.a + self.b > 0.0

    @property
    def omega_max(self):
        return self.a + self.b

    @property
    def kappa(self):
        return motor_params(self.a, self.b)[1]


@dataclass
class EffectivenessFit:
    """Fitted control effectiveness: B1*k (6x4) and B2 rate rows (3x4)."""

    b1k: np.ndarray
    b2: np.ndarray


@dataclass
class ControlParams:
    """The 52 quantities the controller needs, plus the gate verdict."""

    b1k: np.ndarray          # 6x4
    b2: np.ndarray           # 3x4
    omega_max: np.ndarray    # 4
    kappa: np.ndarray        # 4
    omega_idle: np.ndarray   # 4
    tau: np.ndarray          # 4
    gate_failures: tuple = ()

    @property
    def valid(self):
        return not self.gate_failures

    def as_rows(self):
        """13 x 4 parameter table in report order (rows x motors)."""
        return np.vstack([self.b1k, self.b2, self.omega_max, self.kappa,
                          self.omega_idle, self.tau])

    @staticmethod
    def row_labels():
        return ("B1x*k", "B1y*k", "B1z*k", "B1p*k", "B1q*k", "B1r*k",
                "B2p", "B2q", "B2r", "omega_max", "kappa", "omega_idle", "tau")


def assemble_control_params(motor_fits, eff):
    """Combine the fits into a ControlParams record and run validity gates.

    Gates: omega_max in [500, 20000] rad/s, tau in [2, 200] ms, and a
    negative thrust row (B1z*k) for every motor.  Failures are recorded on
    the returned record rather than raised, so the caller can report an
    unrecoverable episode with full diagnostics.
    """
    failures = []
    omega_max = np.zeros(4)
    kappa = np.zeros(4)
    omega_idle = np.zeros(4)
    tau = np.zeros(4)
    for i, fit in enumerate(motor_fits):
        omega_idle[i] = fit.omega_idle
        tau[i] = fit.tau
        if not fit.valid:
            failures.append(f"motor {i}: a + b <= 0")
            continue
        omega_max[i], kappa[i] = motor_params(fit.a, fit.b)
        if not OMEGA_MAX_GATE[0] <= omega_max[i] <= OMEGA_MAX_GATE[1]:
            failures.append(f"motor {i}: omega_max {omega_max[i]:.1f} outside gate")
        if not TAU_GATE[0] <= fit.tau <= TAU_GATE[1]:
            failures.append(f"motor {i}: tau {fit.tau * 1e3:.2f} ms outside gate")
        if not eff.b1k[2, i] < 0.0:
            failures.append(f"motor {i}: thrust effectiveness not negative")
    return ControlParams(
        b1k=eff.b1k.copy(), b2=eff.b2.copy(), omega_max=omega_max, kappa=kappa,
        omega_idle=omega_idle, tau=tau, gate_failures=tuple(failures),
    )


class IdentPipeline:
    """Streaming identification: filters, increments, and the RLS bank.

    feed() must be called every tick with the raw sensor sample and the
    throttle command; it returns the scaled innovations of the rate-row
    group (useful for reconstruction diagnostics).  Ten conceptual filters
    run here -- 3 force rows + 3 rate rows + 4 motor models -- but only two
    shared gain/covariance recursions plus the four small motor updates.
    """

    def __init__(self, bank, sample_rate=2000.0):
        self.bank = bank
        self.dt = 1.0 / sample_rate
        lam = forgetting_factor(self.dt)
        self.force = SharedRlsState(
            4, 3, lam=lam, scale=np.full(4, THRUST_CHANNEL_SCALE),
            y_scale=FORCE_TARGET_SCALE)
        self.rate = SharedRlsState(
            8, 3, lam=lam,
            scale=np.concatenate([np.full(4, THRUST_CHANNEL_SCALE),
                                  np.full(4, DWDOT_CHANNEL_SCALE)]),
            y_scale=RATE_TARGET_SCALE)
        motor_scale = np.array([1.0, 1.0, 1.0, OMEGA_DOT_SCALE])
        self.motors = [RlsState(4, lam=lam, scale=motor_scale,
                                y_scale=OMEGA_SCALE) for _ in range(4)]
        self._prev_nu = None
        self._prev_omega_sq = None
        self._prev_omega_dot = None
        self.ticks = 0

    def filter_only(self, sample, delta):
        """Run the filters without updating the estimates (pre-excitation).

        Keeps the 20 Hz group warm so the identification window starts
        transient-free, and keeps the increment history consistent.
        """
        self._advance_filters(sample, delta)

    def _advance_filters(self, sample, delta):
        bank = self.bank
        accel_f = bank.ident_accel.step(sample.specific_force)
        omega_dot_body = bank.ident_gyro.step(sample.gyro)
        rotor_accel_f = bank.ident_rotor.step(sample.rotor_speeds)
        omega_f = bank.ident_rotor.last_filtered
        omega_sq_f = bank.ident_rotor_sq.step(sample.rotor_speeds ** 2)
        delta = np.asarray(delta, dtype=float)
        delta_f = bank.ident_delta.step(delta)
        sqrt_delta_f = bank.ident_sqrt_delta.step(np.sqrt(np.maximum(delta, 0.0)))
        nu = np.concatenate([accel_f, omega_dot_body])

        prev = (self._prev_nu, self._prev_omega_sq, self._prev_omega_dot)
        self._prev_nu = nu
        self._prev_omega_sq = omega_sq_f
        self._prev_omega_dot = rotor_accel_f
        return (omega_f, omega_sq_f, rotor_accel_f, delta_f, sqrt_delta_f, nu, prev)

    def feed(self, sample, delta):
        """One identification step at the sensor rate; returns rate innovations."""
        (omega_f, omega_sq_f, rotor_accel_f, delta_f, sqrt_delta_f, nu,
         (prev_nu, prev_sq, prev_omega_dot)) = self._advance_filters(sample, delta)
        self.ticks += 1
        if prev_nu is None or prev_omega_dot is None:
            return np.zeros(3)

        # the thrust channel is the increment of filtered w^2; expressed as
        # 2 w dw with the square-root midpoint so the identity is exact
        d_nu = nu - prev_nu
        root = np.sqrt(np.maximum(omega_sq_f, 0.0))
        root_prev = np.sqrt(np.maximum(prev_sq, 0.0))
        omega_mid = 0.5 * (root + root_prev)
        d_omega = root - root_prev
        d_omega_dot = rotor_accel_f - prev_omega_dot

        x8 = effectiveness_regressor(omega_mid, d_omega, d_omega_dot)
        self.force.update(x8[:4], d_nu[:3])
        rate_innov = self.rate.update(x8, d_nu[3:])

        for i in range(4):
            x, y = motor_regressor(delta_f[i], omega_f[i], rotor_accel_f[i],
                                   sqrt_delta=sqrt_delta_f[i])
            self.motors[i].update(x, y)
        return rate_innov

    def motor_fits(self):
        fits = []
        for flt in self.motors:
            a, b, idle, tau = flt.params
            fits.append(MotorFit(a=a, b=b, omega_idle=idle, tau=tau))
        return fits

    def effectiveness(self):
        """Assemble B1*k and B2 from the two shared-regressor groups."""
        b1k = np.zeros((6, 4))
        b1k[:3] = self.force.params          # force rows, 4 channels each
        rate_rows = self.rate.params         # (3, 8)
        b1k[3:] = rate_rows[:, :4]
        b2 = rate_rows[:, 4:].copy()
        return EffectivenessFit(b1k=b1k, b2=b2)

    def result(self):
        return assemble_control_params(self.motor_fits(), self.effectiveness())
