"""One simulated throw, end to end.

Phase machine: ballistic throw -> free-fall detection -> fixed delay ->
450 ms excitation with identification running -> parameter assembly, gain
tuning, switchover -> closed-loop recovery and position hold.  Everything
runs on one fixed 2 kHz tick; an episode is deterministic for its seed.
"""

import csv
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import estimation, excitation, quat
from .config import EpisodeConfig
from .dynamics import (GRAVITY, com_specific_force, randomize_vehicle,
                       sample_sensors, spawn_throw, step_dynamics,
                       true_effectiveness)
from .excitation import ExcitationState, advance, excitation_command
from .filters import FilterBank
from .ident import ControlParams, IdentPipeline
from .indi import InnerLoop
from .outer import (attitude_rates, pid_accel, position_ndi, rate_to_nu,
                    tune_gains)

PHASE_THROW = "throw"
PHASE_WAIT = "wait"
PHASE_EXCITE = "excite"
PHASE_RECOVER = "recover"
PHASE_POSITION = "position"

TICK_LOG_SCHEMA = "midair tick-log v1"
_THETA_DECIMATION = 40  # 2 kHz / 40 = 50 Hz parameter snapshots

# Acceleration-reference shaping ahead of the attitude inversion: never ask
# for more than half-g downward or one g sideways, else the required thrust
# direction can flip when the setpoint is below the vehicle.
_MAX_DESCEND_ACCEL = 0.5 * GRAVITY
_MAX_LATERAL_ACCEL = GRAVITY

# Attitude-priority thrust gating during recovery: thrusting while inverted
# or while arresting a fast tumble only eats into rate authority (and, when
# inverted, speeds up the fall).  The vertical demand fades out between
# these tilt cosines / body rates; a small spin-keeping demand remains so
# the rotors stay in their controllable band.
_THRUST_GATE_COS_FULL = 0.5   # 60 deg
_THRUST_GATE_COS_ZERO = 0.2   # 78 deg
_THRUST_GATE_RATE_FULL = 3.0  # rad/s
_THRUST_GATE_RATE_ZERO = 5.0  # rad/s
_GATED_THRUST_ACCEL = -0.5 * GRAVITY

# The rate-reference prefilter sits well above the rate-loop pole: fast
# enough not to dominate the tracking-error decay, slow enough to keep the
# attitude-loop demand from outrunning the loop.
_REF_FILTER_POLE_RATIO = 2.5

# Recovery is staged: pure rate arrest (zero rate reference) until the
# tumble is gone, then the attitude maneuver, then position flight.  The
# dwell keeps the clean constant references up long enough for the rate
# loop to demonstrably settle before position demands start moving them.
_ARREST_EXIT_RATE = 2.0       # rad/s
_ARREST_TIME_CAP = 0.5        # s
_POSITION_ENGAGE_TILT_DEG = 15.0
_POSITION_ENGAGE_RATE = 2.0   # rad/s
_POSITION_MIN_DWELL = 0.3     # s
# Position-flight acceleration references are smoothed with this pole so
# velocity-estimate noise does not wander the attitude reference.
_ACCEL_REF_POLE = 15.0  # rad/s


class FreefallDetector:
    """Release detector: ||f|| continuously below a threshold for hold_time."""

    def __init__(self, accel_threshold=2.0, hold_time=0.05):
        self.accel_threshold = accel_threshold
        self.hold_time = hold_time
        self._low_for = 0.0
        self.fired = False

    def update(self, specific_force, dt):
        if self.fired:
            return True
        if float(np.linalg.norm(specific_force)) < self.accel_threshold:
            self._low_for += dt
            if self._low_for >= self.hold_time:
                self.fired = True
        else:
            self._low_for = 0.0
        return self.fired


def detect_release(force_samples, dt, accel_threshold=2.0, hold_time=0.05):
    """Offline form of the detector: index of the release event, or None."""
    det = FreefallDetector(accel_threshold, hold_time)
    for i, f in enumerate(force_samples):
        if det.update(f, dt):
            return i
    return None


def true_params_record(vehicle):
    """Ground-truth ControlParams for error tables (oracle from geometry)."""
    b1k, b2 = true_effectiveness(vehicle)
    return ControlParams(
        b1k=b1k, b2=b2,
        omega_max=np.full(4, vehicle.omega_max),
        kappa=np.full(4, vehicle.kappa),
        omega_idle=np.full(4, vehicle.omega_idle),
        tau=np.full(4, vehicle.tau),
    )


@dataclass
class EpisodeReport:
    """Per-throw outcome: fits vs. truth, recovery metrics, and flags."""

    seed: int
    success: bool = False
    failure_reason: str = ""
    crashed: bool = False
    gyro_saturated: bool = False
    aborted_motors: tuple = (False, False, False, False)
    fit_valid: bool = False
    gate_failures: tuple = ()
    fitted: ControlParams = None
    truth: ControlParams = None
    detect_time: float = math.nan
    switchover_time: float = math.nan
    recovery_time: float = math.nan          # s after switchover
    rate_tracking_time: float = math.nan     # s to reach 10% of initial rate error
    rate_err_at_switchover: float = math.nan  # rad/s
    position_converged_time: float = math.nan
    max_attitude_error_after_2s: float = math.nan  # deg
    allocation_degraded_ticks: int = 0
    mean_tick_compute: float = math.nan      # s, control + identification
    excite_window_compute: float = math.nan  # s, total over the 900-tick window
    tick_log_path: str = ""
    trace: dict = field(default_factory=dict)

    @property
    def param_errors(self):
        """13x4 fitted-minus-true table (NaN when the fit never completed)."""
        if self.fitted is None or self.truth is None:
            return np.full((13, 4), np.nan)
        return self.fitted.as_rows() - self.truth.as_rows()


class _TickLog:
    """CSV writer for the per-tick log; one header line carries the schema."""

    def __init__(self, path):
        self.path = str(path)
        self._fh = open(path, "w", newline="")
        self._fh.write(f"# {TICK_LOG_SCHEMA}\n")
        self._w = csv.writer(self._fh)
        cols = (["t", "phase", "motor_index"]
                + [f"abort{i}" for i in range(4)]
                + ["px", "py", "pz", "vx", "vy", "vz",
                   "qw", "qx", "qy", "qz", "wx", "wy", "wz"]
                + ["gyro_x", "gyro_y", "gyro_z", "sf_x", "sf_y", "sf_z"]
                + [f"rotor{i}" for i in range(4)]
                + [f"delta{i}" for i in range(4)]
                + [f"u{i}" for i in range(4)]
                + [f"nur{i}" for i in range(6)] + [f"nu0_{i}" for i in range(6)]
                + ["att_err_deg", "est_pos_err", "est_att_err_deg", "alloc_degraded"]
                + [f"{lbl}_m{i}" for lbl in ControlParams.row_labels()
                   for i in range(4)])
        self._w.writerow(cols)

    def write(self, scalars, theta_rows=None):
        row = list(scalars)
        if theta_rows is not None:
            row += [f"{v:.9g}" for v in theta_rows.ravel()]
        self._w.writerow(row)

    def close(self):
        self._fh.close()


def _clamp_accel_ref(a_ref):
    a = a_ref.copy()
    a[0] = min(max(a[0], -_MAX_LATERAL_ACCEL), _MAX_LATERAL_ACCEL)
    a[1] = min(max(a[1], -_MAX_LATERAL_ACCEL), _MAX_LATERAL_ACCEL)
    a[2] = min(a[2], _MAX_DESCEND_ACCEL)
    return a


def run_episode(cfg: EpisodeConfig, out_dir=None):
    """Run one seeded throw; never raises on a failed fit or lost vehicle.

    Writes a per-tick CSV into out_dir when configured; returns the report.
    """
    dt = cfg.dt
    vehicle = randomize_vehicle(cfg.seed, cfg.ranges)
    truth = true_params_record(vehicle)
    report = EpisodeReport(seed=cfg.seed, truth=truth)

    throw_rng = np.random.default_rng([cfg.seed, 2])
    noise_rng = np.random.default_rng([cfg.seed, 1])
    axis = throw_rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    omega0 = axis * throw_rng.uniform(0.0, cfg.omega0_max)
    state = spawn_throw(cfg.throw_height, omega0, throw_rng,
                        omega_idle=vehicle.omega_idle)

    bank = FilterBank(cfg.sample_rate, cfg.cutoff_ctl, cfg.cutoff_ident)
    identp = IdentPipeline(bank, cfg.sample_rate)
    detector = FreefallDetector(cfg.detector.accel_threshold, cfg.detector.hold_time)

    nav = estimation.NavState()
    err_axis = throw_rng.normal(size=3)
    err_axis /= np.linalg.norm(err_axis)
    nav.attitude_est = quat.multiply(
        state.attitude,
        quat.from_axis_angle(err_axis, math.radians(cfg.estimator.init_att_err_deg)))
    nav.position_est = state.position + cfg.estimator.fix_rms * throw_rng.normal(size=3)
    nav.velocity_est = state.velocity + cfg.estimator.init_vel_err * throw_rng.normal(size=3)

    fix_every = max(1, int(round(cfg.sample_rate / cfg.estimator.fix_rate)))
    ground_z = cfg.ground_below_release
    setpoint = np.asarray(cfg.setpoint, dtype=float)

    log = None
    if out_dir is not None and cfg.log_ticks:
        os.makedirs(out_dir, exist_ok=True)
        log = _TickLog(os.path.join(out_dir, f"episode_{cfg.seed}.csv"))
        report.tick_log_path = log.path

    phase = PHASE_THROW
    exc = None
    inner = None
    gains = None
    q_ref_last = None
    yaw_hold = 0.0
    t_detect = math.nan
    t_switch = math.nan
    rate_err0 = None
    delta = np.zeros(4)
    prev_state = state
    prev_sample = None
    compute_times = []
    excite_times = []
    trace = {k: [] for k in ("t", "alt", "tilt_deg", "omega_norm", "delta_mean",
                             "rate_err")}
    max_tilt_after_2s = 0.0
    t = 0.0
    tick = 0
    hard_cap = 15.0

    while t < hard_cap:
        sample = sample_sensors(state, prev_state, vehicle, cfg.noise, noise_rng,
                                dt=dt, t=t, prev_sample=prev_sample)
        tic = time.perf_counter()
        # the IMU position is assumed known: refer the accelerometer to the CoM
        prev_gyro = prev_sample.gyro if prev_sample is not None else sample.gyro
        sample.specific_force = com_specific_force(
            sample.specific_force, sample.gyro, prev_gyro, vehicle.imu_offset, dt)

        # --- estimation ---
        estimation.attitude_update(nav, sample.gyro, sample.specific_force, dt)
        fix = None
        if tick % fix_every == 0:
            fix = state.position + cfg.estimator.fix_rms * noise_rng.standard_normal(3)
        q_est = state.attitude if cfg.oracle_attitude else nav.attitude_est
        accel_inertial = quat.rotate(q_est, sample.specific_force) \
            + np.array([0.0, 0.0, GRAVITY])
        estimation.posvel_update(nav, accel_inertial, fix, dt)

        # --- phase machine / control ---
        nu_r = np.zeros(6)
        nu0 = np.zeros(6)
        alloc_degraded = False
        rate_err = 0.0
        if phase == PHASE_THROW:
            delta = np.zeros(4)
            identp.filter_only(sample, delta)
            _warm_ctl_filters(bank, sample)
            if detector.update(sample.specific_force, dt):
                t_detect = t
                report.detect_time = t
                phase = PHASE_WAIT
        elif phase == PHASE_WAIT:
            delta = np.zeros(4)
            identp.filter_only(sample, delta)
            _warm_ctl_filters(bank, sample)
            if t >= t_detect + cfg.delay_after_release:
                exc = ExcitationState(schedule=cfg.schedule,
                                      gyro_limit=cfg.noise.gyro_limit)
                phase = PHASE_EXCITE
        elif phase == PHASE_EXCITE:
            identp.feed(sample, delta)
            advance(exc, dt, sample.gyro)
            if np.any(np.abs(state.omega_body) >= cfg.noise.gyro_limit):
                report.gyro_saturated = True
            if exc.done:
                report.aborted_motors = tuple(bool(b) for b in exc.aborted_motors)
                fitted = identp.result()
                report.fitted = fitted
                report.fit_valid = fitted.valid
                report.gate_failures = fitted.gate_failures
                t_switch = t
                report.switchover_time = t
                if not fitted.valid:
                    report.failure_reason = "; ".join(fitted.gate_failures)
                    compute_times.append(time.perf_counter() - tic)
                    break
                gains = tune_gains(float(np.mean(fitted.tau)))
                inner = InnerLoop(fitted, bank, dt)
                inner.init_from_speeds(sample.rotor_speeds)
                yaw_hold = quat.yaw_angle(q_est)
                omega_ref_shaped = None
                a_ref_smooth = None
                arrest_done = False
                ref_alpha = 1.0 - math.exp(
                    -_REF_FILTER_POLE_RATIO * float(gains.rate[0]) * dt)
                accel_ref_alpha = 1.0 - math.exp(-_ACCEL_REF_POLE * dt)
                phase = PHASE_RECOVER
                delta = np.zeros(4)
            else:
                delta = excitation_command(exc)
                _warm_ctl_filters(bank, sample)
        if phase in (PHASE_RECOVER, PHASE_POSITION):
            tilt_est = quat.tilt_angle(q_est)
            gyro_norm = float(np.linalg.norm(sample.gyro))
            if phase == PHASE_RECOVER:
                # stage 1: arrest the tumble (zero rate reference, a constant
                # the loop can actually converge on), then rotate level.  The
                # level reference keeps the vehicle's own yaw: yaw is not
                # worth fighting with an order of magnitude less authority,
                # and chasing it would wander the reference axis.
                if not arrest_done and (gyro_norm < _ARREST_EXIT_RATE
                                        or t - t_switch > _ARREST_TIME_CAP):
                    arrest_done = True
                yaw_hold = quat.yaw_angle(q_est)
                half = 0.5 * yaw_hold
                q_r = np.array([math.cos(half), 0.0, 0.0, math.sin(half)])
                az = float(gains.velocity[2]) * (0.0 - nav.velocity_est[2])
                az = min(max(az, -GRAVITY), _MAX_DESCEND_ACCEL)
                fz_ref = az - GRAVITY
                if arrest_done and t - t_switch >= _POSITION_MIN_DWELL \
                        and math.degrees(tilt_est) < _POSITION_ENGAGE_TILT_DEG \
                        and gyro_norm < _POSITION_ENGAGE_RATE:
                    phase = PHASE_POSITION
            if phase == PHASE_POSITION:
                a_raw = pid_accel(setpoint - nav.position_est, -nav.velocity_est, gains)
                a_raw = _clamp_accel_ref(a_raw)
                if a_ref_smooth is None:
                    a_ref_smooth = a_raw.copy()
                a_ref_smooth = a_ref_smooth + (a_raw - a_ref_smooth) * accel_ref_alpha
                q_r, fz_ref, ok = position_ndi(a_ref_smooth, yaw_hold, q_ref_last)
                q_ref_last = q_r
            # reference shaping ahead of the pinned rate law: norm-clamp the
            # attitude-loop demand and pre-filter it at the rate-loop pole so
            # the reference never outruns what the closed loop can track
            if phase == PHASE_RECOVER and not arrest_done:
                omega_raw = np.zeros(3)
            else:
                omega_raw = attitude_rates(q_est, q_r, gains.attitude)
                norm = float(np.linalg.norm(omega_raw))
                if norm > cfg.rate_ref_limit:
                    omega_raw *= cfg.rate_ref_limit / norm
            if omega_ref_shaped is None:
                omega_ref_shaped = omega_raw.copy()
            omega_ref_shaped = omega_ref_shaped + (omega_raw - omega_ref_shaped) * ref_alpha
            omega_r = omega_ref_shaped
            gate = min(1.0, max(0.0, (math.cos(tilt_est) - _THRUST_GATE_COS_ZERO)
                                / (_THRUST_GATE_COS_FULL - _THRUST_GATE_COS_ZERO)))
            gate *= min(1.0, max(0.0, (_THRUST_GATE_RATE_ZERO
                                       - float(np.linalg.norm(sample.gyro)))
                                / (_THRUST_GATE_RATE_ZERO - _THRUST_GATE_RATE_FULL)))
            nu_r[2] = gate * fz_ref + (1.0 - gate) * _GATED_THRUST_ACCEL
            nu_r[3:] = rate_to_nu(omega_r, sample.gyro, gains.rate)
            delta, nu0, info = inner.step(sample, nu_r)
            alloc_degraded = info.degraded

            rate_err = float(np.linalg.norm(omega_r - state.omega_body))
            if rate_err0 is None:
                rate_err0 = max(rate_err, 1e-9)
                report.rate_err_at_switchover = rate_err0
            elif math.isnan(report.rate_tracking_time) and rate_err < 0.1 * rate_err0:
                report.rate_tracking_time = t - t_switch

        compute_times.append(time.perf_counter() - tic)
        if phase == PHASE_EXCITE:
            excite_times.append(compute_times[-1])

        # --- bookkeeping ---
        tilt_deg = math.degrees(quat.tilt_angle(state.attitude))
        omega_norm = float(np.linalg.norm(state.omega_body))
        if phase in (PHASE_RECOVER, PHASE_POSITION):
            if math.isnan(report.recovery_time) and tilt_deg <= cfg.success.attitude_deg \
                    and omega_norm < cfg.success.rate_max and state.position[2] < ground_z:
                report.recovery_time = t - t_switch
            if t - t_switch >= 2.0:
                max_tilt_after_2s = max(max_tilt_after_2s, tilt_deg)
            pos_err = float(np.linalg.norm(state.position - setpoint))
            speed = float(np.linalg.norm(state.velocity))
            if math.isnan(report.position_converged_time) \
                    and pos_err < cfg.success.position_tol and speed < cfg.success.speed_tol:
                report.position_converged_time = t - t_switch

        if log is not None:
            _log_tick(log, t, phase, exc, state, sample, delta, inner, nu_r, nu0,
                      tilt_deg, nav, q_est, alloc_degraded, identp, tick)
        if tick % 20 == 0:
            trace["t"].append(t)
            trace["alt"].append(-state.position[2])
            trace["tilt_deg"].append(tilt_deg)
            trace["omega_norm"].append(omega_norm)
            trace["delta_mean"].append(float(np.mean(delta)))
            trace["rate_err"].append(rate_err)

        if state.position[2] >= ground_z:
            report.crashed = True
            report.failure_reason = "ground contact"
            break
        if phase in (PHASE_RECOVER, PHASE_POSITION):
            if t - t_switch > cfg.success.time_limit:
                break
            if not math.isnan(report.recovery_time) \
                    and not math.isnan(report.position_converged_time) \
                    and t - t_switch > report.position_converged_time + 0.5:
                break

        # --- dynamics ---
        prev_state = state
        try:
            state = step_dynamics(state, delta, vehicle, dt)
        except ValueError as err:
            report.failure_reason = f"dynamics diverged: {err}"
            break
        prev_sample = sample
        t += dt
        tick += 1

    if log is not None:
        log.close()
    if inner is not None:
        report.allocation_degraded_ticks = inner.degraded_count
    report.max_attitude_error_after_2s = max_tilt_after_2s \
        if phase in (PHASE_RECOVER, PHASE_POSITION) else math.nan
    report.mean_tick_compute = float(np.mean(compute_times)) if compute_times else math.nan
    report.excite_window_compute = float(np.sum(excite_times)) if excite_times else math.nan
    report.trace = {k: np.asarray(v) for k, v in trace.items()}

    recovered = not math.isnan(report.recovery_time)
    report.success = (report.fit_valid and recovered and not report.crashed
                      and not report.gyro_saturated)
    if not report.success and not report.failure_reason:
        if not report.fit_valid:
            report.failure_reason = "; ".join(report.gate_failures) or "fit invalid"
        elif report.gyro_saturated:
            report.failure_reason = "gyro saturated during excitation"
        elif not recovered:
            report.failure_reason = "did not recover within the time limit"
    return report


def _warm_ctl_filters(bank, sample):
    """Advance the control-rate filter group before the inner loop owns it."""
    bank.ctl_accel.step(sample.specific_force)
    bank.ctl_gyro.step(sample.gyro)
    bank.ctl_rotor.step(sample.rotor_speeds)


def _log_tick(log, t, phase, exc, state, sample, delta, inner, nu_r, nu0,
              tilt_deg, nav, q_est, alloc_degraded, identp, tick):
    est_pos_err = float(np.linalg.norm(nav.position_est - state.position))
    qe = quat.multiply(quat.conjugate(state.attitude), q_est)
    est_att_err = math.degrees(2.0 * math.acos(min(1.0, abs(float(qe[0])))))
    u = inner.u if inner is not None else np.zeros(4)
    mi = exc.motor_index if exc is not None else -1
    aborts = exc.aborted_motors if exc is not None else np.zeros(4, dtype=bool)
    scalars = ([f"{t:.4f}", phase, mi]
               + [int(b) for b in aborts]
               + [f"{v:.9g}" for v in state.vec[:13]]
               + [f"{v:.9g}" for v in sample.gyro]
               + [f"{v:.9g}" for v in sample.specific_force]
               + [f"{v:.9g}" for v in sample.rotor_speeds]
               + [f"{v:.9g}" for v in delta]
               + [f"{v:.9g}" for v in u]
               + [f"{v:.9g}" for v in nu_r]
               + [f"{v:.9g}" for v in nu0]
               + [f"{tilt_deg:.5g}", f"{est_pos_err:.5g}", f"{est_att_err:.5g}",
                  int(alloc_degraded)])
    theta = None
    if tick % _THETA_DECIMATION == 0:
        theta = identp.result().as_rows()
    log.write(scalars, theta)
