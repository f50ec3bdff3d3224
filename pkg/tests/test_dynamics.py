"""Simulator physics against closed-form mechanics: hover equilibrium,
ballistic flight, momentum conservation, rotor lag, and the ground-truth
effectiveness identity."""

import copy
import math

import numpy as np
import pytest

from midair import quat
from midair.dynamics import (GRAVITY, GYRO_LIMIT, RigidBodyState, SensorNoise,
                             VehicleParams, VehicleRanges, com_specific_force,
                             delta_for_speed, hover_speed, randomize_vehicle,
                             sample_sensors, spawn_throw, steady_speed,
                             step_dynamics, true_effectiveness)

DT = 5e-4


def quiet_noise():
    return SensorNoise(gyro_rms=0.0, accel_rms=0.0, rotor_rms=0.0)


def make_vehicle(**overrides):
    v = randomize_vehicle(12345)
    for key, val in overrides.items():
        setattr(v, key, val)
    v._cache = None
    return v


class TestRandomize:
    def test_deterministic_for_fixed_seed(self):
        a, b = randomize_vehicle(7), randomize_vehicle(7)
        assert a.mass == b.mass
        np.testing.assert_array_equal(a.inertia, b.inertia)
        np.testing.assert_array_equal(a.rotor_positions, b.rotor_positions)
        assert (a.tau, a.kappa, a.omega_max, a.omega_idle) == \
            (b.tau, b.kappa, b.omega_max, b.omega_idle)

    def test_point_ranges_give_that_exact_vehicle(self):
        base = randomize_vehicle(3)
        ranges = VehicleRanges(
            mass=(base.mass,) * 2,
            span_x=(2 * base.rotor_positions[0, 0],) * 2,
            span_y=(2 * base.rotor_positions[0, 1],) * 2,
            k_thrust=(base.k_thrust,) * 2,
            moment_const=(base.moment_const,) * 2,
            tau=(base.tau,) * 2,
            kappa=(base.kappa,) * 2,
            omega_max=(base.omega_max,) * 2,
            omega_idle=(base.omega_idle,) * 2,
            gyration_radius=(math.sqrt(base.inertia[0, 0] / base.mass),) * 2,
            pitch_roll_inertia_ratio=(base.inertia[1, 1] / base.inertia[0, 0],) * 2,
            z_inertia_ratio=(base.inertia[2, 2]
                             / (base.inertia[0, 0] + base.inertia[1, 1]),) * 2,
            b2_yaw=(base.rotor_inertia / base.inertia[2, 2],) * 2,
            imu_offset=(0.0, 0.0),
            thrust_to_weight=(1.0, 10.0),
        )
        v = randomize_vehicle(99, ranges)
        assert v.mass == pytest.approx(base.mass)
        assert v.omega_max == pytest.approx(base.omega_max)
        np.testing.assert_allclose(v.inertia, base.inertia, rtol=1e-12)

    def test_all_seeds_hover_feasible(self):
        """Default ranges never produce a vehicle that cannot hover."""
        for seed in range(1000):
            assert randomize_vehicle(seed).hover_feasible()

    def test_infeasible_ranges_raise_after_resampling(self):
        ranges = VehicleRanges(mass=(50.0, 50.0))  # 50 kg cannot hover here
        with pytest.raises(RuntimeError):
            randomize_vehicle(1, ranges)

    def test_degenerate_range_rejected(self):
        with pytest.raises(ValueError):
            randomize_vehicle(1, VehicleRanges(mass=(2.0, 1.0)))


class TestStepDynamics:
    def test_hover_equilibrium_is_stationary(self):
        """At hover speed and hover throttle, nothing moves."""
        v = make_vehicle()
        wh = hover_speed(v)
        dh = delta_for_speed(v, wh)
        s = RigidBodyState([0, 0, 0], [0, 0, 0], [1, 0, 0, 0], [0, 0, 0], [wh] * 4)
        for _ in range(100):
            s = step_dynamics(s, [dh] * 4, v, DT)
        assert np.max(np.abs(s.velocity)) < 1e-6
        assert np.max(np.abs(s.omega_body)) < 1e-6

    def test_free_fall_matches_parabola(self):
        """Zero throttle, zero idle speed: the CoM flies a textbook parabola."""
        v = make_vehicle(omega_idle=0.0)
        s = RigidBodyState([0, 0, 0], [0, 0, -5.0], [1, 0, 0, 0], [0, 0, 0],
                           [0.0] * 4)
        n = int(1.0 / DT)
        for _ in range(n):
            s = step_dynamics(s, [0.0] * 4, v, DT)
        t = n * DT
        assert s.position[2] == pytest.approx(-5.0 * t + 0.5 * GRAVITY * t * t,
                                              abs=1e-6)

    def test_torque_free_symmetric_body_conserves_rate_magnitude(self):
        v = make_vehicle(omega_idle=0.0, k_thrust=0.0,
                         inertia=np.eye(3) * 2e-3, rotor_inertia=0.0)
        omega0 = np.array([4.0, -3.0, 2.0])
        s = RigidBodyState([0, 0, 0], [0, 0, 0], [1, 0, 0, 0], omega0, [0.0] * 4)
        for _ in range(2000):
            s = step_dynamics(s, [0.0] * 4, v, DT)
        assert np.linalg.norm(s.omega_body) == pytest.approx(
            np.linalg.norm(omega0), abs=1e-9)

    def test_quaternion_norm_over_long_rollout(self):
        """Ten seconds of tumbling leaves the quaternion unit to 1e-9."""
        v = make_vehicle()
        rng = np.random.default_rng(0)
        s = spawn_throw(4.0, [3.0, -2.0, 1.5], rng, omega_idle=v.omega_idle)
        delta = [0.3, 0.5, 0.2, 0.4]
        for _ in range(20000):
            s = step_dynamics(s, delta, v, DT)
        assert abs(np.linalg.norm(s.attitude) - 1.0) < 1e-9

    def test_rotor_step_response_recovers_tau(self):
        """Log-fit of the rotor spin-up recovers the lag constant within 1%."""
        v = make_vehicle()
        s = RigidBodyState([0, 0, 0], [0, 0, 0], [1, 0, 0, 0], [0, 0, 0],
                           [v.omega_idle] * 4)
        target = steady_speed(v, 0.8)
        times, speeds = [], []
        for k in range(int(0.2 / DT)):
            s = step_dynamics(s, [0.8] * 4, v, DT)
            times.append((k + 1) * DT)
            speeds.append(s.rotor_speeds[0])
        times = np.array(times)
        speeds = np.array(speeds)
        mask = (target - speeds) / (target - v.omega_idle) > 0.05
        slope = np.polyfit(times[mask],
                           np.log(target - speeds[mask]), 1)[0]
        assert -1.0 / slope == pytest.approx(v.tau, rel=0.01)

    def test_rejects_bad_dt_and_nonfinite_state(self):
        v = make_vehicle()
        s = RigidBodyState([0, 0, 0], [0, 0, 0], [1, 0, 0, 0], [0, 0, 0], [0] * 4)
        with pytest.raises(ValueError):
            step_dynamics(s, [0] * 4, v, 0.0)
        with pytest.raises(ValueError):
            step_dynamics(s, [0] * 4, v, 0.01)
        s.vec[3] = np.nan
        with pytest.raises(ValueError):
            step_dynamics(s, [0] * 4, v, DT)


class TestBinomialLinearization:
    def test_linearized_steady_speed_error_bound(self):
        """The exact square-root steady speed and its binomial linearization
        differ by the textbook remainder: within x^2/8 * w for positive
        thrust increments, and within the Lagrange form
        x^2/8 * (1-|x|)^(-3/2) * w on the negative side."""
        v = make_vehicle()
        thrust0 = 0.6 * v.k_thrust * v.omega_max ** 2
        w0 = math.sqrt(thrust0 / v.k_thrust)
        for x in np.linspace(-0.1, 0.1, 201):
            exact = w0 * math.sqrt(1.0 + x)
            linear = w0 * (1.0 + 0.5 * x)
            err = abs(exact - linear)
            bound = x * x / 8.0 * w0
            if x >= 0.0:
                assert err <= bound + 1e-12
            else:
                assert err <= bound * (1.0 - abs(x)) ** -1.5 + 1e-12


class TestEffectivenessOracle:
    def test_force_rows_exact_on_rollout(self):
        """d(specific force) equals B1k times d(w^2) to float precision."""
        v = make_vehicle(imu_offset=np.zeros(3))
        b1k, _ = true_effectiveness(v)
        s = RigidBodyState([0, 0, 0], [0, 0, 0], [1, 0, 0, 0], [0, 0, 0],
                           [v.omega_idle] * 4)
        prev_f = None
        prev_w = None
        for k in range(200):
            delta = [0.5 + 0.4 * math.sin(12.0 * k * DT + i) for i in range(4)]
            s = step_dynamics(s, delta, v, DT)
            w = s.rotor_speeds.copy()
            f = np.array([0.0, 0.0, -v.k_thrust * np.sum(w ** 2) / v.mass])
            if prev_f is not None:
                d_nu = f - prev_f
                x = w ** 2 - prev_w ** 2
                np.testing.assert_allclose(d_nu, b1k[:3] @ x, atol=1e-12)
            prev_f, prev_w = f, w

    def test_rate_rows_match_at_low_body_rates(self):
        """d(angular acceleration) follows B1k/B2 once the gyroscopic term is
        negligible (short rollout from rest)."""
        v = make_vehicle()
        b1k, b2 = true_effectiveness(v)
        inv_inertia = np.linalg.inv(v.inertia)
        s = RigidBodyState([0, 0, 0], [0, 0, 0], [1, 0, 0, 0], [0, 0, 0],
                           [v.omega_idle] * 4)

        def omega_dot(state, w_dot):
            torque = np.zeros(3)
            for i in range(4):
                thrust = v.k_thrust * state.rotor_speeds[i] ** 2
                rx, ry, _ = v.rotor_positions[i]
                spin = v.rotor_spin_dirs[i]
                torque += np.array([-ry * thrust, rx * thrust,
                                    spin * (v.moment_const * thrust
                                            + v.rotor_inertia * w_dot[i])])
            gyro = np.cross(state.omega_body, v.inertia @ state.omega_body)
            return inv_inertia @ (torque - gyro)

        prev = None
        resid_max = 0.0
        scale_max = 0.0
        for k in range(100):
            delta = [0.2, 0.7, 0.4, 0.3] if k > 10 else [0.3] * 4
            s = step_dynamics(s, delta, v, DT)
            ws = np.array([steady_speed(v, d) for d in delta])
            w_dot = (ws - s.rotor_speeds) / v.tau
            od = omega_dot(s, w_dot)
            if prev is not None:
                d_target = od - prev[0]
                x8 = np.concatenate([s.rotor_speeds ** 2 - prev[1] ** 2,
                                     w_dot - prev[2]])
                pred = np.hstack([b1k[3:], b2]) @ x8
                resid_max = max(resid_max, np.max(np.abs(d_target - pred)))
                scale_max = max(scale_max, np.max(np.abs(d_target)))
            prev = (od, s.rotor_speeds.copy(), w_dot)
        assert resid_max < 0.01 * scale_max

    def test_symmetry_and_scaling(self):
        v = make_vehicle()
        b1k, _ = true_effectiveness(v)
        # roll/pitch rows are antisymmetric across motor pairs of an X quad
        assert b1k[3, 0] == pytest.approx(-b1k[3, 1], rel=1e-9)
        assert b1k[4, 0] == pytest.approx(-b1k[4, 1], rel=1e-9)
        heavy = copy.deepcopy(v)
        heavy.mass *= 2.0
        heavy._cache = None
        b1k_heavy, _ = true_effectiveness(heavy)
        np.testing.assert_allclose(b1k_heavy[2], b1k[2] / 2.0, rtol=1e-12)


class TestSensors:
    def test_gyro_clamps_at_sensor_limit(self):
        """A 40 rad/s roll rate reads exactly the 2000 deg/s limit."""
        v = make_vehicle()
        s = RigidBodyState([0, 0, 0], [0, 0, 0], [1, 0, 0, 0], [40.0, 0, 0],
                           [v.omega_idle] * 4)
        sample = sample_sensors(s, s, v, quiet_noise(), np.random.default_rng(0))
        assert sample.gyro[0] == pytest.approx(34.9066, abs=1e-4)
        assert sample.gyro[0] == GYRO_LIMIT

    def test_hover_specific_force_is_minus_g(self):
        v = make_vehicle(imu_offset=np.zeros(3))
        wh = hover_speed(v)
        s = RigidBodyState([0, 0, 0], [0, 0, 0], [1, 0, 0, 0], [0, 0, 0], [wh] * 4)
        sample = sample_sensors(s, s, v, quiet_noise(), np.random.default_rng(0))
        np.testing.assert_allclose(sample.specific_force, [0, 0, -GRAVITY],
                                   atol=1e-9)

    def test_free_fall_specific_force_is_zero(self):
        v = make_vehicle(omega_idle=0.0, imu_offset=np.zeros(3))
        s = RigidBodyState([0, 0, 0], [0, 0, -3.0], [1, 0, 0, 0], [0, 0, 0],
                           [0.0] * 4)
        sample = sample_sensors(s, s, v, quiet_noise(), np.random.default_rng(0))
        assert np.linalg.norm(sample.specific_force) < 1e-12

    def test_lever_arm_and_its_compensation(self):
        """A spinning offset IMU sees centripetal force; referring the
        measurement to the CoM removes it."""
        v = make_vehicle(omega_idle=0.0, imu_offset=np.array([0.02, 0.0, 0.0]))
        omega = np.array([0.0, 0.0, 8.0])
        s = RigidBodyState([0, 0, 0], [0, 0, -3.0], [1, 0, 0, 0], omega, [0.0] * 4)
        sample = sample_sensors(s, s, v, quiet_noise(), np.random.default_rng(0))
        expect = np.cross(omega, np.cross(omega, v.imu_offset))
        np.testing.assert_allclose(sample.specific_force, expect, atol=1e-9)
        fixed = com_specific_force(sample.specific_force, sample.gyro,
                                   sample.gyro, v.imu_offset, DT)
        np.testing.assert_allclose(fixed, 0.0, atol=1e-9)

    def test_rotor_accels_consistent_with_differencing(self):
        v = make_vehicle()
        s0 = RigidBodyState([0, 0, 0], [0, 0, 0], [1, 0, 0, 0], [0, 0, 0],
                            [v.omega_idle] * 4)
        s1 = step_dynamics(s0, [0.5] * 4, v, DT)
        sample = sample_sensors(s1, s0, v, quiet_noise(), np.random.default_rng(0),
                                dt=DT)
        np.testing.assert_allclose(
            sample.rotor_accels, (s1.rotor_speeds - s0.rotor_speeds) / DT,
            rtol=1e-12)


class TestSpawnThrow:
    def test_release_speed_for_4m_apex(self):
        s = spawn_throw(4.0, [0, 0, 0], np.random.default_rng(0))
        assert -s.velocity[2] == pytest.approx(8.859, abs=1e-3)

    def test_apex_height_under_zero_thrust(self):
        v = make_vehicle(omega_idle=0.0)
        s = spawn_throw(3.5, [0, 0, 0], np.random.default_rng(1))
        apex = 0.0
        for _ in range(4000):
            s = step_dynamics(s, [0.0] * 4, v, DT)
            apex = max(apex, -s.position[2])
        assert apex == pytest.approx(3.5, abs=1e-6)

    def test_zero_tumble_stays_zero_torque_free(self):
        v = make_vehicle(omega_idle=0.0, k_thrust=0.0, rotor_inertia=0.0,
                         inertia=np.eye(3) * 1e-3)
        s = spawn_throw(4.0, [0, 0, 0], np.random.default_rng(2))
        for _ in range(1000):
            s = step_dynamics(s, [0.0] * 4, v, DT)
        assert np.max(np.abs(s.omega_body)) < 1e-12

    def test_rejects_excessive_tumble(self):
        with pytest.raises(ValueError):
            spawn_throw(4.0, [8.0, 8.0, 8.0], np.random.default_rng(0))

    def test_attitude_is_unit_and_seeded(self):
        rng = np.random.default_rng(5)
        s = spawn_throw(4.0, [1.0, 0, 0], rng)
        assert np.linalg.norm(s.attitude) == pytest.approx(1.0, abs=1e-12)
