"""Per-motor excitation sequence with the gyro-saturation guard.

Each motor in turn receives two full-throttle steps and a decreasing ramp
(many throttle levels, maximal rotor accelerations).  On entry to a motor's
slot the current gyro reading and the per-axis margin to the sensor limit
are recorded; the motor is cut for the rest of its slot as soon as any axis
moves by margin / max(1, motors_left).  The schedule keeps advancing on
time, so later motors still get their slots after an abort.
"""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import GYRO_LIMIT

PHASE_STEP1 = "step1"
PHASE_STEP2 = "step2"
PHASE_RAMP = "ramp"
PHASE_DONE = "done"

CONTINUE = "continue"
ABORT_MOTOR = "abort_motor"


@dataclass
class ExcitationSchedule:
    """Per-motor phase timing; defaults fill a 450 ms budget over 4 motors.

    step1 is followed by a zero-command gap inside the same phase window, so
    the phase sequence per motor is step1(+gap), step2, ramp.
    """

    delta_hi: float = 1.0
    step1: float = 0.035
    gap: float = 0.015
    step2: float = 0.025
    ramp: float = 0.0375

    @property
    def slot_duration(self):
        return self.step1 + self.gap + self.step2 + self.ramp

    @property
    def total_duration(self):
        return 4.0 * self.slot_duration

    def phase_duration(self, phase):
        return {PHASE_STEP1: self.step1 + self.gap,
                PHASE_STEP2: self.step2,
                PHASE_RAMP: self.ramp}[phase]


@dataclass
class ExcitationState:
    """Progress of the excitation sequence."""

    schedule: ExcitationSchedule = field(default_factory=ExcitationSchedule)
    gyro_limit: float = GYRO_LIMIT
    motor_index: int = 0
    phase: str = PHASE_STEP1
    phase_clock: float = 0.0
    omega_entry: np.ndarray = field(default_factory=lambda: np.zeros(3))
    margin: np.ndarray = field(default_factory=lambda: np.full(3, GYRO_LIMIT))
    n_left: int = 3
    aborted_motors: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=bool))
    _entered: bool = False

    @property
    def done(self):
        return self.phase == PHASE_DONE


def _record_entry(state, gyro):
    state.omega_entry = np.asarray(gyro, dtype=float).copy()
    state.margin = np.maximum(state.gyro_limit - np.abs(state.omega_entry), 0.0)
    state.n_left = 3 - state.motor_index
    state._entered = True


def excitation_command(state, t_in_phase=None):
    """Throttle vector for the current schedule position.

    All motors are zero except the active one; an aborted motor is zero for
    the remainder of its slot.
    """
    cmd = np.zeros(4)
    if state.done:
        return cmd
    if state.aborted_motors[state.motor_index]:
        return cmd
    t = state.phase_clock if t_in_phase is None else t_in_phase
    sched = state.schedule
    if state.phase == PHASE_STEP1:
        level = sched.delta_hi if t < sched.step1 else 0.0
    elif state.phase == PHASE_STEP2:
        level = sched.delta_hi
    else:  # ramp
        level = sched.delta_hi * max(0.0, 1.0 - t / sched.ramp)
    cmd[state.motor_index] = level
    return cmd


def guard_check(gyro, state):
    """ABORT_MOTOR when any axis strays from the entry reading by at least
    margin / max(1, n_left); ties abort (the conservative side)."""
    excursion = np.abs(np.asarray(gyro, dtype=float) - state.omega_entry)
    threshold = state.margin / max(1, state.n_left)
    if np.any(excursion >= threshold):
        return ABORT_MOTOR
    return CONTINUE


def advance(state, dt, gyro):
    """Advance the schedule clock by dt and run the guard on the new gyro.

    Entry readings/margins are (re-)recorded whenever a motor slot begins.
    Returns the state (mutated in place).
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if state.done:
        return state
    if not state._entered:
        _record_entry(state, gyro)

    if not state.aborted_motors[state.motor_index] \
            and guard_check(gyro, state) == ABORT_MOTOR:
        state.aborted_motors[state.motor_index] = True

    state.phase_clock += dt
    while not state.done and \
            state.phase_clock >= state.schedule.phase_duration(state.phase) - 1e-12:
        state.phase_clock -= state.schedule.phase_duration(state.phase)
        if state.phase == PHASE_STEP1:
            state.phase = PHASE_STEP2
        elif state.phase == PHASE_STEP2:
            state.phase = PHASE_RAMP
        elif state.motor_index == 3:
            state.phase = PHASE_DONE
        else:
            state.motor_index += 1
            state.phase = PHASE_STEP1
            _record_entry(state, gyro)
    return state
