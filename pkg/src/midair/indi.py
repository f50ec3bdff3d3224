"""Incremental inner loop: allocation of pseudo-control increments to
thrust-normalized commands, ESC inversion, and actuator-lag emulation.

Pseudo-controls are 6-vectors (f_x, f_y, f_z, pdot, qdot, rdot).  Only the
channels (f_z, pdot, qdot, rdot) are allocated -- aligned rotors produce no
lateral specific force -- while identification keeps all six rows.  The
effective matrix combines thrust effectiveness with the linearized
rotor-acceleration term, which is what makes yaw authority usable during
transients.
"""

import math
from dataclasses import dataclass

import numpy as np

from .filters import FilterBank

CONTROLLED_ROWS = (2, 3, 4, 5)

# Below this Hadamard ratio (|det| over the product of column norms) the
# controlled submatrix is treated as singular and the previous command held.
_SINGULARITY_RATIO = 1e-12

# Rotor-speed divisor floor for the B2 term: the fitted idle speed, but never
# below 50 rad/s in case the idle fit came out near zero or negative.
OMEGA_FLOOR_MIN = 50.0
OMEGA_FLOOR_UNFITTED = 300.0


def effective_matrix(cp, omega0, omega_floor=None):
    """6x4 sensitivity G of pseudo-controls to thrust-normalized commands.

    G = B1k diag(w_max^2) + [0; B2] diag(w_max^2 / (2 w0 tau)), with w0 the
    filtered rotor speeds clamped below at omega_floor.
    """
    if omega_floor is None:
        omega_floor = np.maximum(cp.omega_idle, OMEGA_FLOOR_MIN)
    w0 = np.maximum(np.asarray(omega0, dtype=float), omega_floor)
    wmax2 = cp.omega_max ** 2
    g = cp.b1k * wmax2[np.newaxis, :]
    g[3:] += cp.b2 * (wmax2 / (2.0 * w0 * cp.tau))[np.newaxis, :]
    return g


@dataclass
class AllocationInfo:
    degraded: bool = False
    saturated: bool = False
    demand: np.ndarray = None
    residual: float = 0.0


def allocate(nu_r, nu0, omega_dot0, u0, g, b2):
    """Solve for bounded commands realizing the pseudo-control demand.

    The increment solves G_c du = nu_r - nu0 + B2 wdot0 on the controlled
    channels; u = clip(u0 + du, 0, 1) with one redistribution pass that
    freezes saturated motors and re-solves the remainder on the free ones.
    Returns (u, AllocationInfo); a singular G_c is reported as degraded with
    u = clip(u0) so the caller can hold its previous command.
    """
    gc = g[CONTROLLED_ROWS, :]
    demand = np.asarray(nu_r, dtype=float)[list(CONTROLLED_ROWS)] \
        - np.asarray(nu0, dtype=float)[list(CONTROLLED_ROWS)]
    demand[1:] += b2 @ omega_dot0
    u0 = np.asarray(u0, dtype=float)

    col_norms = np.linalg.norm(gc, axis=0)
    hadamard = float(np.prod(col_norms))
    if hadamard <= 0.0 or abs(np.linalg.det(gc)) < _SINGULARITY_RATIO * hadamard:
        return np.clip(u0, 0.0, 1.0), AllocationInfo(
            degraded=True, demand=demand, residual=float(np.linalg.norm(demand)))

    du = np.linalg.solve(gc, demand)
    u_raw = u0 + du
    if np.all((u_raw >= 0.0) & (u_raw <= 1.0)):
        return u_raw, AllocationInfo(demand=demand)

    u = np.clip(u_raw, 0.0, 1.0)
    free = (u_raw > 0.0) & (u_raw < 1.0)
    if np.any(free):
        fixed = ~free
        resid = demand - gc[:, fixed] @ (u[fixed] - u0[fixed])
        du_free, *_ = np.linalg.lstsq(gc[:, free], resid, rcond=None)
        u[free] = np.clip(u0[free] + du_free, 0.0, 1.0)
    achieved = gc @ (u - u0)
    return u, AllocationInfo(saturated=True, demand=demand,
                             residual=float(np.linalg.norm(achieved - demand)))


def esc_invert(u, kappa):
    """Throttle delta producing normalized thrust u under the ESC model
    u = [kappa d + (1 - kappa) sqrt(d)]^2.

    Closed form: with s = sqrt(d), solve kappa s^2 + (1-kappa) s = sqrt(u)
    for the root on the monotone branch, written to avoid cancellation on
    both sides of kappa = 1.  Accepts scalars or arrays.
    """
    u = np.clip(u, 0.0, 1.0)
    su = np.sqrt(u)
    kappa = np.asarray(kappa, dtype=float)
    q = 1.0 - kappa
    disc = np.sqrt(q * q + 4.0 * kappa * su)
    kappa_safe = np.maximum(kappa, 1e-300)
    s = np.where(q >= 0.0, 2.0 * su / (q + disc), (-q + disc) / (2.0 * kappa_safe))
    return np.clip(s * s, 0.0, 1.0)


def esc_forward(delta, kappa):
    """The ESC model itself: normalized thrust from throttle."""
    delta = np.clip(delta, 0.0, 1.0)
    return (kappa * delta + (1.0 - kappa) * np.sqrt(delta)) ** 2


def lag_emulate(u, u0_prev, tau, dt):
    """Exact one-step first-order lag of the command, per motor."""
    alpha = 1.0 - np.exp(-dt / np.asarray(tau, dtype=float))
    return u0_prev + (u - u0_prev) * alpha


class InnerLoop:
    """Stateful inner loop bound to one fitted parameter set.

    Owns the command memory (u and its lag emulation) and consumes the
    control-rate filter group of the shared bank.  One step per tick:
    filters, effective matrix, allocation, ESC inversion.
    """

    def __init__(self, cp, bank: FilterBank, dt=5e-4):
        if not cp.valid:
            raise ValueError(f"control params failed gates: {cp.gate_failures}")
        self.cp = cp
        self.bank = bank
        self.dt = dt
        self.omega_floor = np.maximum(cp.omega_idle, OMEGA_FLOOR_MIN)
        self._lag_alpha = 1.0 - np.exp(-dt / cp.tau)
        self.u = np.zeros(4)
        self.u0_lag = np.zeros(4)
        self.degraded_count = 0
        self.saturated_count = 0

    def init_from_speeds(self, rotor_speeds):
        """Seed the command memory from measured rotor speeds at switchover,
        using the fitted motor model (u ~ ((w - w_idle)/w_max)^2)."""
        ratio = (np.asarray(rotor_speeds, dtype=float) - self.cp.omega_idle) \
            / self.cp.omega_max
        u = np.clip(ratio, 0.0, 1.0) ** 2
        self.u = u.copy()
        self.u0_lag = u.copy()
        self.bank.ctl_u0.seed(u)

    def step(self, sample, nu_r):
        """Advance filters and produce the four throttle commands.

        Returns (delta, nu0, info).
        """
        bank = self.bank
        accel_f = bank.ctl_accel.step(sample.specific_force)
        omega_dot_body = bank.ctl_gyro.step(sample.gyro)
        rotor_accel_f = bank.ctl_rotor.step(sample.rotor_speeds)
        omega0 = bank.ctl_rotor.last_filtered

        self.u0_lag = self.u0_lag + (self.u - self.u0_lag) * self._lag_alpha
        u0_f = bank.ctl_u0.step(self.u0_lag)

        nu0 = np.concatenate([accel_f, omega_dot_body])
        g = effective_matrix(self.cp, omega0, self.omega_floor)
        u, info = allocate(nu_r, nu0, rotor_accel_f, u0_f, g, self.cp.b2)
        if info.degraded:
            self.degraded_count += 1
            u = self.u  # hold previous command
        else:
            self.u = u
        if info.saturated:
            self.saturated_count += 1
        delta = esc_invert(u, self.cp.kappa)
        return delta, nu0, info
