"""Second-order Butterworth low-pass filtering and synchronized differentiation.

Every signal entering the incremental control law or the estimators passes
through an identical biquad, so linear relations between signals survive the
filtering (same phase lag on all channels).  Derivatives are taken *after*
filtering so they carry that same lag.
"""

import math

import numpy as np


class Biquad:
    """One second-order section in direct-form II transposed.

    Coefficients are normalized to a0 = 1.  State may be scalar or an
    array, in which case the same filter runs elementwise over channels.
    """

    __slots__ = ("b0", "b1", "b2", "a1", "a2", "_s1", "_s2", "_primed")

    def __init__(self, b0, b1, b2, a1, a2):
        self.b0, self.b1, self.b2 = b0, b1, b2
        self.a1, self.a2 = a1, a2
        self._s1 = 0.0
        self._s2 = 0.0
        self._primed = False

    @property
    def coeffs(self):
        return (self.b0, self.b1, self.b2, self.a1, self.a2)

    def dc_gain(self):
        return (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)

    def poles(self):
        return np.roots([1.0, self.a1, self.a2])

    def reset(self):
        self._s1 = 0.0
        self._s2 = 0.0
        self._primed = False

    def seed(self, x0):
        """Initialize the delay line to steady state for constant input x0.

        The next step(x0) then returns exactly x0: no start-up transient.
        """
        x0 = x0 * 1.0 if np.isscalar(x0) else np.asarray(x0, dtype=float).copy()
        self._s2 = (self.b2 - self.a2) * x0
        self._s1 = (self.b1 - self.a1) * x0 + self._s2
        self._primed = True

    def step(self, x):
        """Advance by one sample; returns the filtered value."""
        if not self._primed:
            self.seed(x)
        y = self.b0 * x + self._s1
        self._s1 = self.b1 * x - self.a1 * y + self._s2
        self._s2 = self.b2 * x - self.a2 * y
        return y

    def response_at(self, f, fs):
        """Complex frequency response at f Hz for sample rate fs."""
        z = np.exp(-2j * math.pi * f / fs)
        return (self.b0 + self.b1 * z + self.b2 * z * z) / (1.0 + self.a1 * z + self.a2 * z * z)


def butter2_lowpass(fc, fs):
    """Design a second-order Butterworth low-pass biquad.

    Bilinear transform of the analog prototype 1/(s^2 + sqrt(2) s + 1) with
    the cutoff pre-warped, yielding exactly unity DC gain.
    """
    if not 0.0 < fc < fs / 2.0:
        raise ValueError(f"cutoff {fc} Hz must lie in (0, {fs / 2.0}) Hz")
    w0 = 2.0 * math.pi * fc / fs
    cosw = math.cos(w0)
    alpha = math.sin(w0) / math.sqrt(2.0)  # Q = 1/sqrt(2)
    a0 = 1.0 + alpha
    return Biquad(
        b0=(1.0 - cosw) / 2.0 / a0,
        b1=(1.0 - cosw) / a0,
        b2=(1.0 - cosw) / 2.0 / a0,
        a1=-2.0 * cosw / a0,
        a2=(1.0 - alpha) / a0,
    )


class FilteredDifferentiator:
    """Low-pass filter followed by a backward difference.

    Filtering first keeps the derivative phase-synchronized with every other
    identically filtered signal.  Exposes the filtered value of the last
    sample as well, since most consumers need both.
    """

    __slots__ = ("filt", "dt", "last_filtered", "_prev")

    def __init__(self, fc, fs):
        self.filt = butter2_lowpass(fc, fs)
        self.dt = 1.0 / fs
        self.last_filtered = None
        self._prev = None

    def reset(self):
        self.filt.reset()
        self.last_filtered = None
        self._prev = None

    def step(self, x):
        """Returns d/dt of the filtered signal (zero on the first sample)."""
        y = self.filt.step(x)
        rate = (y - self._prev) / self.dt if self._prev is not None else y * 0.0
        self._prev = y
        self.last_filtered = y
        return rate


class FilterBank:
    """All filters feeding the controller (cutoff_ctl) and the identification
    pipeline (cutoff_ident), sharing coefficients within each cutoff group.

    Control group: accelerometer, gyro (with rate output), rotor speeds
    (with acceleration output), and the emulated actuator state u0.
    Identification group: the same sensor set plus the throttle channels
    delta and sqrt(delta), which are filtered separately so the motor-model
    regression stays exact under filtering.
    """

    def __init__(self, sample_rate=2000.0, cutoff_ctl=15.0, cutoff_ident=20.0):
        self.sample_rate = sample_rate
        self.cutoff_ctl = cutoff_ctl
        self.cutoff_ident = cutoff_ident

        self.ctl_accel = butter2_lowpass(cutoff_ctl, sample_rate)
        self.ctl_gyro = FilteredDifferentiator(cutoff_ctl, sample_rate)
        self.ctl_rotor = FilteredDifferentiator(cutoff_ctl, sample_rate)
        self.ctl_u0 = butter2_lowpass(cutoff_ctl, sample_rate)

        self.ident_accel = butter2_lowpass(cutoff_ident, sample_rate)
        self.ident_gyro = FilteredDifferentiator(cutoff_ident, sample_rate)
        self.ident_rotor = FilteredDifferentiator(cutoff_ident, sample_rate)
        # rotor speeds squared get their own channel: the thrust model is
        # linear in w^2, and filtering does not commute with squaring
        self.ident_rotor_sq = butter2_lowpass(cutoff_ident, sample_rate)
        self.ident_delta = butter2_lowpass(cutoff_ident, sample_rate)
        self.ident_sqrt_delta = butter2_lowpass(cutoff_ident, sample_rate)

    def ctl_group(self):
        return (self.ctl_accel, self.ctl_gyro.filt, self.ctl_rotor.filt, self.ctl_u0)

    def ident_group(self):
        return (self.ident_accel, self.ident_gyro.filt, self.ident_rotor.filt,
                self.ident_rotor_sq, self.ident_delta, self.ident_sqrt_delta)
