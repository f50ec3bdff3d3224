"""Filter design against an independent oracle, plus the phase-synchrony
property the incremental control law depends on."""

import numpy as np
import pytest
from scipy import signal

from midair.filters import Biquad, FilterBank, FilteredDifferentiator, butter2_lowpass

FS = 2000.0


def run_filter(filt, x):
    return np.array([filt.step(v) for v in x])


class TestDesign:
    def test_matches_scipy_bilinear_design(self):
        """Coefficients must match scipy's pre-warped bilinear design to 1e-9."""
        for fc in (15.0, 20.0, 5.0, 300.0):
            b, a = signal.butter(2, fc, fs=FS)
            ours = butter2_lowpass(fc, FS)
            np.testing.assert_allclose(ours.coeffs[:3], b, atol=1e-9)
            np.testing.assert_allclose(ours.coeffs[3:], a[1:], atol=1e-9)

    def test_minus_3db_at_cutoff(self):
        """A Butterworth low-pass is 3.01 dB down exactly at its cutoff."""
        filt = butter2_lowpass(20.0, FS)
        mag_db = 20.0 * np.log10(abs(filt.response_at(20.0, FS)))
        assert mag_db == pytest.approx(-3.0103, abs=0.05)

    @pytest.mark.parametrize("fc", [1.0, 15.0, 20.0, 100.0, 999.0])
    def test_unity_dc_gain_and_stable_poles(self, fc):
        filt = butter2_lowpass(fc, FS)
        assert filt.dc_gain() == pytest.approx(1.0, abs=1e-6)
        assert np.all(np.abs(filt.poles()) < 1.0)

    def test_near_nyquist_cutoff_behaves_like_allpass_at_low_f(self):
        filt = butter2_lowpass(FS / 2.0 - 1.0, FS)
        assert abs(filt.response_at(5.0, FS)) == pytest.approx(1.0, abs=1e-3)
        assert filt.dc_gain() == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("fc", [0.0, -3.0, 1000.0, 2000.0])
    def test_rejects_cutoffs_outside_nyquist(self, fc):
        with pytest.raises(ValueError):
            butter2_lowpass(fc, FS)


class TestStep:
    def test_constant_input_converges_to_constant(self):
        filt = butter2_lowpass(15.0, FS)
        filt.reset()
        filt.seed(0.0)
        y = run_filter(filt, np.full(int(10 / 15.0 * FS), 3.7))
        assert y[-1] == pytest.approx(3.7, abs=1e-6)

    def test_zero_state_zero_input_zero_output(self):
        filt = butter2_lowpass(15.0, FS)
        assert np.all(run_filter(filt, np.zeros(100)) == 0.0)

    def test_seeding_removes_startup_transient(self):
        filt = butter2_lowpass(15.0, FS)
        y = run_filter(filt, np.full(50, -2.5))
        np.testing.assert_allclose(y, -2.5, atol=1e-12)

    def test_linearity(self):
        """filter(2x) == 2 filter(x), sample for sample."""
        rng = np.random.default_rng(1)
        x = rng.normal(size=400)
        f1 = butter2_lowpass(15.0, FS)
        f2 = butter2_lowpass(15.0, FS)
        f1.seed(0.0)
        f2.seed(0.0)
        y1 = run_filter(f1, x)
        y2 = run_filter(f2, 2.0 * x)
        np.testing.assert_allclose(y2, 2.0 * y1, atol=1e-9)

    def test_time_invariance(self):
        """A delayed input produces the identically delayed output."""
        rng = np.random.default_rng(2)
        x = rng.normal(size=300)
        lag = 17
        f1 = butter2_lowpass(20.0, FS)
        f2 = butter2_lowpass(20.0, FS)
        f1.seed(0.0)
        f2.seed(0.0)
        y = run_filter(f1, x)
        y_lag = run_filter(f2, np.concatenate([np.zeros(lag), x]))
        np.testing.assert_allclose(y_lag[lag:], y, atol=1e-12)

    def test_vector_channels_match_scalar_filters(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(100, 4))
        vec = butter2_lowpass(15.0, FS)
        scalars = [butter2_lowpass(15.0, FS) for _ in range(4)]
        for row in x:
            yv = vec.step(row)
            ys = [s.step(v) for s, v in zip(scalars, row)]
            np.testing.assert_array_equal(yv, ys)


class TestFilteredDifferentiator:
    def test_ramp_recovers_slope(self):
        """Post-transient, d/dt of a filtered ramp is the ramp slope."""
        slope = 3.2
        d = FilteredDifferentiator(20.0, FS)
        t = np.arange(2000) / FS
        rates = np.array([d.step(slope * ti) for ti in t])
        assert rates[-1] == pytest.approx(slope, rel=0.01)

    def test_constant_gives_zero(self):
        d = FilteredDifferentiator(20.0, FS)
        rates = np.array([d.step(5.0) for _ in range(200)])
        np.testing.assert_allclose(rates, 0.0, atol=1e-9)

    def test_slow_sine_amplitude(self):
        """Well below the cutoff, the output approximates a true derivative."""
        f_sig, amp = 1.0, 2.0
        d = FilteredDifferentiator(20.0, FS)
        t = np.arange(int(3 * FS)) / FS
        rates = np.array([d.step(amp * np.sin(2 * np.pi * f_sig * ti)) for ti in t])
        measured = np.max(np.abs(rates[int(FS):]))
        assert measured == pytest.approx(2 * np.pi * f_sig * amp, rel=0.02)


class TestPhaseSynchrony:
    def test_linear_relations_survive_identical_filtering(self):
        """If Y = sum(c_i X_i) sample-wise, the identically filtered signals
        satisfy the same relation: the lag cancels out of the model."""
        rng = np.random.default_rng(42)
        for _ in range(100):
            n_sig = rng.integers(2, 6)
            coeffs = rng.normal(size=n_sig)
            xs = rng.normal(size=(n_sig, 300))
            y = coeffs @ xs
            filts = [butter2_lowpass(15.0, FS) for _ in range(n_sig + 1)]
            for f in filts:
                f.seed(0.0)
            xf = np.array([run_filter(filts[i], xs[i]) for i in range(n_sig)])
            yf = run_filter(filts[-1], y)
            np.testing.assert_allclose(yf, coeffs @ xf, atol=1e-9)


class TestFilterBank:
    def test_groups_share_coefficients(self):
        bank = FilterBank()
        ctl = [f.coeffs for f in bank.ctl_group()]
        ident = [f.coeffs for f in bank.ident_group()]
        assert all(c == ctl[0] for c in ctl)
        assert all(c == ident[0] for c in ident)
        assert ctl[0] != ident[0]  # 15 Hz vs 20 Hz

    def test_default_cutoffs(self):
        bank = FilterBank()
        assert bank.cutoff_ctl == 15.0
        assert bank.cutoff_ident == 20.0
        assert bank.sample_rate == 2000.0
