import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapablate import beamoptics as bo


def golden_beam(focus=(770e-6, 38.5e-6, 60e-6)):
    return bo.BeamSpec(focus_position=focus)


class TestFocusedWaist:
    def test_default_beam_waist(self):
        # lambda f / (pi W) = 532 nm * 150 mm / (pi * 0.856 mm)
        w0 = bo.focused_waist(golden_beam())
        assert w0 == pytest.approx(29.67e-6, abs=0.1e-6)

    def test_doubling_input_waist_halves_focus(self):
        spec = golden_beam()
        doubled = bo.BeamSpec(input_waist_radius=2 * spec.input_waist_radius)
        assert bo.focused_waist(doubled) == pytest.approx(bo.focused_waist(spec) / 2, rel=1e-12)

    def test_inverse_arithmetic_round_trip(self):
        target = 20e-6
        w_in = 532e-9 * 0.150 / (np.pi * target)
        assert w_in == pytest.approx(1.270e-3, abs=1e-6)
        spec = bo.BeamSpec(input_waist_radius=w_in)
        assert bo.focused_waist(spec) == pytest.approx(target, rel=1e-12)


class TestBeamRadius:
    def test_waist_at_origin(self):
        assert bo.beam_radius(20e-6, 0.0, 532e-9) == 20e-6

    def test_rayleigh_range_growth(self):
        zr = bo.rayleigh_range(20e-6, 532e-9)
        assert zr == pytest.approx(2.362e-3, abs=1e-6)
        assert bo.beam_radius(20e-6, zr, 532e-9) == pytest.approx(np.sqrt(2) * 20e-6, rel=1e-12)

    @given(z=st.floats(min_value=0, max_value=0.1, allow_nan=False))
    @settings(max_examples=30, deadline=None)
    def test_even_in_z(self, z):
        assert bo.beam_radius(20e-6, -z, 532e-9) == bo.beam_radius(20e-6, z, 532e-9)

    def test_never_below_waist(self):
        zs = np.linspace(-5e-3, 5e-3, 101)
        assert all(bo.beam_radius(25e-6, z, 532e-9) >= 25e-6 for z in zs)


class TestFluence:
    def test_zero_energy_zero_everywhere(self):
        spec = golden_beam()
        pts = np.array([[0, 0, 0], [770e-6, 38.5e-6, 60e-6], [1e-3, 0, 1e-4]])
        assert np.all(bo.fluence_at(0.0, spec, pts) == 0.0)

    def test_peak_at_focus_energy_94uJ(self):
        spec = golden_beam()
        peak = bo.fluence_at(94e-6, spec, spec.focus_position)
        assert peak == pytest.approx(6.80, rel=0.01)

    def test_observed_chip_tail_at_60um_offset(self):
        # the measured surrounding-electrode exposure: 6.8 exp(-2 (60/w0)^2)
        spec = golden_beam()
        energy = bo.pulse_energy_for_fluence(6.8, spec)
        below = (spec.focus_position[0], spec.focus_position[1], spec.focus_position[2] - 60e-6)
        assert bo.fluence_at(energy, spec, below) == pytest.approx(1.9e-3, rel=0.10)

    def test_energy_recovered_by_transverse_integration(self):
        spec = golden_beam()
        energy = 94e-6
        w0 = bo.focused_waist(spec)
        half = 5 * w0
        n = 801
        xs = np.linspace(-half, half, n)
        zs = np.linspace(-half, half, n)
        gx, gz = np.meshgrid(xs, zs, indexing="ij")
        pts = np.stack([
            spec.focus_position[0] + gx,
            np.full_like(gx, spec.focus_position[1]),
            spec.focus_position[2] + gz,
        ], axis=-1)
        f = bo.fluence_at(energy, spec, pts) / bo.J_PER_M2_TO_J_PER_CM2
        integral = np.trapezoid(np.trapezoid(f, zs, axis=1), xs)
        assert integral == pytest.approx(energy, rel=1e-3)

    def test_maximal_on_axis_at_focus_over_grid(self):
        spec = golden_beam()
        energy = 50e-6
        rng = np.random.default_rng(4)
        peak = bo.fluence_at(energy, spec, spec.focus_position)
        pts = np.asarray(spec.focus_position) + rng.uniform(-200e-6, 200e-6, (200, 3))
        assert np.all(bo.fluence_at(energy, spec, pts) <= peak + 1e-15)

    def test_negative_energy_rejected(self):
        with pytest.raises(ValueError):
            bo.fluence_at(-1e-6, golden_beam(), (0, 0, 0))


class TestPowerCalibration:
    def test_anchor_values_exact(self):
        cal = bo.PowerCalibration()
        assert bo.percent_to_fluence(cal, 10) == 0.56
        assert bo.percent_to_fluence(cal, 80) == 6.8

    def test_midpoint_interpolation(self):
        # 0.56 + 6.24 * (45 - 10) / 70
        cal = bo.PowerCalibration()
        assert bo.percent_to_fluence(cal, 45) == pytest.approx(3.68, rel=1e-12)

    def test_out_of_range_rejected(self):
        cal = bo.PowerCalibration()
        with pytest.raises(bo.CalibrationRangeError):
            bo.percent_to_fluence(cal, 5)
        with pytest.raises(bo.CalibrationRangeError):
            bo.percent_to_fluence(cal, 81)

    @given(st.floats(min_value=10, max_value=80))
    @settings(max_examples=50, deadline=None)
    def test_monotone_non_decreasing(self, pct):
        cal = bo.PowerCalibration()
        assert bo.percent_to_fluence(cal, pct) <= bo.percent_to_fluence(cal, min(pct + 1, 80))

    def test_non_monotone_anchors_rejected(self):
        with pytest.raises(ValueError):
            bo.PowerCalibration(((10.0, 0.56), (20.0, 0.3)))
        with pytest.raises(ValueError):
            bo.PowerCalibration(((30.0, 0.56), (20.0, 1.0)))


class TestChipExposure:
    REGION = ((-200e-6, 1410e-6), (-125e-6, 125e-6))

    def test_matches_observed_surface_fluence(self):
        spec = golden_beam()
        energy = bo.pulse_energy_for_fluence(6.8, spec)
        samples, grazing = bo.chip_exposure_profile(spec, energy, self.REGION)
        assert not grazing
        assert bo.max_surface_fluence(samples) == pytest.approx(1.9e-3, rel=0.10)

    def test_zero_energy_all_zero(self):
        samples, _ = bo.chip_exposure_profile(golden_beam(), 0.0, self.REGION, 50e-6)
        assert all(s.fluence == 0.0 for s in samples)

    def test_raising_beam_height_strictly_decreases_exposure(self):
        energy = bo.pulse_energy_for_fluence(6.8, golden_beam())
        maxima = []
        for h in (60e-6, 80e-6, 100e-6):
            spec = golden_beam(focus=(770e-6, 38.5e-6, h))
            samples, _ = bo.chip_exposure_profile(spec, energy, self.REGION)
            maxima.append(bo.max_surface_fluence(samples))
        assert maxima[0] > maxima[1] > maxima[2]

    def test_grazing_flag_when_axis_hits_plane(self):
        spec = bo.BeamSpec(focus_position=(770e-6, 0.0, 60e-6),
                           propagation_axis=(0.0, 1.0, -1.0))
        samples, grazing = bo.chip_exposure_profile(spec, 1e-6, self.REGION, 50e-6)
        assert grazing

    def test_csv_export_schema(self):
        samples, _ = bo.chip_exposure_profile(golden_beam(), 1e-6, self.REGION, 100e-6)
        csv_text = bo.exposure_csv(samples)
        lines = csv_text.strip().splitlines()
        assert lines[0] == "x_m,y_m,fluence_j_cm2"
        assert len(lines) == len(samples) + 1
        for ln in lines[1:3]:
            x, y, f = (float(v) for v in ln.split(","))
            assert f >= 0
