import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad

from trapablate import trapmodel as tm


def square_electrode(half=50e-6):
    return tm.Electrode("sq", 1, tm.Role.DC, (-half, half), (-half, half))


def quadrature_potential(e, p):
    """Independent oracle: 2-D quadrature of the half-space kernel."""
    x, y, z = p

    def kern(yp, xp):
        r2 = (xp - x) ** 2 + (yp - y) ** 2 + z * z
        return z / (2 * np.pi * r2**1.5)

    val, _ = dblquad(kern, e.x_extent[0], e.x_extent[1], e.y_extent[0], e.y_extent[1],
                     epsabs=1e-14, epsrel=1e-10)
    return val


class TestBasisPotential:
    def test_far_field_vanishes(self):
        assert tm.electrode_basis_potential(square_electrode(), [0, 0, 10.0]) < 1e-6

    def test_boundary_continuity(self):
        e = tm.Electrode("big", 1, tm.Role.DC, (-0.5e-3, 0.5e-3), (-0.5e-3, 0.5e-3))
        assert tm.electrode_basis_potential(e, [0, 0, 1e-9]) == pytest.approx(1.0, abs=1e-3)

    def test_matches_quadrature_oracle(self):
        e = square_electrode()
        for p in ([0.0, 0.0, 50e-6], [30e-6, -20e-6, 80e-6], [-70e-6, 10e-6, 40e-6]):
            ours = tm.electrode_basis_potential(e, p)
            ref = quadrature_potential(e, p)
            assert ours == pytest.approx(ref, rel=1e-6)

    def test_rejects_points_at_or_below_plane(self):
        e = square_electrode()
        with pytest.raises(tm.DomainError):
            tm.electrode_basis_potential(e, [0, 0, 0.0])
        with pytest.raises(tm.DomainError):
            tm.electrode_basis_potential(e, [0, 0, -1e-6])

    def test_value_in_unit_interval(self):
        e = square_electrode()
        rng = np.random.default_rng(7)
        pts = np.column_stack([
            rng.uniform(-200e-6, 200e-6, 50),
            rng.uniform(-200e-6, 200e-6, 50),
            rng.uniform(1e-6, 500e-6, 50),
        ])
        vals = tm.electrode_basis_potential(e, pts)
        assert np.all(vals >= 0) and np.all(vals <= 1)

    def test_monotone_decreasing_in_z_above_center(self):
        e = square_electrode()
        zs = np.linspace(5e-6, 400e-6, 120)
        pts = np.column_stack([np.zeros_like(zs), np.zeros_like(zs), zs])
        vals = tm.electrode_basis_potential(e, pts)
        assert np.all(np.diff(vals) < 0)

    def test_tiling_additivity(self):
        whole = tm.Electrode("w", 1, tm.Role.DC, (0, 200e-6), (0, 100e-6))
        tiles = [
            tm.Electrode("a", 1, tm.Role.DC, (0, 120e-6), (0, 100e-6)),
            tm.Electrode("b", 1, tm.Role.DC, (120e-6, 200e-6), (0, 40e-6)),
            tm.Electrode("c", 1, tm.Role.DC, (120e-6, 200e-6), (40e-6, 100e-6)),
        ]
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = np.array([rng.uniform(-1e-4, 3e-4), rng.uniform(-1e-4, 2e-4),
                          rng.uniform(2e-6, 3e-4)])
            total = sum(tm.electrode_basis_potential(t, p) for t in tiles)
            assert total == pytest.approx(tm.electrode_basis_potential(whole, p), abs=1e-9)


class TestGradient:
    def test_matches_finite_difference_oracle(self):
        e = square_electrode()
        rng = np.random.default_rng(11)
        delta = 1e-9
        for _ in range(10):
            p = np.array([rng.uniform(-1e-4, 1e-4), rng.uniform(-1e-4, 1e-4),
                          rng.uniform(1e-5, 2e-4)])
            g = tm.electrode_basis_gradient(e, p)
            for ax in range(3):
                dp = np.zeros(3)
                dp[ax] = delta
                fd = (tm.electrode_basis_potential(e, p + dp)
                      - tm.electrode_basis_potential(e, p - dp)) / (2 * delta)
                assert g[ax] == pytest.approx(fd, rel=1e-6, abs=1e-4)

    def test_static_field_matches_potential_difference(self):
        chip = tm.default_layout()
        rng = np.random.default_rng(5)
        v = rng.uniform(-5, 5, len(chip.electrodes))
        p = np.array([500e-6, 10e-6, 90e-6])
        field = tm.static_field(chip, v, p)
        delta = 1e-9
        for ax in range(3):
            dp = np.zeros(3)
            dp[ax] = delta
            fd = (tm.total_potential(chip, v, p + dp)
                  - tm.total_potential(chip, v, p - dp)) / (2 * delta)
            assert field[ax] == pytest.approx(-fd, rel=1e-6, abs=1e-6)


class TestTotalPotential:
    def test_zero_voltages_zero_everywhere(self):
        chip = tm.default_layout()
        v = np.zeros(len(chip.electrodes))
        p = np.array([400e-6, 0.0, 100e-6])
        assert tm.total_potential(chip, v, p) == 0.0
        assert np.allclose(tm.static_field(chip, v, p), 0.0)

    def test_superposition_of_two_electrodes(self):
        chip = tm.default_layout()
        p = np.array([550e-6, -30e-6, 120e-6])
        v = np.zeros(len(chip.electrodes))
        v[chip.position_of("dc5t")] = 2.5
        v[chip.position_of("dc6b")] = -1.5
        single_a = 2.5 * tm.electrode_basis_potential(chip.electrode("dc5t"), p)
        single_b = -1.5 * tm.electrode_basis_potential(chip.electrode("dc6b"), p)
        assert tm.total_potential(chip, v, p) == pytest.approx(
            single_a + single_b, rel=1e-12
        )

    @given(scale=st.floats(min_value=-10, max_value=10, allow_nan=False))
    @settings(max_examples=25, deadline=None)
    def test_linearity_in_voltages(self, scale):
        chip = tm.default_layout()
        rng = np.random.default_rng(2)
        v = rng.uniform(-3, 3, len(chip.electrodes))
        p = np.array([700e-6, 20e-6, 95e-6])
        base = tm.total_potential(chip, v, p)
        assert tm.total_potential(chip, scale * v, p) == pytest.approx(
            scale * base, rel=1e-9, abs=1e-12
        )

    def test_voltage_length_mismatch(self):
        chip = tm.default_layout()
        with pytest.raises(ValueError):
            tm.total_potential(chip, np.zeros(3), [0, 0, 1e-4])

    def test_symmetric_voltages_null_transverse_field(self):
        chip = tm.default_layout()
        v = np.zeros(len(chip.electrodes))
        for i in range(1, 12):
            v[chip.position_of(f"dc{i}t")] = 1.0 + 0.1 * i
            v[chip.position_of(f"dc{i}b")] = 1.0 + 0.1 * i
        p = np.array([chip.dc_center(6), 0.0, 110e-6])
        field = tm.static_field(chip, v, p)
        assert abs(field[1]) < 1e-9


class TestLayout:
    def test_default_chip_separation_invariant(self):
        chip = tm.default_layout()
        assert chip.dc_center(9) - chip.dc_center(7) == pytest.approx(220e-6, abs=1e-9)

    def test_exactly_one_rotation_rail_each(self):
        chip = tm.default_layout()
        assert len(chip.role_names(tm.Role.ROTATION_A)) == 1
        assert len(chip.role_names(tm.Role.ROTATION_B)) == 1

    def test_overlapping_same_role_rejected(self):
        a = tm.Electrode("a", 1, tm.Role.DC, (0, 100e-6), (0, 50e-6))
        b = tm.Electrode("b", 2, tm.Role.DC, (50e-6, 150e-6), (25e-6, 75e-6))
        rails = [
            tm.Electrode("rotA", 0, tm.Role.ROTATION_A, (0, 1e-3), (0, 20e-6)),
            tm.Electrode("rotB", 0, tm.Role.ROTATION_B, (0, 1e-3), (-20e-6, 0)),
        ]
        with pytest.raises(ValueError, match="overlap"):
            tm.ChipLayout((a, b, *rails), dc_pitch=100e-6, ion_height=100e-6)

    def test_degenerate_extent_rejected(self):
        with pytest.raises(ValueError):
            tm.Electrode("bad", 1, tm.Role.DC, (1e-4, 1e-4), (0, 1e-4))

    def test_rf_null_height_near_design_value(self):
        chip = tm.default_layout()
        z0 = tm.rf_null_height(chip, chip.dc_center(8))
        # sqrt(80 um * 125 um) = 100 um for infinite rails; finite rails shift it
        assert 90e-6 < z0 < 110e-6

    def test_defect_descriptor_invariants(self):
        with pytest.raises(ValueError):
            tm.DefectDescriptor((0, 0, 1e-6), (0.0, 40e-6), 65e-6, 1e-16, 5.6)
        with pytest.raises(ValueError):
            tm.DefectDescriptor((0, 0, 1e-6), (65e-6, 40e-6), -1e-6, 1e-16, 5.6)
        with pytest.raises(ValueError):
            tm.DefectDescriptor((0, 0, 1e-6), (65e-6, 40e-6), 65e-6, 1e-16, 0.0)
