"""Gaussian beam propagation and fluence estimation for the combined
guide/ablation beam delivered parallel to the chip surface.

Fluences are J/cm^2 throughout the public API (the unit every threshold and
calibration anchor is quoted in); lengths and energies are SI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

J_PER_M2_TO_J_PER_CM2 = 1e-4


class CalibrationRangeError(ValueError):
    """Requested power percentage outside the calibrated anchor range."""


@dataclass(frozen=True)
class BeamSpec:
    """Pulsed 532 nm ablation beam focused by the final lens.

    ``input_waist_radius`` is the 1/e^2 radius of the expanded beam entering
    the lens (the radius reading reproduces the measured off-axis chip
    fluence; a diameter reading does not).
    """

    wavelength: float = 532e-9
    pulse_duration: float = 1.5e-9
    max_pulse_energy: float = 2e-3
    input_waist_radius: float = 0.856e-3
    lens_focal_length: float = 0.150
    focus_position: tuple[float, float, float] = (0.0, 0.0, 60e-6)
    propagation_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)

    def __post_init__(self) -> None:
        for attr in ("wavelength", "pulse_duration", "max_pulse_energy",
                     "input_waist_radius", "lens_focal_length"):
            if getattr(self, attr) <= 0:
                raise ValueError(f"{attr} must be > 0")
        axis = np.asarray(self.propagation_axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0:
            raise ValueError("propagation_axis must be nonzero")
        object.__setattr__(self, "propagation_axis", tuple(axis / n))


@dataclass(frozen=True)
class PowerCalibration:
    """Monotone map from attenuator percent to fluence at the target."""

    anchors: tuple[tuple[float, float], ...] = ((10.0, 0.56), (80.0, 6.8))

    def __post_init__(self) -> None:
        pct = [a[0] for a in self.anchors]
        flu = [a[1] for a in self.anchors]
        if any(b <= a for a, b in zip(pct, pct[1:])):
            raise ValueError("calibration percents must be strictly increasing")
        if any(b <= a for a, b in zip(flu, flu[1:])):
            raise ValueError("calibration fluences must be strictly increasing")


@dataclass(frozen=True)
class FluenceSample:
    position: tuple[float, float, float]
    fluence: float  # J/cm^2

    def __post_init__(self) -> None:
        if self.fluence < 0:
            raise ValueError("fluence must be >= 0")


def focused_waist(spec: BeamSpec) -> float:
    """Diffraction-limited focus radius w0 = lambda f / (pi W), metres."""
    return spec.wavelength * spec.lens_focal_length / (np.pi * spec.input_waist_radius)


def rayleigh_range(w0: float, wavelength: float) -> float:
    return np.pi * w0 * w0 / wavelength


def beam_radius(w0: float, z: float, wavelength: float) -> float:
    """1/e^2 radius at distance z from the waist: w0 sqrt(1 + (z/zR)^2)."""
    if w0 <= 0:
        raise ValueError("w0 must be > 0")
    zr = rayleigh_range(w0, wavelength)
    return w0 * np.sqrt(1.0 + (z / zr) ** 2)


def fluence_at(pulse_energy: float, spec: BeamSpec, p) -> np.ndarray | float:
    """Single-pulse fluence (J/cm^2) of a Gaussian beam at point(s) ``p``.

    F(r, z) = (2E / pi w(z)^2) exp(-2 r^2 / w(z)^2) with r the radial offset
    from the beam axis and z the distance along it from the focus.
    """
    if pulse_energy < 0:
        raise ValueError("pulse energy must be >= 0")
    p = np.asarray(p, dtype=float)
    axis = np.asarray(spec.propagation_axis)
    rel = p - np.asarray(spec.focus_position)
    z_along = np.tensordot(rel, axis, axes=(-1, 0))
    r2 = np.sum(rel * rel, axis=-1) - z_along**2
    r2 = np.maximum(r2, 0.0)
    w0 = focused_waist(spec)
    zr = rayleigh_range(w0, spec.wavelength)
    w2 = w0 * w0 * (1.0 + (z_along / zr) ** 2)
    f = (2.0 * pulse_energy / (np.pi * w2)) * np.exp(-2.0 * r2 / w2)
    f = f * J_PER_M2_TO_J_PER_CM2
    return f if np.ndim(f) else float(f)


def peak_fluence(pulse_energy: float, spec: BeamSpec) -> float:
    """On-axis fluence at the focus, J/cm^2."""
    w0 = focused_waist(spec)
    return 2.0 * pulse_energy / (np.pi * w0 * w0) * J_PER_M2_TO_J_PER_CM2


def pulse_energy_for_fluence(target_fluence: float, spec: BeamSpec) -> float:
    """Pulse energy whose focal peak equals ``target_fluence`` (J/cm^2).

    The delivered energy is anchored to the calibrated target fluence rather
    than the laser's nameplate maximum, since losses through the pinhole and
    steering optics are not modelled.
    """
    w0 = focused_waist(spec)
    return target_fluence / J_PER_M2_TO_J_PER_CM2 * np.pi * w0 * w0 / 2.0


def percent_to_fluence(cal: PowerCalibration, pct: float) -> float:
    """Piecewise-linear interpolation of the calibration anchors, J/cm^2."""
    if len(cal.anchors) < 2:
        raise ValueError("calibration needs at least two anchors")
    pcts = np.array([a[0] for a in cal.anchors])
    flus = np.array([a[1] for a in cal.anchors])
    if pct < pcts[0] or pct > pcts[-1]:
        raise CalibrationRangeError(
            f"power {pct}% outside calibrated range [{pcts[0]}, {pcts[-1]}]"
        )
    return float(np.interp(pct, pcts, flus))


def chip_exposure_profile(
    spec: BeamSpec,
    pulse_energy: float,
    region: tuple[tuple[float, float], tuple[float, float]],
    grid_spacing: float = 10e-6,
) -> tuple[list[FluenceSample], bool]:
    """Sample the fluence on the chip plane (z = 0) over ``region``.

    Returns the samples (which include the maximum-exposure point, located
    by local refinement from the best grid point) and a flag set when the
    beam axis intersects the chip plane inside the footprint of interest.
    """
    from scipy.optimize import minimize

    (x0, x1), (y0, y1) = region
    nx = max(int(np.ceil((x1 - x0) / grid_spacing)) + 1, 2)
    ny = max(int(np.ceil((y1 - y0) / grid_spacing)) + 1, 2)
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx, gy, np.zeros_like(gx)], axis=-1)
    f = fluence_at(pulse_energy, spec, pts)

    samples = [
        FluenceSample((float(px), float(py), 0.0), float(val))
        for px, py, val in zip(gx.ravel(), gy.ravel(), np.asarray(f).ravel())
    ]

    # refine the grid maximum so the true in-region peak is in the sample set
    if pulse_energy > 0:
        i = int(np.argmax(f))
        xb, yb = gx.ravel()[i], gy.ravel()[i]
        res = minimize(
            lambda q: -fluence_at(pulse_energy, spec, np.array([q[0], q[1], 0.0])),
            x0=np.array([xb, yb]),
            bounds=[(x0, x1), (y0, y1)],
            method="L-BFGS-B",
        )
        samples.append(
            FluenceSample((float(res.x[0]), float(res.x[1]), 0.0), float(-res.fun))
        )

    axis = np.asarray(spec.propagation_axis)
    focus = np.asarray(spec.focus_position)
    grazing = False
    if abs(axis[2]) < 1e-15:
        grazing = focus[2] <= 0.0
    else:
        t = -focus[2] / axis[2]
        hit = focus + t * axis
        grazing = x0 <= hit[0] <= x1 and y0 <= hit[1] <= y1
    return samples, grazing


def max_surface_fluence(samples: list[FluenceSample]) -> float:
    return max((s.fluence for s in samples), default=0.0)


def exposure_csv(samples: list[FluenceSample]) -> str:
    lines = ["x_m,y_m,fluence_j_cm2"]
    lines += [f"{s.position[0]!r},{s.position[1]!r},{s.fluence!r}" for s in samples]
    return "\n".join(lines) + "\n"
