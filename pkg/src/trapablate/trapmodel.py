"""Surface-electrode chip geometry and analytic electrostatic basis functions.

The chip is modelled as a grounded plane at z = 0 containing rectangular
electrodes (gapless approximation).  Each electrode held at 1 V contributes
the half-space Dirichlet solution

    phi(r) = (1 / 2 pi) * integral over the rectangle of z / |r - r'|^3,

which evaluates to a four-corner arctangent sum (the solid angle subtended
by the rectangle).  All lengths are metres, potentials are per applied volt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

TWO_PI = 2.0 * np.pi


class DomainError(ValueError):
    """Evaluation point outside the validity half-space (z <= 0)."""


class Role(str, Enum):
    DC = "dc"
    RF = "rf"
    ROTATION_A = "rotation_a"
    ROTATION_B = "rotation_b"


@dataclass(frozen=True)
class Electrode:
    """Rectangular electrode patch in the chip plane.

    ``index`` follows the chip's sequential numbering away from the central
    gap (shared by mirrored partners across the channel); ``name`` is unique.
    """

    name: str
    index: int
    role: Role
    x_extent: tuple[float, float]
    y_extent: tuple[float, float]

    def __post_init__(self) -> None:
        if not self.x_extent[0] < self.x_extent[1]:
            raise ValueError(f"electrode {self.name}: x_extent must satisfy min < max")
        if not self.y_extent[0] < self.y_extent[1]:
            raise ValueError(f"electrode {self.name}: y_extent must satisfy min < max")

    @property
    def center(self) -> tuple[float, float]:
        return (
            0.5 * (self.x_extent[0] + self.x_extent[1]),
            0.5 * (self.y_extent[0] + self.y_extent[1]),
        )

    def overlaps(self, other: "Electrode") -> bool:
        ax, bx = self.x_extent, other.x_extent
        ay, by = self.y_extent, other.y_extent
        return ax[0] < bx[1] and bx[0] < ax[1] and ay[0] < by[1] and by[0] < ay[1]


@dataclass(frozen=True)
class DefectDescriptor:
    """Transport-blocking particulate: footprint, height, charge model."""

    center: tuple[float, float, float]
    footprint: tuple[float, float]  # axial x transverse extents
    height: float
    charge: float  # pre-ablation model charge, coulombs
    ablation_threshold: float  # J/cm^2
    crater_charge: float = 0.0  # residual model charge after removal

    def __post_init__(self) -> None:
        if self.footprint[0] <= 0 or self.footprint[1] <= 0:
            raise ValueError("defect footprint extents must be > 0")
        if self.height <= 0:
            raise ValueError("defect height must be > 0")
        if self.ablation_threshold <= 0:
            raise ValueError("defect ablation_threshold must be > 0")


@dataclass(frozen=True)
class ChipLayout:
    electrodes: tuple[Electrode, ...]
    dc_pitch: float
    ion_height: float
    _by_name: dict = field(init=False, repr=False, compare=False, hash=False, default=None)

    def __post_init__(self) -> None:
        rot_a = [e for e in self.electrodes if e.role is Role.ROTATION_A]
        rot_b = [e for e in self.electrodes if e.role is Role.ROTATION_B]
        if len(rot_a) != 1 or len(rot_b) != 1:
            raise ValueError("layout must contain exactly one RotationA and one RotationB rail")
        names = [e.name for e in self.electrodes]
        if len(set(names)) != len(names):
            raise ValueError("electrode names must be unique")
        for i, a in enumerate(self.electrodes):
            for b in self.electrodes[i + 1 :]:
                if a.role is b.role and a.overlaps(b):
                    raise ValueError(f"electrodes {a.name} and {b.name} of role {a.role} overlap")
        object.__setattr__(self, "_by_name", {e.name: i for i, e in enumerate(self.electrodes)})

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.electrodes]

    def electrode(self, name: str) -> Electrode:
        return self.electrodes[self._by_name[name]]

    def position_of(self, name: str) -> int:
        return self._by_name[name]

    def dc_names(self) -> list[str]:
        return [e.name for e in self.electrodes if e.role is Role.DC]

    def role_names(self, role: Role) -> list[str]:
        return [e.name for e in self.electrodes if e.role is role]

    def dc_center(self, index: int) -> float:
        """Axial centre of the DC electrode pair carrying a given index."""
        xs = [e.center[0] for e in self.electrodes if e.role is Role.DC and e.index == index]
        if not xs:
            raise KeyError(f"no DC electrode with index {index}")
        return float(np.mean(xs))

    def bounding_box(self) -> tuple[tuple[float, float], tuple[float, float]]:
        xs = [x for e in self.electrodes for x in e.x_extent]
        ys = [y for e in self.electrodes for y in e.y_extent]
        return (min(xs), max(xs)), (min(ys), max(ys))


def default_layout(
    n_dc: int = 11,
    dc_pitch: float = 110e-6,
    dc_row_y: tuple[float, float] = (25e-6, 76e-6),
    rf_rail_y: tuple[float, float] = (80e-6, 125e-6),
    rotation_halfwidth: float = 21.912e-6,
    ion_height: float = 100e-6,
    x_origin: float = 0.0,
    rail_margin: float = 2e-3,
) -> ChipLayout:
    """Build the default segmented surface trap layout.

    DC segments sit inboard of the RF rails (close enough to the ion that a
    ~1 MHz axial well stays inside a +-10 V budget) and are numbered 1..n_dc
    away from the central gap at ``x_origin``; mirrored segments across the
    channel share the index.  RF rail extents satisfy
    sqrt(y_in * y_out) = ion_height so the RF null sits near the requested
    height over the channel centre line.
    """
    electrodes: list[Electrode] = []
    for i in range(1, n_dc + 1):
        x0 = x_origin + (i - 1) * dc_pitch
        x1 = x0 + dc_pitch
        electrodes.append(Electrode(f"dc{i}t", i, Role.DC, (x0, x1), dc_row_y))
        electrodes.append(Electrode(f"dc{i}b", i, Role.DC, (x0, x1), (-dc_row_y[1], -dc_row_y[0])))
    x_rail = (x_origin - rail_margin, x_origin + n_dc * dc_pitch + rail_margin)
    electrodes.append(Electrode("rf+", 0, Role.RF, x_rail, rf_rail_y))
    electrodes.append(Electrode("rf-", 0, Role.RF, x_rail, (-rf_rail_y[1], -rf_rail_y[0])))
    electrodes.append(Electrode("rotA", 0, Role.ROTATION_A, x_rail, (0.0, rotation_halfwidth)))
    electrodes.append(Electrode("rotB", 0, Role.ROTATION_B, x_rail, (-rotation_halfwidth, 0.0)))
    return ChipLayout(tuple(electrodes), dc_pitch=dc_pitch, ion_height=ion_height)


def _check_half_space(z: np.ndarray) -> None:
    if np.any(np.asarray(z) <= 0.0):
        raise DomainError("evaluation point must lie strictly above the chip plane (z > 0)")


def electrode_basis_potential(e: Electrode, p) -> np.ndarray | float:
    """Potential per applied volt of one rectangle at point(s) ``p``.

    Parameters
    ----------
    e : Electrode
    p : array_like, shape (..., 3)

    Returns
    -------
    Dimensionless potential in [0, 1]; scalar for a single point.
    """
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    _check_half_space(z)
    (x1, x2), (y1, y2) = e.x_extent, e.y_extent

    def corner(xe, ye):
        X = xe - x
        Y = ye - y
        return np.arctan2(X * Y, z * np.sqrt(X * X + Y * Y + z * z))

    val = (corner(x2, y2) - corner(x1, y2) - corner(x2, y1) + corner(x1, y1)) / TWO_PI
    return val if val.ndim else float(val)


def electrode_basis_gradient(e: Electrode, p) -> np.ndarray:
    """Analytic gradient of :func:`electrode_basis_potential`, shape (..., 3)."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    _check_half_space(z)
    (x1, x2), (y1, y2) = e.x_extent, e.y_extent

    gx = np.zeros_like(x)
    gy = np.zeros_like(x)
    gz = np.zeros_like(x)
    for xe, sx in ((x2, 1.0), (x1, -1.0)):
        for ye, sy in ((y2, 1.0), (y1, -1.0)):
            s = sx * sy
            X = xe - x
            Y = ye - y
            X2z = X * X + z * z
            Y2z = Y * Y + z * z
            R = np.sqrt(X * X + Y * Y + z * z)
            # d/dX arctan(XY / zR) = zY / (R (X^2+z^2)); chain dX/dx = -1
            gx += s * (-z * Y / (R * X2z))
            gy += s * (-z * X / (R * Y2z))
            gz += s * (-X * Y * (R * R + z * z) / (R * X2z * Y2z))
    return np.stack([gx, gy, gz], axis=-1) / TWO_PI


def basis_matrix(chip: ChipLayout, pts) -> np.ndarray:
    """Stack of basis potentials, shape (n_electrodes, ...)."""
    pts = np.asarray(pts, dtype=float)
    return np.stack([electrode_basis_potential(e, pts) for e in chip.electrodes])


def total_potential(chip: ChipLayout, voltages, p) -> np.ndarray | float:
    """Superposition sum V_i * basis_i(p), volts."""
    voltages = np.asarray(voltages, dtype=float)
    if voltages.shape != (len(chip.electrodes),):
        raise ValueError(
            f"expected {len(chip.electrodes)} voltages, got shape {voltages.shape}"
        )
    vals = np.tensordot(voltages, basis_matrix(chip, p), axes=(0, 0))
    return vals if np.ndim(vals) else float(vals)


def static_field(chip: ChipLayout, voltages, p) -> np.ndarray:
    """Static electric field -grad(phi), V/m, from the analytic gradient."""
    voltages = np.asarray(voltages, dtype=float)
    if voltages.shape != (len(chip.electrodes),):
        raise ValueError(
            f"expected {len(chip.electrodes)} voltages, got shape {voltages.shape}"
        )
    grads = np.stack([electrode_basis_gradient(e, p) for e in chip.electrodes])
    return -np.tensordot(voltages, grads, axes=(0, 0))


_D2_STEP = 1e-9  # central-difference step for second derivatives, metres


def basis_hessian_column(e: Electrode, p, axis: int, h: float = _D2_STEP) -> np.ndarray:
    """d(grad phi)/d(axis) by central difference of the analytic gradient."""
    p = np.asarray(p, dtype=float)
    dp = np.zeros(3)
    dp[axis] = h
    return (electrode_basis_gradient(e, p + dp) - electrode_basis_gradient(e, p - dp)) / (2 * h)


def basis_axial_curvature(e: Electrode, p) -> float:
    """d2(phi)/dx2 per applied volt at p."""
    return float(basis_hessian_column(e, p, axis=0)[..., 0])


def rf_basis_field(chip: ChipLayout, p) -> np.ndarray:
    """Field of the RF rails held at +1 V (quasistatic amplitude), V/m."""
    rails = [e for e in chip.electrodes if e.role is Role.RF]
    if not rails:
        raise ValueError("layout has no RF rails")
    return -sum(electrode_basis_gradient(e, p) for e in rails)


def rf_null_height(chip: ChipLayout, x: float, z_bracket: tuple[float, float] | None = None) -> float:
    """Height of the RF null above the channel centre line at axial position x.

    On the y = 0 symmetry plane the RF field is purely vertical, so the null
    is the sign change of its z component.
    """
    from scipy.optimize import brentq

    if z_bracket is None:
        z_bracket = (0.3 * chip.ion_height, 3.0 * chip.ion_height)

    def ez(z: float) -> float:
        return float(rf_basis_field(chip, np.array([x, 0.0, z]))[2])

    return float(brentq(ez, z_bracket[0], z_bracket[1], xtol=1e-12))
