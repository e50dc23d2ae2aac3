"""Defect-perturbed pseudopotential, photon-correlation micromotion
observables, compensation solving, and voltage-to-position Jacobians.

The defect is modelled electrically as a point charge above the grounded
chip plane together with its image charge, so the plane stays an
equipotential.  Excess micromotion follows the standard relations for an
ion pushed off the RF null by a stray field E:

    x0 = q E / (m w_sec^2)        displacement from the null
    u  = (q_mathieu / 2) x0       micromotion amplitude
    beta = |k . u|                photon-correlation modulation index
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import trapmodel
from .trapmodel import ChipLayout, DomainError, Role

COULOMB_K = 8.9875517873681764e9  # 1 / (4 pi eps0)
ELEMENTARY_CHARGE = 1.602176634e-19
YB171_MASS = 2.838e-25


class UnstableEquilibriumError(RuntimeError):
    """Equilibrium search ended at a non-positive-definite Hessian."""


@dataclass(frozen=True)
class IonSpecies:
    mass: float = YB171_MASS
    charge: float = ELEMENTARY_CHARGE
    cooling_wavelength: float = 369e-9
    cooling_angle: float = np.pi / 4  # in-plane, relative to the rail axis

    def __post_init__(self) -> None:
        if self.mass <= 0 or self.charge <= 0:
            raise ValueError("ion mass and charge must be > 0")

    @property
    def cooling_k(self) -> np.ndarray:
        """Cooling-laser wavevector, rad/m, parallel to the chip plane."""
        k = 2 * np.pi / self.cooling_wavelength
        return k * np.array([np.cos(self.cooling_angle), np.sin(self.cooling_angle), 0.0])


@dataclass(frozen=True)
class RFDrive:
    omega: float = 2 * np.pi * 20e6
    voltage: float = 0.0  # RF rail amplitude, volts; calibrated per scenario
    secular_frequency: float = 2 * np.pi * 1e6

    def __post_init__(self) -> None:
        if not self.omega > self.secular_frequency > 0:
            raise ValueError("require omega > secular_frequency > 0")

    @property
    def mathieu_q(self) -> float:
        return 2 * np.sqrt(2) * self.secular_frequency / self.omega


@dataclass(frozen=True)
class StrayFieldSource:
    """Point charge at the defect centre height with grounded-plane image."""

    charge: float
    position: tuple[float, float, float]

    def __post_init__(self) -> None:
        if self.position[2] <= 0:
            raise ValueError("source charge must sit above the chip plane")


@dataclass(frozen=True)
class CompensationResult:
    axial_position: float
    compensation_field: float | None  # V/m, in-plane magnitude applied
    compensation_voltage: float | None  # volts on the RotationA rail (B gets -V)
    residual_modulation_index: float | None
    bounded: bool

    def row(self) -> list:
        return [
            self.axial_position,
            self.compensation_field,
            self.compensation_voltage,
            self.residual_modulation_index,
            self.bounded,
        ]


def stray_field(src: StrayFieldSource, p) -> np.ndarray:
    """Coulomb field of the source charge plus its image, V/m, for z > 0."""
    p = np.asarray(p, dtype=float)
    if np.any(p[..., 2] <= 0):
        raise DomainError("stray field defined only above the chip plane (z > 0)")
    pos = np.asarray(src.position)
    mirror = pos * np.array([1.0, 1.0, -1.0])
    d1 = p - pos
    d2 = p - mirror
    r1 = np.linalg.norm(d1, axis=-1, keepdims=True)
    if np.any(r1 == 0):
        raise DomainError("stray field evaluated at the charge location")
    r2 = np.linalg.norm(d2, axis=-1, keepdims=True)
    return COULOMB_K * src.charge * (d1 / r1**3 - d2 / r2**3)


def stray_potential(src: StrayFieldSource, p) -> np.ndarray | float:
    p = np.asarray(p, dtype=float)
    if np.any(p[..., 2] <= 0):
        raise DomainError("stray potential defined only above the chip plane (z > 0)")
    pos = np.asarray(src.position)
    mirror = pos * np.array([1.0, 1.0, -1.0])
    r1 = np.linalg.norm(p - pos, axis=-1)
    r2 = np.linalg.norm(p - mirror, axis=-1)
    val = COULOMB_K * src.charge * (1.0 / r1 - 1.0 / r2)
    return val if np.ndim(val) else float(val)


def stray_displacement(ion: IonSpecies, rf: RFDrive, e_inplane) -> np.ndarray | float:
    """Displacement from the RF null for a stray field, q E / (m w_sec^2)."""
    return np.asarray(e_inplane) * ion.charge / (ion.mass * rf.secular_frequency**2)


def excess_micromotion_amplitude(ion: IonSpecies, rf: RFDrive, e_inplane) -> np.ndarray | float:
    """Micromotion amplitude (q_mathieu / 2) * displacement; linear in E."""
    u = 0.5 * rf.mathieu_q * stray_displacement(ion, rf, e_inplane)
    return u if np.ndim(u) else float(u)


def modulation_index(ion: IonSpecies, u_vector) -> float:
    """Magnitude of the micromotion projection on the cooling wavevector."""
    return float(abs(np.dot(ion.cooling_k, np.asarray(u_vector, dtype=float))))


class PotentialModel:
    """Total potential energy surface seen by the ion.

    Combines static DC electrode potentials, the optional stray source, and
    the time-averaged pseudopotential q^2 |E_rf|^2 / (4 m Omega^2).  First
    derivatives are analytic; higher derivatives use 1 nm central
    differences of the analytic gradients.
    """

    def __init__(
        self,
        chip: ChipLayout,
        ion: IonSpecies,
        rf: RFDrive,
        dc_voltages: np.ndarray,
        stray: StrayFieldSource | None = None,
    ):
        self.chip = chip
        self.ion = ion
        self.rf = rf
        self.dc_voltages = np.asarray(dc_voltages, dtype=float)
        self.stray = stray
        self._psi_scale = ion.charge**2 * rf.voltage**2 / (4 * ion.mass * rf.omega**2)

    # line searches may probe below the chip plane; a stiff quadratic wall
    # under Z_FLOOR keeps the energy surface defined and pushes back up
    Z_FLOOR = 1e-6
    WALL = 1e-8  # J/m^2, orders stiffer than any trap curvature here

    def _guard(self, p) -> tuple[np.ndarray, float, float]:
        p = np.asarray(p, dtype=float)
        if p[2] >= self.Z_FLOOR:
            return p, 0.0, 0.0
        depth = self.Z_FLOOR - p[2]
        safe = p.copy()
        safe[2] = self.Z_FLOOR
        return safe, 0.5 * self.WALL * depth * depth, -self.WALL * depth

    def pseudopotential(self, p) -> float:
        g = trapmodel.rf_basis_field(self.chip, p)  # per unit RF volt
        return self._psi_scale * float(np.dot(g, g))

    def total_energy(self, p) -> float:
        p, wall_e, _ = self._guard(p)
        u = self.ion.charge * trapmodel.total_potential(self.chip, self.dc_voltages, p)
        if self.stray is not None and self.stray.charge != 0.0:
            u += self.ion.charge * stray_potential(self.stray, p)
        return float(u) + self.pseudopotential(p) + wall_e

    def energy_gradient(self, p, h: float = 1e-9) -> np.ndarray:
        p, _, wall_g = self._guard(p)
        grad = self.ion.charge * -trapmodel.static_field(self.chip, self.dc_voltages, p)
        if self.stray is not None and self.stray.charge != 0.0:
            grad = grad + self.ion.charge * -stray_field(self.stray, p)
        # pseudopotential gradient via central difference of |E_rf|^2
        dpsi = np.zeros(3)
        for ax in range(3):
            dp = np.zeros(3)
            dp[ax] = h
            gp = trapmodel.rf_basis_field(self.chip, p + dp)
            gm = trapmodel.rf_basis_field(self.chip, p - dp)
            dpsi[ax] = (np.dot(gp, gp) - np.dot(gm, gm)) / (2 * h)
        out = grad + self._psi_scale * dpsi
        out[2] += wall_g
        return out

    def energy_hessian(self, p, h: float = 1e-9) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        H = np.zeros((3, 3))
        for ax in range(3):
            dp = np.zeros(3)
            dp[ax] = h
            H[:, ax] = (self.energy_gradient(p + dp) - self.energy_gradient(p - dp)) / (2 * h)
        return 0.5 * (H + H.T)

    def equilibrium(self, p0, tol: float | None = None) -> np.ndarray:
        """Trust-region Newton descent to the local energy minimum from p0."""
        from scipy.optimize import minimize

        if tol is None:
            # residual field of 1 mV/m: sub-picometre positioning for any
            # confining curvature here, and safely above the numeric floor
            # of the differenced pseudopotential gradient
            tol = self.ion.charge * 1e-3
        res = minimize(
            self.total_energy,
            np.asarray(p0, dtype=float),
            jac=lambda p: self.energy_gradient(p),
            hess=lambda p: self.energy_hessian(p),
            method="trust-exact",
            options={"gtol": tol, "maxiter": 200},
        )
        p = res.x
        if np.linalg.norm(self.energy_gradient(p)) > 10 * tol:
            raise UnstableEquilibriumError("equilibrium search did not converge")
        H = self.energy_hessian(p)
        if np.any(np.linalg.eigvalsh(H) <= 0):
            raise UnstableEquilibriumError("equilibrium Hessian is not positive definite")
        return p


def rotation_pair_field(chip: ChipLayout, p) -> np.ndarray:
    """Field at p per +1 V on RotationA and -1 V on RotationB, V/m."""
    g = np.zeros(3)
    for name in chip.role_names(Role.ROTATION_A):
        g = g - trapmodel.electrode_basis_gradient(chip.electrode(name), p)
    for name in chip.role_names(Role.ROTATION_B):
        g = g + trapmodel.electrode_basis_gradient(chip.electrode(name), p)
    return g


def solve_compensation(
    chip: ChipLayout,
    ion: IonSpecies,
    rf: RFDrive,
    src: StrayFieldSource | None,
    axial_position: float,
    voltage_bound: float = 2.0,
    null_tolerance: float = 1e-3,
) -> CompensationResult:
    """Null the in-plane modulation index with the rotation-rail pair.

    A 1-D bracketing root solve over the differential rail voltage finds the
    zero of the projected in-plane field at the nominal RF-null point of
    this axial position.  No sign change within the voltage bound reports an
    unbounded-compensation entry (the regime where the ion is lost).
    """
    from scipy.optimize import brentq

    z0 = trapmodel.rf_null_height(chip, axial_position)
    pt = np.array([axial_position, 0.0, z0])
    k_hat = ion.cooling_k / np.linalg.norm(ion.cooling_k)

    g = rotation_pair_field(chip, pt)
    g_ip = g.copy()
    g_ip[2] = 0.0
    if abs(float(np.dot(k_hat, g_ip))) < 1e-9 * max(np.linalg.norm(g), 1.0):
        raise ValueError("compensation electrodes have no in-plane authority here")

    if src is None or src.charge == 0.0:
        return CompensationResult(axial_position, 0.0, 0.0, 0.0, bounded=True)

    e_stray = stray_field(src, pt)

    def beta_of(u: float) -> float:
        e = e_stray + u * g
        e_ip = np.array([e[0], e[1], 0.0])
        return modulation_index(ion, excess_micromotion_amplitude(ion, rf, e_ip))

    def proj(u: float) -> float:
        e = e_stray + u * g
        return float(np.dot(k_hat, np.array([e[0], e[1], 0.0])))

    beta_un = beta_of(0.0)
    if proj(-voltage_bound) * proj(voltage_bound) > 0:
        return CompensationResult(axial_position, None, None, None, bounded=False)

    u_star = float(brentq(proj, -voltage_bound, voltage_bound, xtol=1e-14))
    beta_res = beta_of(u_star)
    if beta_un > 0 and beta_res > null_tolerance * beta_un:
        return CompensationResult(axial_position, None, None, beta_res, bounded=False)
    applied = abs(u_star) * float(np.linalg.norm(g_ip))
    return CompensationResult(axial_position, applied, u_star, beta_res, bounded=True)


def compensation_profile(
    chip: ChipLayout,
    ion: IonSpecies,
    rf: RFDrive,
    src: StrayFieldSource | None,
    positions,
    voltage_bound: float = 2.0,
) -> list[CompensationResult]:
    """One compensation solve per axial position along a trajectory."""
    return [
        solve_compensation(chip, ion, rf, src, float(x), voltage_bound=voltage_bound)
        for x in np.asarray(positions, dtype=float)
    ]


def approach_quadratic_fit(
    profile: list[CompensationResult], defect_x: float
) -> tuple[float, float, float]:
    """Fit field = c0 + c2 (x - x_d)^2 over the bounded approach region.

    The approach region runs from the first frame to the last bounded frame
    before the first unbounded one.  Returns (c0, c2, R^2).
    """
    fields = []
    xs = []
    for r in profile:
        if not r.bounded:
            break
        xs.append(r.axial_position)
        fields.append(r.compensation_field)
    if len(xs) < 3:
        raise ValueError("approach region too short to fit")
    xs = np.array(xs)
    y = np.array(fields)
    basis = np.stack([np.ones_like(xs), (xs - defect_x) ** 2], axis=-1)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = y - basis @ coef
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def local_field_maxima(profile: list[CompensationResult]) -> list[CompensationResult]:
    """Bounded profile entries that are strict local maxima of the field."""
    vals = [r.compensation_field if r.bounded else -np.inf for r in profile]
    out = []
    for i in range(1, len(vals) - 1):
        if vals[i] > vals[i - 1] and vals[i] > vals[i + 1]:
            out.append(profile[i])
    return out


def profile_csv(profile: list[CompensationResult]) -> str:
    lines = ["axial_position_um,field_v_per_m,voltage_v,residual_beta,bounded"]
    for r in profile:
        f = "" if r.compensation_field is None else repr(r.compensation_field)
        v = "" if r.compensation_voltage is None else repr(r.compensation_voltage)
        b = "" if r.residual_modulation_index is None else repr(r.residual_modulation_index)
        lines.append(f"{r.axial_position * 1e6!r},{f},{v},{b},{int(r.bounded)}")
    return "\n".join(lines) + "\n"


def voltage_to_position_jacobian(
    chip: ChipLayout,
    ion: IonSpecies,
    rf: RFDrive,
    dc_voltages: np.ndarray,
    electrodes: list[str],
    p0,
    stray: StrayFieldSource | None = None,
    step: float = 1e-3,
) -> np.ndarray:
    """d(equilibrium position)/d(electrode voltage), metres per volt.

    Central finite difference of the re-minimized equilibrium with a 1 mV
    default step; one column per requested electrode.
    """
    dc_voltages = np.asarray(dc_voltages, dtype=float)
    base = PotentialModel(chip, ion, rf, dc_voltages, stray).equilibrium(p0)
    cols = []
    for name in electrodes:
        i = chip.position_of(name)
        vp = dc_voltages.copy()
        vp[i] += step
        vm = dc_voltages.copy()
        vm[i] -= step
        pp = PotentialModel(chip, ion, rf, vp, stray).equilibrium(base)
        pm = PotentialModel(chip, ion, rf, vm, stray).equilibrium(base)
        cols.append((pp - pm) / (2 * step))
    return np.stack(cols, axis=-1)
