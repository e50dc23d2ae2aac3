"""Ablation-threshold data, exposure safety verdicts, thermally-constrained
pulse scheduling, and the threshold model for defect removal."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .trapmodel import DefectDescriptor

GOLD_DIFFUSIVITY = 1.3e-4  # m^2/s


class UnknownMaterialError(KeyError):
    pass


@dataclass(frozen=True)
class MaterialThreshold:
    """Representative single-pulse ablation fluence threshold range, J/cm^2."""

    material: str
    threshold_range: tuple[float, float]
    pulse_regime_note: str = ""

    def __post_init__(self) -> None:
        lo, hi = self.threshold_range
        if not 0 < lo <= hi:
            raise ValueError("threshold range must satisfy 0 < min <= max")

    @property
    def minimum(self) -> float:
        return self.threshold_range[0]


def default_material_table() -> dict[str, MaterialThreshold]:
    """Bulk-metal nanosecond-pulse threshold ranges used for safety margins."""
    table = [
        MaterialThreshold("Au", (1.0, 4.0), "5-10 ns pulses, bulk gold"),
        MaterialThreshold("Al", (2.0, 8.0), "5-10 ns pulses, bulk aluminium"),
        MaterialThreshold("Steel", (0.1, 0.3), "5 ns pulses, bulk stainless steel"),
    ]
    return {m.material: m for m in table}


@dataclass(frozen=True)
class ThermalModel:
    diffusivity: float = GOLD_DIFFUSIVITY
    characteristic_length: float = 100e-6
    relaxation_margin: float = 10.0

    def __post_init__(self) -> None:
        if self.diffusivity <= 0:
            raise ValueError("diffusivity must be > 0")
        if self.characteristic_length <= 0:
            raise ValueError("characteristic_length must be > 0")
        if self.relaxation_margin < 1:
            raise ValueError("relaxation_margin must be >= 1")


@dataclass(frozen=True)
class PulsePlan:
    """Burst list with a common interpulse delay.

    A zero delay is constructible so that :func:`validate_schedule` can
    report it as a violation; every valid schedule has a positive delay.
    """

    bursts: tuple[tuple[float, int], ...]
    interpulse_delay: float = 0.200

    def __post_init__(self) -> None:
        if self.interpulse_delay < 0:
            raise ValueError("interpulse_delay must be >= 0")
        if any(count < 1 for _, count in self.bursts):
            raise ValueError("pulse counts must be >= 1")


@dataclass(frozen=True)
class SurfaceExposure:
    surface_id: str
    max_fluence: float
    threshold_min: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class ExposureReport:
    entries: tuple[SurfaceExposure, ...]
    safety_factor: float
    power_percent: float
    pulse_energy: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "power_percent": self.power_percent,
            "pulse_energy_j": self.pulse_energy,
            "safety_factor": self.safety_factor,
            "passed": self.passed,
            "surfaces": [
                {
                    "surface_id": e.surface_id,
                    "max_fluence_j_cm2": e.max_fluence,
                    "threshold_min_j_cm2": e.threshold_min,
                    "margin": e.margin,
                    "passed": e.passed,
                }
                for e in self.entries
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = [
            f"exposure report at {self.power_percent:.0f}% "
            f"(pulse energy {self.pulse_energy * 1e6:.1f} uJ, "
            f"required margin {self.safety_factor:g})"
        ]
        for e in self.entries:
            verdict = "pass" if e.passed else "FAIL"
            margin = "inf" if e.margin == float("inf") else f"{e.margin:.3g}"
            lines.append(
                f"  {e.surface_id}: max fluence {e.max_fluence:.3g} J/cm^2, "
                f"threshold {e.threshold_min:.3g} J/cm^2, margin {margin} -> {verdict}"
            )
        lines.append("verdict: " + ("pass" if self.passed else "FAIL"))
        return "\n".join(lines)


@dataclass(frozen=True)
class DefectState:
    """Removal progress of a particulate defect; CLEARED is absorbing."""

    descriptor: DefectDescriptor
    cleared: bool = False

    @property
    def remaining_height(self) -> float:
        return 0.0 if self.cleared else self.descriptor.height

    @property
    def scattering_cross_section(self) -> float:
        if self.cleared:
            return 0.0
        return self.descriptor.footprint[0] * self.descriptor.footprint[1]


def thermal_relaxation_time(length: float, diffusivity: float) -> float:
    """Characteristic diffusion time L^2 / alpha, seconds."""
    if diffusivity <= 0:
        raise ValueError("diffusivity must be > 0")
    if length < 0:
        raise ValueError("length must be >= 0")
    return length * length / diffusivity


@dataclass(frozen=True)
class ScheduleViolation:
    burst_index: int
    interpulse_delay: float
    required_delay: float

    def __str__(self) -> str:
        return (
            f"burst {self.burst_index}: interpulse delay {self.interpulse_delay * 1e3:.3g} ms "
            f"< required {self.required_delay * 1e3:.3g} ms"
        )


def validate_schedule(plan: PulsePlan, thermal: ThermalModel) -> list[ScheduleViolation]:
    """Empty list iff the interpulse delay leaves the chip thermally relaxed."""
    required = thermal.relaxation_margin * thermal_relaxation_time(
        thermal.characteristic_length, thermal.diffusivity
    )
    if plan.interpulse_delay >= required:
        return []
    return [
        ScheduleViolation(i, plan.interpulse_delay, required)
        for i in range(max(len(plan.bursts), 1))
    ]


def safety_check(scenario, power_percent: float, beam=None) -> ExposureReport:
    """Compare the surface exposure at a given power against material thresholds.

    Deterministic verdict per surface: pass iff threshold_min / max_fluence
    is at least the configured safety factor.  ``beam`` overrides the
    scenario's default aim (operator alignment offsets).
    """
    from . import beamoptics

    if beam is None:
        beam = scenario.beam
    if power_percent == 0:
        energy = 0.0  # no pulse; below the calibrated attenuator range
    else:
        fluence = beamoptics.percent_to_fluence(scenario.calibration, power_percent)
        energy = beamoptics.pulse_energy_for_fluence(fluence, beam)
    entries = []
    for surface in scenario.surfaces:
        try:
            threshold = scenario.materials[surface.material]
        except KeyError:
            raise UnknownMaterialError(
                f"surface {surface.surface_id}: unknown material {surface.material!r}"
            ) from None
        samples, _ = beamoptics.chip_exposure_profile(
            beam, energy, surface.region, grid_spacing=scenario.exposure_grid
        )
        fmax = beamoptics.max_surface_fluence(samples)
        margin = float("inf") if fmax == 0 else threshold.minimum / fmax
        entries.append(
            SurfaceExposure(
                surface_id=surface.surface_id,
                max_fluence=fmax,
                threshold_min=threshold.minimum,
                margin=margin,
                passed=margin >= scenario.safety_factor,
            )
        )
    return ExposureReport(
        entries=tuple(entries),
        safety_factor=scenario.safety_factor,
        power_percent=power_percent,
        pulse_energy=energy,
    )


def apply_pulse(state: DefectState, fluence_at_defect: float) -> DefectState:
    """Threshold removal model: one pulse at or above threshold clears the defect."""
    if fluence_at_defect < 0:
        raise ValueError("fluence must be >= 0")
    if state.cleared:
        return state
    if fluence_at_defect >= state.descriptor.ablation_threshold:
        return replace(state, cleared=True)
    return state
