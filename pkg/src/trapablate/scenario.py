"""Scenario documents: JSON schema, validation, and construction of the
typed configuration objects every other module consumes.

All lengths, energies, and voltages are SI; fluences are J/cm^2 (the unit
thresholds and calibration anchors are quoted in); angles are degrees.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from . import beamoptics, trapmodel
from .ablation import MaterialThreshold, ThermalModel
from .beamoptics import BeamSpec, PowerCalibration
from .micromotion import IonSpecies, RFDrive, StrayFieldSource
from .transport import SolverConfig
from .trapmodel import ChipLayout, DefectDescriptor


class ScenarioError(ValueError):
    pass


_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}
_triple = {"type": "array", "items": _number, "minItems": 3, "maxItems": 3}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["chip", "beam", "calibration", "materials", "defect", "ion", "rf",
                 "solver", "transport", "ablation"],
    "properties": {
        "chip": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_dc", "dc_pitch", "dc_row_y", "rf_rail_y",
                         "rotation_halfwidth", "ion_height"],
            "properties": {
                "n_dc": {"type": "integer", "minimum": 3},
                "dc_pitch": _positive,
                "dc_row_y": _pair,
                "rf_rail_y": _pair,
                "rotation_halfwidth": _positive,
                "ion_height": _positive,
                "x_origin": _number,
                "rail_margin": _positive,
            },
        },
        "beam": {
            "type": "object",
            "additionalProperties": False,
            "required": ["wavelength", "pulse_duration", "max_pulse_energy",
                         "input_waist_radius", "lens_focal_length", "focus_height"],
            "properties": {
                "wavelength": _positive,
                "pulse_duration": _positive,
                "max_pulse_energy": _positive,
                "input_waist_radius": _positive,
                "lens_focal_length": _positive,
                "focus_height": _positive,
                "propagation_axis": _triple,
            },
        },
        "calibration": {
            "type": "object",
            "additionalProperties": False,
            "required": ["anchors"],
            "properties": {
                "anchors": {"type": "array", "items": _pair, "minItems": 2},
            },
        },
        "materials": {
            "type": "object",
            "additionalProperties": False,
            "required": ["thresholds", "surfaces"],
            "properties": {
                "thresholds": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["material", "range"],
                        "properties": {
                            "material": {"type": "string"},
                            "range": _pair,
                            "note": {"type": "string"},
                        },
                    },
                },
                "surfaces": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["id", "material"],
                        "properties": {
                            "id": {"type": "string"},
                            "material": {"type": "string"},
                            "region": {
                                "type": "array", "items": _pair,
                                "minItems": 2, "maxItems": 2,
                            },
                        },
                    },
                },
                "safety_factor": _positive,
                "exposure_grid": _positive,
            },
        },
        "defect": {
            "type": "object",
            "additionalProperties": False,
            "required": ["center", "footprint", "height", "charge",
                         "crater_charge", "ablation_threshold"],
            "properties": {
                "center": _triple,
                "footprint": _pair,
                "height": _positive,
                "charge": _number,
                "crater_charge": _number,
                "ablation_threshold": _positive,
            },
        },
        "ion": {
            "type": "object",
            "additionalProperties": False,
            "required": ["mass", "charge", "cooling_wavelength", "cooling_angle_deg"],
            "properties": {
                "mass": _positive,
                "charge": _positive,
                "cooling_wavelength": _positive,
                "cooling_angle_deg": _number,
            },
        },
        "rf": {
            "type": "object",
            "additionalProperties": False,
            "required": ["omega", "voltage", "secular_frequency"],
            "properties": {
                "omega": _positive,
                "voltage": _positive,
                "secular_frequency": _positive,
                "compensation_voltage_bound": _positive,
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "v_max": {"type": "number", "minimum": 0},
                "smoothness_weight": {"type": "number", "minimum": 0},
                "field_weight": {"type": "number", "minimum": 0},
                "curvature_weight": {"type": "number", "minimum": 0},
                "field_scale": _positive,
                "convergence_tolerance": _positive,
                "max_iterations": {"type": "integer", "minimum": 1},
                "position_tolerance": _positive,
                "target_axial_curvature": _positive,
            },
        },
        "transport": {
            "type": "object",
            "additionalProperties": False,
            "required": ["start_electrode", "end_electrode", "step_size"],
            "properties": {
                "start_electrode": {"type": "integer", "minimum": 1},
                "end_electrode": {"type": "integer", "minimum": 1},
                "step_size": _positive,
            },
        },
        "ablation": {
            "type": "object",
            "additionalProperties": False,
            "required": ["interpulse_delay"],
            "properties": {
                "interpulse_delay": _positive,
                "thermal": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "diffusivity": _positive,
                        "characteristic_length": _positive,
                        "relaxation_margin": {"type": "number", "minimum": 1},
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class Surface:
    surface_id: str
    material: str
    region: tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class TransportPlan:
    start_electrode: int
    end_electrode: int
    step_size: float


@dataclass(frozen=True)
class Scenario:
    chip: ChipLayout
    beam: BeamSpec
    calibration: PowerCalibration
    materials: dict[str, MaterialThreshold]
    surfaces: tuple[Surface, ...]
    safety_factor: float
    exposure_grid: float
    defect: DefectDescriptor
    ion: IonSpecies
    rf: RFDrive
    solver: SolverConfig
    transport_plan: TransportPlan
    thermal: ThermalModel
    interpulse_delay: float
    compensation_voltage_bound: float
    document: dict
    digest: str

    def beam_at(self, dx: float = 0.0, dz: float | None = None) -> BeamSpec:
        """Beam spec with the focus aimed at the defect plus alignment offsets."""
        from dataclasses import replace

        cx, cy, _ = self.defect.center
        height = self.beam.focus_position[2] if dz is None else dz
        return replace(self.beam, focus_position=(cx + dx, cy, height))

    def stray_source(self, cleared: bool) -> StrayFieldSource | None:
        q = self.defect.crater_charge if cleared else self.defect.charge
        if q == 0.0:
            return None
        return StrayFieldSource(q, self.defect.center)

    def transport_span(self) -> tuple[float, float]:
        return (
            self.chip.dc_center(self.transport_plan.start_electrode),
            self.chip.dc_center(self.transport_plan.end_electrode),
        )


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def document_hash(doc: dict) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def load_scenario(source: str | Path | dict) -> Scenario:
    """Validate a scenario document and build the typed configuration.

    Unknown keys are rejected by the schema before any computation runs.
    """
    if isinstance(source, (str, Path)):
        with open(source) as f:
            doc = json.load(f)
    else:
        doc = source
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ScenarioError(f"scenario document invalid: {exc.message}") from exc

    c = doc["chip"]
    chip = trapmodel.default_layout(
        n_dc=c["n_dc"],
        dc_pitch=c["dc_pitch"],
        dc_row_y=tuple(c["dc_row_y"]),
        rf_rail_y=tuple(c["rf_rail_y"]),
        rotation_halfwidth=c["rotation_halfwidth"],
        ion_height=c["ion_height"],
        x_origin=c.get("x_origin", 0.0),
        rail_margin=c.get("rail_margin", 200e-6),
    )

    d = doc["defect"]
    defect = DefectDescriptor(
        center=tuple(d["center"]),
        footprint=tuple(d["footprint"]),
        height=d["height"],
        charge=d["charge"],
        crater_charge=d["crater_charge"],
        ablation_threshold=d["ablation_threshold"],
    )

    b = doc["beam"]
    beam = BeamSpec(
        wavelength=b["wavelength"],
        pulse_duration=b["pulse_duration"],
        max_pulse_energy=b["max_pulse_energy"],
        input_waist_radius=b["input_waist_radius"],
        lens_focal_length=b["lens_focal_length"],
        focus_position=(defect.center[0], defect.center[1], b["focus_height"]),
        propagation_axis=tuple(b.get("propagation_axis", (0.0, 1.0, 0.0))),
    )

    calibration = PowerCalibration(tuple(tuple(a) for a in doc["calibration"]["anchors"]))

    m = doc["materials"]
    materials = {
        t["material"]: MaterialThreshold(t["material"], tuple(t["range"]), t.get("note", ""))
        for t in m["thresholds"]
    }
    bbox = chip.bounding_box()
    surfaces = tuple(
        Surface(
            surface_id=s["id"],
            material=s["material"],
            region=tuple(tuple(r) for r in s["region"]) if "region" in s else bbox,
        )
        for s in m["surfaces"]
    )

    i = doc["ion"]
    ion = IonSpecies(
        mass=i["mass"],
        charge=i["charge"],
        cooling_wavelength=i["cooling_wavelength"],
        cooling_angle=i["cooling_angle_deg"] * 3.141592653589793 / 180.0,
    )

    r = doc["rf"]
    rf = RFDrive(omega=r["omega"], voltage=r["voltage"], secular_frequency=r["secular_frequency"])

    s = doc.get("solver", {})
    solver = SolverConfig(
        v_max=s.get("v_max", 10.0),
        smoothness_weight=s.get("smoothness_weight", 1e-3),
        field_weight=s.get("field_weight", 1.0),
        curvature_weight=s.get("curvature_weight", 30.0),
        field_scale=s.get("field_scale", 10.0),
        convergence_tolerance=s.get("convergence_tolerance", 1e-10),
        max_iterations=s.get("max_iterations", 200),
        position_tolerance=s.get("position_tolerance", 0.1e-6),
    )

    t = doc["transport"]
    plan = TransportPlan(t["start_electrode"], t["end_electrode"], t["step_size"])

    a = doc["ablation"]
    th = a.get("thermal", {})
    thermal = ThermalModel(
        diffusivity=th.get("diffusivity", 1.3e-4),
        characteristic_length=th.get("characteristic_length", 100e-6),
        relaxation_margin=th.get("relaxation_margin", 10.0),
    )

    return Scenario(
        chip=chip,
        beam=beam,
        calibration=calibration,
        materials=materials,
        surfaces=surfaces,
        safety_factor=m.get("safety_factor", 10.0),
        exposure_grid=m.get("exposure_grid", 10e-6),
        defect=defect,
        ion=ion,
        rf=rf,
        solver=solver,
        transport_plan=plan,
        thermal=thermal,
        interpulse_delay=a["interpulse_delay"],
        compensation_voltage_bound=r.get("compensation_voltage_bound", 2.0),
        document=doc,
        digest=document_hash(doc),
    )


def target_curvature(scn: Scenario) -> float:
    doc_solver = scn.document.get("solver", {})
    if "target_axial_curvature" in doc_solver:
        return doc_solver["target_axial_curvature"]
    return scn.ion.mass * scn.rf.secular_frequency**2 / scn.ion.charge


def golden_scenario_path() -> Path:
    return Path(__file__).resolve().parents[2] / "scenarios" / "golden.json"
