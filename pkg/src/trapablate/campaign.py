"""Event-sourced operator campaign engine.

The authoritative record is the ordered event log: every command produces a
``command`` event (accepted or rejected) followed by its consequence
events, each stamped with a sequence number, the simulated clock, and a
hash of the state after the event.  Replay re-executes the logged commands
and verifies byte-identical regeneration, so any tampering or
nondeterminism surfaces as a corruption error naming the first divergent
sequence number.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import ablation, beamoptics, metrology, micromotion, transport
from .ablation import DefectState, PulsePlan
from .scenario import Scenario, canonical_json, load_scenario, target_curvature

PHASES = ("ALIGNING", "ARMED", "FIRING", "SCANNING", "VERIFYING", "CLEARED")

COMMAND_TYPES = (
    "set_power",
    "align",
    "fire_burst",
    "scan_height",
    "verify_transport",
    "compensation_survey",
    "capture_snapshot",
)


class CorruptLogError(RuntimeError):
    def __init__(self, seq: int, message: str):
        super().__init__(f"event log corrupt at seq {seq}: {message}")
        self.seq = seq


# synthesized waveforms are pure functions of the scenario document, so one
# process-wide cache serves every engine (live runs and replays alike)
_WAVEFORM_CACHE: dict[str, "transport.Waveform"] = {}


def state_hash(state: dict) -> str:
    return hashlib.sha256(canonical_json(state).encode()).hexdigest()


class CampaignEngine:
    """Single-writer command processor over one scenario.

    Deterministic given (scenario, seed, command sequence): the simulated
    clock replaces wall time and all randomness derives from the seed and
    the event sequence number.
    """

    def __init__(self, scenario: Scenario | None, seed: int = 0):
        self.scenario = scenario
        self.seed = int(seed)
        self.events: list[dict] = []
        self.state = self._initial_state()

    # ------------------------------------------------------------------
    # state
    # ------------------------------------------------------------------

    def _initial_state(self) -> dict:
        if self.scenario is None:
            return {"phase": None, "seq": 0, "seed": self.seed, "scenario_hash": None}
        scn = self.scenario
        return {
            "phase": "ALIGNING",
            "power_percent": scn.calibration.anchors[0][0],
            "align_dx": 0.0,
            "align_dz": scn.beam.focus_position[2],
            "defect_cleared": False,
            "scattering_cross_section_m2": DefectState(scn.defect).scattering_cross_section,
            "clock_s": 0.0,
            "seq": 0,
            "seed": self.seed,
            "scenario_hash": scn.digest,
        }

    @property
    def seq(self) -> int:
        return self.state["seq"]

    def defect_state(self) -> DefectState:
        return DefectState(self.scenario.defect, cleared=self.state["defect_cleared"])

    def header(self) -> dict:
        return {
            "log_schema": 1,
            "hash_alg": "sha256",
            "seed": self.seed,
            "scenario_hash": self.scenario.digest if self.scenario else None,
            "scenario": self.scenario.document if self.scenario else None,
        }

    # ------------------------------------------------------------------
    # event plumbing
    # ------------------------------------------------------------------

    def _emit(self, kind: str, payload: dict, out: list[dict]) -> None:
        self.state["seq"] += 1
        if self.scenario is not None:
            self.state["scattering_cross_section_m2"] = (
                self.defect_state().scattering_cross_section
            )
        event = {
            "seq": self.state["seq"],
            "t": self.state.get("clock_s", 0.0),
            "kind": kind,
            "payload": payload,
            "state_hash": state_hash(self.state),
        }
        self.events.append(event)
        out.append(event)

    def _rng(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence((self.seed, self.state["seq"] + 1))
        )

    # ------------------------------------------------------------------
    # command handling
    # ------------------------------------------------------------------

    def handle(self, command: dict) -> tuple[bool, list[dict]]:
        out: list[dict] = []
        reason = self._validate(command)
        accepted = reason is None
        self._emit(
            "command",
            {"command": command, "accepted": accepted, "reason": reason},
            out,
        )
        if accepted:
            getattr(self, "_cmd_" + command["type"])(command, out)
        return accepted, out

    def _validate(self, command: dict) -> str | None:
        if self.scenario is None:
            return "no scenario loaded"
        if not isinstance(command, dict) or "type" not in command:
            return "malformed command"
        ctype = command["type"]
        if ctype not in COMMAND_TYPES:
            return f"unknown command type {ctype!r}"
        phase = self.state["phase"]
        if ctype == "fire_burst" and phase not in ("ARMED", "CLEARED"):
            return f"fire_burst not permitted in phase {phase}"
        if ctype == "set_power":
            anchors = self.scenario.calibration.anchors
            pct = command.get("percent")
            if not isinstance(pct, (int, float)) or not anchors[0][0] <= pct <= anchors[-1][0]:
                return "power percent outside calibrated range"
        if ctype == "fire_burst":
            count = command.get("count")
            if not isinstance(count, int) or count < 1:
                return "burst count must be a positive integer"
        if ctype == "verify_transport":
            n = command.get("n_trials")
            if not isinstance(n, int) or n < 1:
                return "n_trials must be a positive integer"
        if ctype == "scan_height":
            if not (command.get("z_max", 0) > command.get("z_min", 0) >= -1e-3):
                return "scan range invalid"
            if command.get("samples", 0) < 20:
                return "need at least 20 scan samples"
        if ctype == "align":
            if "dx" not in command or "dz" not in command:
                return "align requires dx and dz"
            if command["dz"] <= 0:
                return "beam height must be positive"
        return None

    # ------------------------------------------------------------------
    # individual commands
    # ------------------------------------------------------------------

    def _cmd_set_power(self, cmd: dict, out: list[dict]) -> None:
        self.state["power_percent"] = float(cmd["percent"])
        self._emit("power_set", {"percent": float(cmd["percent"])}, out)

    def _beam_hits_defect(self) -> bool:
        d = self.scenario.defect
        dx, dz = self.state["align_dx"], self.state["align_dz"]
        return abs(dx) <= d.footprint[0] / 2 and 0 < dz <= d.height

    def _cmd_align(self, cmd: dict, out: list[dict]) -> None:
        self.state["align_dx"] = float(cmd["dx"])
        self.state["align_dz"] = float(cmd["dz"])
        on_target = self._beam_hits_defect()
        if self.state["phase"] in ("ALIGNING", "ARMED"):
            self.state["phase"] = "ARMED" if on_target else "ALIGNING"
        self._emit(
            "aligned",
            {"dx": float(cmd["dx"]), "dz": float(cmd["dz"]), "on_target": on_target},
            out,
        )

    def _fluence_on_defect(self, percent: float) -> float:
        scn = self.scenario
        fluence = beamoptics.percent_to_fluence(scn.calibration, percent)
        energy = beamoptics.pulse_energy_for_fluence(fluence, scn.beam)
        beam = scn.beam_at(self.state["align_dx"], self.state["align_dz"])
        d = scn.defect
        ax_x, _, ax_z = beam.focus_position
        px = min(max(ax_x, d.center[0] - d.footprint[0] / 2), d.center[0] + d.footprint[0] / 2)
        pz = min(max(ax_z, 1e-12), d.height)
        return float(beamoptics.fluence_at(energy, beam, (px, d.center[1], pz)))

    def _cmd_fire_burst(self, cmd: dict, out: list[dict]) -> None:
        scn = self.scenario
        pct = self.state["power_percent"]
        count = int(cmd["count"])
        beam = scn.beam_at(self.state["align_dx"], self.state["align_dz"])
        report = ablation.safety_check(scn, pct, beam=beam)
        plan = PulsePlan(((pct, count),), interpulse_delay=scn.interpulse_delay)
        violations = ablation.validate_schedule(plan, scn.thermal)
        if not report.passed or violations:
            self._emit(
                "interlock_refused",
                {
                    "exposure_report": report.to_dict(),
                    "schedule_violations": [str(v) for v in violations],
                },
                out,
            )
            return
        prev_phase = self.state["phase"]
        self.state["phase"] = "FIRING"
        fluence = self._fluence_on_defect(pct)
        self._emit(
            "burst_started",
            {
                "count": count,
                "percent": pct,
                "pulse_energy_j": report.pulse_energy,
                "fluence_on_defect_j_cm2": fluence,
            },
            out,
        )
        for i in range(count):
            self.state["clock_s"] += scn.interpulse_delay
            before = self.defect_state()
            after = ablation.apply_pulse(before, fluence)
            newly_cleared = after.cleared and not before.cleared
            self.state["defect_cleared"] = after.cleared
            self._emit(
                "pulse_fired",
                {"pulse_index": i, "fluence_j_cm2": fluence, "cleared": after.cleared},
                out,
            )
            if newly_cleared:
                self._emit("defect_cleared", {"pulse_index": i}, out)
        self.state["phase"] = "CLEARED" if self.state["defect_cleared"] else (
            "ARMED" if prev_phase in ("ARMED", "FIRING") else prev_phase
        )
        self._emit("burst_completed", {"cleared": self.state["defect_cleared"]}, out)

    def _cmd_scan_height(self, cmd: dict, out: list[dict]) -> None:
        scn = self.scenario
        prev_phase = self.state["phase"]
        self.state["phase"] = "SCANNING"
        self._emit("scan_started", {"samples": int(cmd["samples"])}, out)
        heights = np.linspace(cmd["z_min"], cmd["z_max"], int(cmd["samples"]))
        waist = beamoptics.focused_waist(scn.beam)
        h_true = self.defect_state().remaining_height
        noise_pct = float(cmd.get("noise_pct", 0.02))
        peak = (
            float(metrology.scan_signal(h_true, waist, np.array([h_true / 2.0]))[0])
            if h_true > 0
            else 0.0
        )
        rng_seed = int(self._rng().integers(0, 2**31 - 1))
        trace = metrology.simulate_height_scan(
            h_true, waist, heights, noise_sigma=noise_pct * peak, seed=rng_seed
        )
        try:
            est, unc = metrology.estimate_height(trace)
            payload = {"estimate_m": est, "uncertainty_m": unc, "failure": None}
        except metrology.EstimationError as exc:
            payload = {"estimate_m": None, "uncertainty_m": None, "failure": str(exc)}
        payload["samples"] = int(cmd["samples"])
        payload["noise_seed"] = rng_seed
        self.state["phase"] = prev_phase
        self._emit("scan_completed", payload, out)

    def waveform(self) -> transport.Waveform:
        scn = self.scenario
        if scn.digest not in _WAVEFORM_CACHE:
            start, end = scn.transport_span()
            _WAVEFORM_CACHE[scn.digest] = transport.synthesize_waveform(
                scn.chip,
                start,
                end,
                scn.transport_plan.step_size,
                scn.solver,
                curvature=target_curvature(scn),
            )
        return _WAVEFORM_CACHE[scn.digest]

    def _path_clear(self) -> bool:
        if self.state["defect_cleared"]:
            return True
        start, end = self.scenario.transport_span()
        lo, hi = min(start, end), max(start, end)
        d = self.scenario.defect
        d_lo = d.center[0] - d.footprint[0] / 2
        d_hi = d.center[0] + d.footprint[0] / 2
        return d_hi < lo or d_lo > hi

    def _cmd_verify_transport(self, cmd: dict, out: list[dict]) -> None:
        prev_phase = self.state["phase"]
        self.state["phase"] = "VERIFYING"
        self._emit("verify_started", {"n_trials": int(cmd["n_trials"])}, out)
        wf = self.waveform()
        n = int(cmd["n_trials"])
        clear = self._path_clear()
        # all-or-nothing transport: round trips succeed iff the path is clear
        failures = 0 if clear else n
        payload = {
            "n_trials": n,
            "n_failures": failures,
            "path_clear": clear,
            "n_frames": wf.n_frames,
            "confidence": 0.95,
        }
        if failures == 0:
            payload["error_rate_upper_bound"] = metrology.zero_failure_upper_bound(
                metrology.TrialRecord(n, 0, 0.95)
            )
        elif failures == n:
            payload["success_rate_upper_bound"] = metrology.zero_failure_upper_bound(
                metrology.TrialRecord(n, 0, 0.95)
            )
        else:
            payload["error_rate_upper_bound"] = metrology.clopper_pearson_upper(n, failures, 0.95)
        self.state["phase"] = prev_phase
        self._emit("transport_verified", payload, out)

    def _cmd_compensation_survey(self, cmd: dict, out: list[dict]) -> None:
        scn = self.scenario
        prev_phase = self.state["phase"]
        self.state["phase"] = "VERIFYING"
        self._emit("survey_started", {}, out)
        wf = self.waveform()
        src = scn.stray_source(self.state["defect_cleared"])
        profile = micromotion.compensation_profile(
            scn.chip, scn.ion, scn.rf, src, wf.positions,
            voltage_bound=scn.compensation_voltage_bound,
        )
        bounded = [r for r in profile if r.bounded]
        peak = max(bounded, key=lambda r: r.compensation_field) if bounded else None
        maxima = micromotion.local_field_maxima(profile)
        maxima = sorted(maxima, key=lambda r: -r.compensation_field)
        payload = {
            "n_positions": len(profile),
            "n_unbounded": sum(1 for r in profile if not r.bounded),
            "peak_field_v_per_m": peak.compensation_field if peak else None,
            "peak_voltage_v": peak.compensation_voltage if peak else None,
            "peak_position_m": peak.axial_position if peak else None,
            "next_max_field_v_per_m": (
                maxima[1].compensation_field if len(maxima) > 1 else None
            ),
            "profile": [r.row() for r in profile],
        }
        self.state["phase"] = prev_phase
        self._emit("compensation_surveyed", payload, out)

    def _cmd_capture_snapshot(self, cmd: dict, out: list[dict]) -> None:
        self._emit("snapshot", {"state": dict(self.state)}, out)


# ----------------------------------------------------------------------
# scripts, logs, replay
# ----------------------------------------------------------------------


def run_script(scenario: Scenario, script: dict) -> CampaignEngine:
    """Execute a command script: {"seed": int, "commands": [...]}."""
    engine = CampaignEngine(scenario, seed=script.get("seed", 0))
    for cmd in script["commands"]:
        engine.handle(cmd)
    return engine


def serialize_log(engine: CampaignEngine) -> str:
    lines = [canonical_json(engine.header())]
    lines += [canonical_json(e) for e in engine.events]
    return "\n".join(lines) + "\n"


def write_log(engine: CampaignEngine, path: str | Path) -> None:
    Path(path).write_text(serialize_log(engine))


def parse_log(text: str) -> tuple[dict, list[dict]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise CorruptLogError(0, "empty log (missing header)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptLogError(0, f"unreadable header: {exc}") from exc
    if header.get("log_schema") != 1:
        raise CorruptLogError(0, "unsupported log schema")
    events = []
    for i, ln in enumerate(lines[1:], start=1):
        try:
            events.append(json.loads(ln))
        except json.JSONDecodeError as exc:
            raise CorruptLogError(i, f"unreadable event line: {exc}") from exc
    return header, events


def replay(source: str | Path) -> dict:
    """Re-execute a log's commands and verify every regenerated event.

    Returns the final state; raises :class:`CorruptLogError` naming the
    first divergent sequence number when the log does not reproduce.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    else:
        text = str(source)
    header, logged = parse_log(text)
    scenario = load_scenario(header["scenario"]) if header.get("scenario") else None
    if scenario is not None and header.get("scenario_hash") != scenario.digest:
        raise CorruptLogError(0, "scenario hash does not match embedded document")
    engine = CampaignEngine(scenario, seed=header.get("seed", 0))
    regenerated: list[dict] = []
    for ev in logged:
        if ev.get("kind") == "command":
            cmd = ev["payload"]["command"]
            _, new_events = engine.handle(cmd)
            regenerated.extend(new_events)
    for i, (a, b) in enumerate(zip(logged, regenerated)):
        if canonical_json(a) != canonical_json(b):
            raise CorruptLogError(a.get("seq", i + 1), "event does not reproduce under replay")
    if len(logged) != len(regenerated):
        seq = logged[len(regenerated)]["seq"] if len(logged) > len(regenerated) else len(logged) + 1
        raise CorruptLogError(seq, "event count mismatch under replay")
    return engine.state
