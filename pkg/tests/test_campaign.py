import json

import numpy as np
import pytest

from trapablate import campaign
from trapablate.ablation import safety_check
from trapablate.campaign import CampaignEngine, CorruptLogError
from tests.conftest import GOLDEN_LOG


def fresh_engine(golden_scenario, seed=1):
    return CampaignEngine(golden_scenario, seed=seed)


def arm(engine):
    accepted, _ = engine.handle({"type": "align", "dx": 0.0, "dz": 60e-6})
    assert accepted
    assert engine.state["phase"] == "ARMED"


class TestPhaseMachine:
    def test_initial_state(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        assert engine.state["phase"] == "ALIGNING"
        assert engine.state["scattering_cross_section_m2"] > 0

    def test_fire_rejected_while_aligning(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        accepted, events = engine.handle({"type": "fire_burst", "count": 1})
        assert not accepted
        assert events[0]["payload"]["reason"].startswith("fire_burst not permitted")
        assert engine.state["phase"] == "ALIGNING"

    def test_align_off_target_stays_aligning(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        engine.handle({"type": "align", "dx": 500e-6, "dz": 60e-6})
        assert engine.state["phase"] == "ALIGNING"
        arm(engine)

    def test_commands_rejected_without_scenario(self):
        engine = CampaignEngine(None, seed=0)
        accepted, events = engine.handle({"type": "set_power", "percent": 50})
        assert not accepted
        assert events[0]["payload"]["reason"] == "no scenario loaded"

    def test_unknown_command_rejected(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        accepted, _ = engine.handle({"type": "warp_drive"})
        assert not accepted

    def test_power_outside_calibration_rejected(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        accepted, _ = engine.handle({"type": "set_power", "percent": 95})
        assert not accepted


class TestFiring:
    def test_fire_at_80_clears_and_kills_scattering(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        arm(engine)
        engine.handle({"type": "set_power", "percent": 80})
        accepted, events = engine.handle({"type": "fire_burst", "count": 1})
        assert accepted
        kinds = [e["kind"] for e in events]
        assert "defect_cleared" in kinds
        assert engine.state["phase"] == "CLEARED"
        assert engine.state["scattering_cross_section_m2"] == 0.0

    def test_below_threshold_keeps_defect(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        arm(engine)
        engine.handle({"type": "set_power", "percent": 60})
        engine.handle({"type": "fire_burst", "count": 5})
        assert not engine.state["defect_cleared"]
        assert engine.state["phase"] == "ARMED"

    def test_clock_advances_200ms_per_pulse(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        arm(engine)
        engine.handle({"type": "set_power", "percent": 10})
        t0 = engine.state["clock_s"]
        engine.handle({"type": "fire_burst", "count": 4})
        assert engine.state["clock_s"] == pytest.approx(t0 + 4 * 0.2)
        pulses = [e for e in engine.events if e["kind"] == "pulse_fired"]
        times = [e["t"] for e in pulses]
        assert np.all(np.diff(times) >= 0.2 - 1e-12)

    def test_interlock_refuses_grazing_beam(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        # beam height inside the defect box keeps it armed but close to the
        # surface: 1 um height floods the chip plane with fluence
        engine.handle({"type": "align", "dx": 0.0, "dz": 1e-6})
        assert engine.state["phase"] == "ARMED"
        engine.handle({"type": "set_power", "percent": 80})
        accepted, events = engine.handle({"type": "fire_burst", "count": 1})
        assert accepted  # command accepted, burst refused by the interlock
        kinds = [e["kind"] for e in events]
        assert "interlock_refused" in kinds
        assert "pulse_fired" not in kinds
        assert not events[-1]["payload"]["exposure_report"]["passed"]

    def test_firing_in_cleared_phase_is_noop(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        arm(engine)
        engine.handle({"type": "set_power", "percent": 80})
        engine.handle({"type": "fire_burst", "count": 1})
        assert engine.state["phase"] == "CLEARED"
        accepted, events = engine.handle({"type": "fire_burst", "count": 2})
        assert accepted
        assert engine.state["phase"] == "CLEARED"
        assert all(e["payload"].get("cleared", True) for e in events
                   if e["kind"] == "pulse_fired")


class TestVerifyTransport:
    def test_blocked_before_ablation(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        arm(engine)
        _, events = engine.handle({"type": "verify_transport", "n_trials": 300})
        done = next(e for e in events if e["kind"] == "transport_verified")
        assert done["payload"]["n_failures"] == 300
        assert done["payload"]["success_rate_upper_bound"] == pytest.approx(9.94e-3, abs=1e-5)

    def test_clear_after_ablation(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        arm(engine)
        engine.handle({"type": "set_power", "percent": 80})
        engine.handle({"type": "fire_burst", "count": 1})
        _, events = engine.handle({"type": "verify_transport", "n_trials": 22500})
        done = next(e for e in events if e["kind"] == "transport_verified")
        assert done["payload"]["n_failures"] == 0
        assert done["payload"]["error_rate_upper_bound"] == pytest.approx(1.331e-4, abs=1e-7)
        assert done["payload"]["n_frames"] == 75


class TestScan:
    def test_scan_sees_defect_then_nothing(self, golden_scenario):
        engine = fresh_engine(golden_scenario)
        arm(engine)
        _, events = engine.handle(
            {"type": "scan_height", "z_min": -40e-6, "z_max": 140e-6, "samples": 721}
        )
        est = next(e for e in events if e["kind"] == "scan_completed")["payload"]
        assert est["failure"] is None
        assert est["estimate_m"] == pytest.approx(65e-6, abs=5e-6)
        engine.handle({"type": "set_power", "percent": 80})
        engine.handle({"type": "fire_burst", "count": 1})
        _, events = engine.handle(
            {"type": "scan_height", "z_min": -40e-6, "z_max": 140e-6, "samples": 721}
        )
        est = next(e for e in events if e["kind"] == "scan_completed")["payload"]
        assert est["estimate_m"] is None
        assert est["failure"]


class TestEventLog:
    def test_seq_strictly_increasing_and_clock_monotone(self, golden_scenario,
                                                        golden_script):
        engine = campaign.run_script(golden_scenario, golden_script)
        seqs = [e["seq"] for e in engine.events]
        assert seqs == list(range(1, len(seqs) + 1))
        times = [e["t"] for e in engine.events]
        assert all(b >= a for a, b in zip(times, times[1:]))

    def test_determinism_byte_identical(self, golden_scenario, golden_script):
        log1 = campaign.serialize_log(campaign.run_script(golden_scenario, golden_script))
        log2 = campaign.serialize_log(campaign.run_script(golden_scenario, golden_script))
        assert log1 == log2

    def test_seed_changes_log(self, golden_scenario, golden_script):
        other = dict(golden_script, seed=golden_script["seed"] + 1)
        log1 = campaign.serialize_log(campaign.run_script(golden_scenario, golden_script))
        log2 = campaign.serialize_log(campaign.run_script(golden_scenario, other))
        assert log1 != log2

    def test_committed_golden_log_reproduces(self, golden_scenario, golden_script):
        engine = campaign.run_script(golden_scenario, golden_script)
        assert campaign.serialize_log(engine) == GOLDEN_LOG.read_text()


class TestReplay:
    def test_empty_log_returns_initial_state(self, golden_scenario):
        engine = CampaignEngine(golden_scenario, seed=3)
        text = campaign.serialize_log(engine)  # header only
        state = campaign.replay(text)
        assert state == engine.state

    def test_golden_session_replays_hash_equal(self, golden_scenario, golden_script):
        engine = campaign.run_script(golden_scenario, golden_script)
        state = campaign.replay(campaign.serialize_log(engine))
        assert state == engine.state
        assert state["phase"] == "CLEARED"

    def test_single_flipped_payload_byte_detected(self, golden_scenario, golden_script):
        engine = campaign.run_script(golden_scenario, golden_script)
        text = campaign.serialize_log(engine)
        lines = text.splitlines()
        # flip one digit inside a consequence event's payload
        target = next(i for i, ln in enumerate(lines) if '"kind":"pulse_fired"' in ln)
        mutated = lines[target].replace('"pulse_index":0', '"pulse_index":7', 1)
        assert mutated != lines[target]
        lines[target] = mutated
        with pytest.raises(CorruptLogError) as err:
            campaign.replay("\n".join(lines) + "\n")
        assert err.value.seq == json.loads(mutated)["seq"]

    def test_truncated_log_detected(self, golden_scenario, golden_script):
        engine = campaign.run_script(golden_scenario, golden_script)
        lines = campaign.serialize_log(engine).splitlines()
        with pytest.raises(CorruptLogError):
            campaign.replay("\n".join(lines[:-3]) + "\n")

    def test_garbage_header_detected(self):
        with pytest.raises(CorruptLogError):
            campaign.replay("not json\n")


class TestInterlockSoundness:
    def test_fuzzed_sessions_never_fire_unsafely(self, golden_scenario):
        rng = np.random.default_rng(2024)
        for trial in range(3):
            engine = fresh_engine(golden_scenario, seed=trial)
            for _ in range(40):
                roll = rng.integers(0, 5)
                if roll == 0:
                    engine.handle({"type": "align",
                                   "dx": float(rng.uniform(-50e-6, 50e-6)),
                                   "dz": float(rng.choice([1e-6, 30e-6, 60e-6]))})
                elif roll == 1:
                    engine.handle({"type": "set_power",
                                   "percent": float(rng.uniform(10, 80))})
                elif roll == 2:
                    engine.handle({"type": "fire_burst", "count": int(rng.integers(1, 3))})
                elif roll == 3:
                    engine.handle({"type": "capture_snapshot"})
                else:
                    engine.handle({"type": "align", "dx": 0.0, "dz": 60e-6})
            # reconstruct alignment at every accepted burst and re-check safety
            dx, dz = 0.0, 60e-6
            power = engine.scenario.calibration.anchors[0][0]
            for e in engine.events:
                if e["kind"] == "aligned":
                    dx, dz = e["payload"]["dx"], e["payload"]["dz"]
                elif e["kind"] == "power_set":
                    power = e["payload"]["percent"]
                elif e["kind"] == "burst_started":
                    report = safety_check(
                        engine.scenario, power,
                        beam=engine.scenario.beam_at(dx, dz),
                    )
                    assert report.passed, "burst fired with failing exposure report"
