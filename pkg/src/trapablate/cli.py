"""Batch command-line entry points.

Exit codes: 0 success, 1 domain error (message on stderr), 2 usage error.
The default scenario path can be set via the TRAPABLATE_SCENARIO
environment variable; every numeric output is deterministic per seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np


def _add_common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    if scenario:
        p.add_argument("--scenario", default=os.environ.get("TRAPABLATE_SCENARIO"),
                       help="scenario JSON path (default: $TRAPABLATE_SCENARIO)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def _load(args) -> "object":
    from .scenario import load_scenario

    if not args.scenario:
        raise SystemExit2("--scenario is required (or set TRAPABLATE_SCENARIO)")
    return load_scenario(args.scenario)


class SystemExit2(Exception):
    """Usage-level error discovered after argparse."""


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trapablate",
                                     description="surface-trap ablation campaign toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fluence-map", help="fluence on the chip plane at a power setting")
    _add_common(p)
    p.add_argument("--power", type=float, required=True)
    p.add_argument("--grid", type=float, default=10e-6, help="sample spacing, metres")

    p = sub.add_parser("safety-check", help="exposure verdict against material thresholds")
    _add_common(p)
    p.add_argument("--power", type=float, required=True)

    p = sub.add_parser("schedule-check", help="thermal relaxation check of a pulse plan")
    _add_common(p)
    p.add_argument("--delay", type=float, required=True, help="interpulse delay, seconds")
    p.add_argument("--length", type=float, help="thermal length, metres (default scenario)")
    p.add_argument("--alpha", type=float, help="diffusivity, m^2/s (default scenario)")
    p.add_argument("--margin", type=float, help="relaxation margin (default scenario)")

    p = sub.add_parser("waveform", help="synthesize the shuttling waveform")
    _add_common(p)
    p.add_argument("--start", type=int, help="start electrode index (default scenario)")
    p.add_argument("--end", type=int, help="end electrode index (default scenario)")
    p.add_argument("--step", type=float, help="step size, metres (default scenario)")
    p.add_argument("--rotation-offset", type=float, default=0.0,
                   help="differential rotation-rail volts applied to every frame")

    p = sub.add_parser("compensation-profile", help="micromotion compensation along the span")
    _add_common(p)
    p.add_argument("--post-ablation", action="store_true",
                   help="use the crater charge instead of the pre-ablation charge")
    p.add_argument("--waveform", help="replay an exported waveform JSON instead of synthesizing")

    p = sub.add_parser("height-scan", help="simulate a guide-laser height scan and estimate")
    _add_common(p)
    p.add_argument("--z-min", type=float, default=-40e-6)
    p.add_argument("--z-max", type=float, default=140e-6)
    p.add_argument("--samples", type=int, default=721)
    p.add_argument("--noise", type=float, default=0.02, help="noise as a fraction of peak")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("stats", help="binomial upper bound from trial counts")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--failures", type=int, required=True)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = sub.add_parser("campaign", help="campaign tools")
    csub = p.add_subparsers(dest="campaign_command", required=True)
    pr = csub.add_parser("run", help="run a command script and write the event log")
    pr.add_argument("script", help="script JSON: {seed, commands: [...]}")
    _add_common(pr)
    pr.add_argument("--seed", type=int, help="override the script's seed")
    pp = csub.add_parser("replay", help="verify an event log reproduces")
    pp.add_argument("log", help="event log (JSON lines)")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--scenario", default=os.environ.get("TRAPABLATE_SCENARIO"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--console", help="directory with the built console bundle to serve at /")

    return parser


def _cmd_fluence_map(args) -> int:
    from . import beamoptics
    scn = _load(args)
    fluence = beamoptics.percent_to_fluence(scn.calibration, args.power)
    energy = beamoptics.pulse_energy_for_fluence(fluence, scn.beam)
    samples, grazing = beamoptics.chip_exposure_profile(
        scn.beam, energy, scn.chip.bounding_box(), grid_spacing=args.grid
    )
    if grazing:
        print("note: beam axis intersects the chip plane", file=sys.stderr)
    if args.format == "json":
        doc = {"power_percent": args.power, "pulse_energy_j": energy,
               "samples": [{"x_m": s.position[0], "y_m": s.position[1],
                            "fluence_j_cm2": s.fluence} for s in samples]}
        _write(json.dumps(doc), args.out)
    else:
        _write(beamoptics.exposure_csv(samples), args.out)
    return 0


def _cmd_safety_check(args) -> int:
    from .ablation import safety_check
    scn = _load(args)
    report = safety_check(scn, args.power)
    _write(report.to_json() if args.format == "json" else report.to_text(), args.out)
    return 0


def _cmd_schedule_check(args) -> int:
    from .ablation import PulsePlan, ThermalModel, validate_schedule
    scn = _load(args) if args.scenario else None
    thermal = ThermalModel(
        diffusivity=args.alpha or (scn.thermal.diffusivity if scn else 1.3e-4),
        characteristic_length=args.length or (scn.thermal.characteristic_length if scn else 100e-6),
        relaxation_margin=args.margin or (scn.thermal.relaxation_margin if scn else 10.0),
    )
    plan = PulsePlan(((100.0, 1),), interpulse_delay=args.delay)
    violations = validate_schedule(plan, thermal)
    if args.format == "json":
        _write(json.dumps({"ok": not violations, "violations": [str(v) for v in violations]}),
               args.out)
    else:
        _write("ok" if not violations else "\n".join(str(v) for v in violations), args.out)
    return 0


def _cmd_waveform(args) -> int:
    from . import transport
    from .scenario import target_curvature
    scn = _load(args)
    start = scn.chip.dc_center(args.start or scn.transport_plan.start_electrode)
    end = scn.chip.dc_center(args.end or scn.transport_plan.end_electrode)
    step = args.step or scn.transport_plan.step_size
    wf = transport.synthesize_waveform(scn.chip, start, end, step, scn.solver,
                                       curvature=target_curvature(scn))
    if args.rotation_offset:
        wf = transport.apply_rotation_offset(wf, args.rotation_offset, scn.chip)
    _write(wf.to_json() if args.format == "json" else wf.to_csv(), args.out)
    return 0


def _cmd_compensation_profile(args) -> int:
    from . import micromotion, transport
    from .scenario import target_curvature
    scn = _load(args)
    if args.waveform:
        wf = transport.Waveform.from_json(Path(args.waveform).read_text())
    else:
        start, end = scn.transport_span()
        wf = transport.synthesize_waveform(scn.chip, start, end,
                                           scn.transport_plan.step_size,
                                           scn.solver, curvature=target_curvature(scn))
    src = scn.stray_source(cleared=args.post_ablation)
    profile = micromotion.compensation_profile(
        scn.chip, scn.ion, scn.rf, src, wf.positions,
        voltage_bound=scn.compensation_voltage_bound,
    )
    if args.format == "json":
        doc = [{"axial_position_m": r.axial_position, "field_v_per_m": r.compensation_field,
                "voltage_v": r.compensation_voltage,
                "residual_beta": r.residual_modulation_index, "bounded": r.bounded}
               for r in profile]
        _write(json.dumps(doc), args.out)
    else:
        _write(micromotion.profile_csv(profile), args.out)
    return 0


def _cmd_height_scan(args) -> int:
    from . import beamoptics, metrology
    scn = _load(args)
    waist = beamoptics.focused_waist(scn.beam)
    heights = np.linspace(args.z_min, args.z_max, args.samples)
    peak = float(metrology.scan_signal(scn.defect.height, waist,
                                       np.array([scn.defect.height / 2]))[0])
    trace = metrology.simulate_height_scan(scn.defect.height, waist, heights,
                                           noise_sigma=args.noise * peak, seed=args.seed)
    est, unc = metrology.estimate_height(trace)
    if args.format == "json":
        _write(json.dumps({"estimate_m": est, "uncertainty_m": unc,
                           "true_height_m": scn.defect.height}), args.out)
    else:
        _write(trace.to_csv() + f"# estimate_um,{est * 1e6!r},uncertainty_um,{unc * 1e6!r}\n",
               args.out)
    return 0


def _cmd_stats(args) -> int:
    from .metrology import TrialRecord, clopper_pearson_upper, zero_failure_upper_bound
    if args.failures == 0:
        bound = zero_failure_upper_bound(TrialRecord(args.trials, 0, args.confidence))
    else:
        bound = clopper_pearson_upper(args.trials, args.failures, args.confidence)
    if args.format == "json":
        print(json.dumps({
            "n_trials": args.trials,
            "n_failures": args.failures,
            "confidence": args.confidence,
            "failure_rate_upper_bound": bound,
        }))
    else:
        print(f"{bound:.3e}")
    return 0


def _cmd_campaign(args) -> int:
    from . import campaign
    if args.campaign_command == "run":
        scn = _load(args)
        script = json.loads(Path(args.script).read_text())
        if args.seed is not None:
            script["seed"] = args.seed
        engine = campaign.run_script(scn, script)
        text = campaign.serialize_log(engine)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    state = campaign.replay(Path(args.log))
    print(json.dumps({"replay": "ok", "final_state": state}))
    return 0


def _cmd_serve(args) -> int:
    from . import server
    from .campaign import CampaignEngine
    from .scenario import load_scenario
    if not args.scenario:
        raise SystemExit2("--scenario is required (or set TRAPABLATE_SCENARIO)")
    engine = CampaignEngine(load_scenario(args.scenario), seed=args.seed)
    server.serve(engine, port=args.port, host=args.host, static_dir=args.console)
    return 0


_HANDLERS = {
    "fluence-map": _cmd_fluence_map,
    "safety-check": _cmd_safety_check,
    "schedule-check": _cmd_schedule_check,
    "waveform": _cmd_waveform,
    "compensation-profile": _cmd_compensation_profile,
    "height-scan": _cmd_height_scan,
    "stats": _cmd_stats,
    "campaign": _cmd_campaign,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # domain errors -> exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
