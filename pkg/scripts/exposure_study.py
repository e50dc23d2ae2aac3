#!/usr/bin/env python3
"""Beam-height exposure study on the golden scenario.

Sweeps the beam axis height at full power and reports the worst-case chip
fluence and the per-material safety margins, plus where each material's
margin would first dip below the configured safety factor. Useful when
planning how much alignment slack an ablation run can tolerate.

Run:  python3 scripts/exposure_study.py [--out exposure_study.csv]
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from trapablate import beamoptics as bo
from trapablate.ablation import safety_check
from trapablate.scenario import load_scenario


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--scenario", default=str(ROOT / "scenarios" / "golden.json"))
    parser.add_argument("--power", type=float, default=80.0)
    parser.add_argument("--heights-um", type=float, nargs=3, default=(10.0, 120.0, 23.0),
                        metavar=("MIN", "MAX", "COUNT"))
    parser.add_argument("--out", help="optional CSV output path")
    args = parser.parse_args()

    scn = load_scenario(args.scenario)
    lo, hi, count = args.heights_um
    heights = np.linspace(lo * 1e-6, hi * 1e-6, int(count))

    rows = []
    print(f"power {args.power:.0f}%  "
          f"(target fluence {bo.percent_to_fluence(scn.calibration, args.power):.2f} J/cm^2)")
    print(f"{'height_um':>10} {'chip_max_J_cm2':>15} " +
          " ".join(f"{m + '_margin':>12}" for m in scn.materials))
    for h in heights:
        beam = replace(scn.beam, focus_position=(
            scn.beam.focus_position[0], scn.beam.focus_position[1], float(h)))
        report = safety_check(scn, args.power, beam=beam)
        fmax = max(e.max_fluence for e in report.entries)
        margins = {m: t.minimum / fmax if fmax else float("inf")
                   for m, t in scn.materials.items()}
        rows.append((h, fmax, margins))
        print(f"{h * 1e6:>10.1f} {fmax:>15.3e} " +
              " ".join(f"{margins[m]:>12.3g}" for m in scn.materials))

    for material in scn.materials:
        unsafe = [h for h, _, m in rows if m[material] < scn.safety_factor]
        if unsafe:
            print(f"{material}: margin below {scn.safety_factor:g} "
                  f"for heights <= {max(unsafe) * 1e6:.1f} um")
        else:
            print(f"{material}: safe across the whole sweep")

    if args.out:
        header = "height_um,chip_max_j_cm2," + ",".join(
            f"margin_{m}" for m in scn.materials)
        lines = [header] + [
            f"{h * 1e6!r},{fmax!r}," + ",".join(repr(m[k]) for k in scn.materials)
            for h, fmax, m in rows
        ]
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
