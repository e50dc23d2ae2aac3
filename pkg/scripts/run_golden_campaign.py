#!/usr/bin/env python3
"""Run the golden campaign script and refresh the committed event log.

The committed log (scenarios/golden_run.jsonl) is the byte-level
determinism reference: CI reruns the script and compares byte-for-byte.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from trapablate import campaign
from trapablate.scenario import load_scenario


def main() -> int:
    scenario = load_scenario(ROOT / "scenarios" / "golden.json")
    script = json.loads((ROOT / "scenarios" / "golden_script.json").read_text())
    engine = campaign.run_script(scenario, script)
    out = ROOT / "scenarios" / "golden_run.jsonl"
    campaign.write_log(engine, out)
    print(f"wrote {out} ({len(engine.events)} events, final phase {engine.state['phase']})")
    state = campaign.replay(out)
    assert state == engine.state
    print("replay verified")
    return 0


if __name__ == "__main__":
    sys.exit(main())
