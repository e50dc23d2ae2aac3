import json
from pathlib import Path

import pytest

from trapablate import transport
from trapablate.scenario import load_scenario, target_curvature

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "scenarios" / "golden.json"
GOLDEN_SCRIPT = ROOT / "scenarios" / "golden_script.json"
GOLDEN_LOG = ROOT / "scenarios" / "golden_run.jsonl"


@pytest.fixture(scope="session")
def golden_scenario():
    return load_scenario(GOLDEN)


@pytest.fixture(scope="session")
def golden_script():
    return json.loads(GOLDEN_SCRIPT.read_text())


@pytest.fixture(scope="session")
def golden_waveform(golden_scenario):
    scn = golden_scenario
    start, end = scn.transport_span()
    return transport.synthesize_waveform(
        scn.chip, start, end, scn.transport_plan.step_size, scn.solver,
        curvature=target_curvature(scn),
    )
