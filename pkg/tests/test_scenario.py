import copy
import json

import pytest

from trapablate.scenario import (
    ScenarioError,
    canonical_json,
    document_hash,
    load_scenario,
)
from tests.conftest import GOLDEN


@pytest.fixture()
def golden_doc():
    return json.loads(GOLDEN.read_text())


class TestSchemaValidation:
    def test_golden_document_validates(self, golden_doc):
        scn = load_scenario(golden_doc)
        assert scn.digest == document_hash(golden_doc)

    def test_unknown_top_level_key_rejected(self, golden_doc):
        golden_doc["extras"] = {}
        with pytest.raises(ScenarioError, match="invalid"):
            load_scenario(golden_doc)

    def test_unknown_nested_key_rejected(self, golden_doc):
        golden_doc["beam"]["color"] = "green"
        with pytest.raises(ScenarioError):
            load_scenario(golden_doc)

    def test_missing_block_rejected(self, golden_doc):
        del golden_doc["defect"]
        with pytest.raises(ScenarioError):
            load_scenario(golden_doc)

    def test_wrong_type_rejected(self, golden_doc):
        golden_doc["rf"]["voltage"] = "loud"
        with pytest.raises(ScenarioError):
            load_scenario(golden_doc)


class TestScenarioObjects:
    def test_chip_and_defect_geometry(self, golden_scenario):
        scn = golden_scenario
        assert scn.chip.dc_center(9) - scn.chip.dc_center(7) == pytest.approx(220e-6, abs=1e-9)
        # defect sits at the shared edge of electrodes 7 and 8
        assert scn.defect.center[0] == pytest.approx(
            scn.chip.electrode("dc7t").x_extent[1], abs=1e-12
        )
        assert scn.defect.ablation_threshold == 5.6

    def test_beam_aimed_at_defect(self, golden_scenario):
        scn = golden_scenario
        assert scn.beam.focus_position[0] == scn.defect.center[0]
        assert scn.beam.focus_position[1] == scn.defect.center[1]
        assert scn.beam.focus_position[2] == pytest.approx(60e-6)
        # parallel to the chip plane: no component along the chip normal
        assert abs(scn.beam.propagation_axis[2]) < 1e-9
        offset = scn.beam_at(dx=5e-6, dz=70e-6)
        assert offset.focus_position[0] == pytest.approx(scn.defect.center[0] + 5e-6)
        assert offset.focus_position[2] == pytest.approx(70e-6)

    def test_material_table(self, golden_scenario):
        assert golden_scenario.materials["Au"].threshold_range == (1.0, 4.0)
        assert golden_scenario.surfaces[0].material == "Au"
        assert golden_scenario.safety_factor == 10.0

    def test_stray_sources(self, golden_scenario):
        pre = golden_scenario.stray_source(cleared=False)
        post = golden_scenario.stray_source(cleared=True)
        assert pre.charge > post.charge > 0
        assert pre.position == golden_scenario.defect.center

    def test_transport_span(self, golden_scenario):
        start, end = golden_scenario.transport_span()
        assert end - start == pytest.approx(220e-6, abs=1e-9)


class TestCanonicalHashing:
    def test_key_order_independent(self, golden_doc):
        shuffled = dict(reversed(list(golden_doc.items())))
        assert document_hash(shuffled) == document_hash(golden_doc)

    def test_value_sensitivity(self, golden_doc):
        altered = copy.deepcopy(golden_doc)
        altered["rf"]["voltage"] += 1e-9
        assert document_hash(altered) != document_hash(golden_doc)

    def test_canonical_json_compact(self):
        assert canonical_json({"b": 1, "a": [1.5, 2]}) == '{"a":[1.5,2],"b":1}'
