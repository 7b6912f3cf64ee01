import copy

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from ptnsim.errors import ScenarioError
from ptnsim.scenario import (
    dump_scenario,
    load_scenario,
    read_scenario_text,
    serialize,
    shipped_scenarios,
    validate_scenario,
)


@pytest.fixture
def relay_doc():
    return yaml.safe_load(read_scenario_text("relay_n3"))


def violations_of(doc):
    with pytest.raises(ScenarioError) as info:
        validate_scenario(doc)
    return info.value.violations


def test_shipped_scenarios():
    assert shipped_scenarios() == ["demo_fleet", "relay_n3"]


def test_fixture_is_valid():
    cfg = load_scenario("relay_n3")
    assert cfg.satellite_ids == ["C1", "C2", "C3"]
    assert cfg.pair_under_test == ("ogs-a", "ogs-b")
    assert cfg.master_seed == 7 and cfg.horizon_s == 86400
    assert cfg.adversary.compromised == frozenset({"C1", "C2"})
    assert cfg.satellite("C3").spec.uplink_beacon_nm == 1064


def test_defaults_applied(relay_doc):
    del relay_doc["master_seed"]
    del relay_doc["channel"]
    del relay_doc["adversary"]
    cfg = validate_scenario(relay_doc)
    assert cfg.master_seed == 0
    assert cfg.adversary.compromised == frozenset()
    assert cfg.channel.wavelength_nm == 785.0
    assert cfg.satellite("C1").protocol.qber_abort_threshold == 0.11


def test_load_by_path(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(read_scenario_text("relay_n3"))
    assert load_scenario(p) == load_scenario("relay_n3")


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("no/such/file.yaml")


def test_negative_altitude_names_field(relay_doc):
    relay_doc["satellites"][0]["orbit"]["altitude_km"] = -1
    v = violations_of(relay_doc)
    assert len(v) == 1
    assert "OrbitSpec.altitude_km" in v[0] and v[0].startswith("satellites[0].orbit")


def test_unknown_compromised_id(relay_doc):
    relay_doc["adversary"]["compromised"] = ["C1", "C9"]
    v = violations_of(relay_doc)
    assert v == ["adversary.compromised: unknown satellite id 'C9'"]


def test_missing_pair_under_test(relay_doc):
    del relay_doc["pair_under_test"]
    v = violations_of(relay_doc)
    assert any("pair_under_test" in m for m in v)


def test_violations_are_exhaustive(relay_doc):
    relay_doc["satellites"][0]["orbit"]["altitude_km"] = -1
    relay_doc["satellites"][1]["spec"]["quantum_wavelength_nm"] = 2000
    relay_doc["ogs"][0]["site"]["latitude_deg"] = 95
    relay_doc["horizon_s"] = 0
    relay_doc["channel"]["detector_efficiency"] = 2
    relay_doc["adversary"]["compromised"] = ["X"]
    relay_doc["bogus"] = 1
    v = violations_of(relay_doc)
    joined = "\n".join(v)
    for needle in ("altitude_km", "quantum_wavelength_nm", "latitude_deg", "horizon_s",
                   "detector_efficiency", "'X'", "'bogus'"):
        assert needle in joined
    assert len(v) == 7


def test_pair_must_reference_known_ogs(relay_doc):
    relay_doc["pair_under_test"] = ["ogs-a", "ogs-z"]
    assert violations_of(relay_doc) == ["pair_under_test: unknown OGS id 'ogs-z'"]


def test_pair_must_differ(relay_doc):
    relay_doc["pair_under_test"] = ["ogs-a", "ogs-a"]
    assert any("must differ" in m for m in violations_of(relay_doc))


def test_duplicate_ids(relay_doc):
    relay_doc["satellites"][1]["id"] = "C1"
    assert any("duplicate" in m for m in violations_of(relay_doc))


def test_no_satellites(relay_doc):
    relay_doc["satellites"] = []
    relay_doc["adversary"]["compromised"] = []
    assert any("at least one satellite" in m for m in violations_of(relay_doc))


def test_not_a_mapping():
    assert violations_of([1, 2]) == ["expected a mapping, got list"]


def test_uplink_required_without_wavelength(relay_doc):
    del relay_doc["satellites"][2]["spec"]["uplink_beacon_nm"]
    assert any("uplink_beacon_nm" in m for m in violations_of(relay_doc))


def test_protocol_violation(relay_doc):
    relay_doc["satellites"][0]["protocol"] = {"sample_fraction": 1.5}
    assert any("sample_fraction" in m for m in violations_of(relay_doc))


def test_channel_override(relay_doc):
    relay_doc["channel_overrides"] = [{"satellite": "C2", "params": {"intrinsic_error": 0.2}}]
    cfg = validate_scenario(relay_doc)
    assert cfg.channel_for("C2", "ogs-a").intrinsic_error == 0.2
    assert cfg.channel_for("C2", "ogs-a").wavelength_nm == cfg.channel.wavelength_nm
    assert cfg.channel_for("C1", "ogs-a").intrinsic_error == 0.0


def test_channel_override_unknown_target(relay_doc):
    relay_doc["channel_overrides"] = [{"ogs": "nowhere", "params": {}}]
    assert violations_of(relay_doc) == ["channel_overrides[0]: unknown OGS id 'nowhere'"]


def test_with_overrides():
    cfg = load_scenario("relay_n3").with_overrides(master_seed=11, horizon_s=3600, compromised=["C3"])
    assert cfg.master_seed == 11 and cfg.horizon_s == 3600
    assert cfg.adversary.compromised == frozenset({"C3"})


@pytest.mark.parametrize("name", ["relay_n3", "demo_fleet"])
def test_round_trip_shipped(name):
    cfg = load_scenario(name)
    assert validate_scenario(serialize(cfg)) == cfg
    assert validate_scenario(yaml.safe_load(dump_scenario(cfg))) == cfg


finite = dict(allow_nan=False, allow_infinity=False)


@st.composite
def documents(draw):
    doc = yaml.safe_load(read_scenario_text("relay_n3"))
    for s in doc["satellites"]:
        s["orbit"]["altitude_km"] = draw(st.floats(160, 40_000, **finite))
        s["orbit"]["inclination_deg"] = draw(st.floats(0, 180, **finite))
        s["orbit"]["epoch"] = draw(st.floats(-1e5, 1e5, **finite))
        s["protocol"] = {
            "pulse_rate": draw(st.floats(1, 1e9, **finite)),
            "sample_fraction": draw(st.floats(0.01, 0.99, **finite)),
            "reconciliation_block": draw(st.integers(1, 64)),
        }
    for o in doc["ogs"]:
        o["site"]["latitude_deg"] = draw(st.floats(-90, 90, **finite))
        o["site"]["min_elevation_deg"] = draw(st.floats(0, 89, **finite))
    doc["master_seed"] = draw(st.integers(0, 2**63))
    doc["horizon_s"] = draw(st.floats(1, 1e7, **finite))
    doc["channel_geometry"] = draw(st.sampled_from(["pass", "fixed"]))
    doc["channel"]["background_click_prob"] = draw(st.floats(0, 1, **finite))
    doc["adversary"]["compromised"] = draw(st.lists(st.sampled_from(["C1", "C2", "C3"]), unique=True))
    if draw(st.booleans()):
        doc["channel_overrides"] = [{"ogs": "ogs-b", "params": {"range_km": draw(st.floats(1, 5e4, **finite))}}]
    return doc


@settings(max_examples=50, deadline=None)
@given(documents())
def test_round_trip_property(doc):
    cfg = validate_scenario(copy.deepcopy(doc))
    assert validate_scenario(serialize(cfg)) == cfg
    assert validate_scenario(yaml.safe_load(dump_scenario(cfg))) == cfg


def test_readme_schema_example_runs():
    from pathlib import Path

    from ptnsim.simnet import run

    text = (Path(__file__).parents[1] / "README.md").read_text()
    block = text.split("```yaml\n")[1].split("```")[0]
    cfg = validate_scenario(yaml.safe_load(block))
    assert run(cfg).status == "OK"
