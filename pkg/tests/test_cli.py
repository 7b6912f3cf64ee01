import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ptnsim.cli import KEY_STORE_FIELDS, main, read_key_store, write_key_store
from ptnsim.keycore import KeyMaterial, compute_parity, recover_peer_key

GOLDEN = Path(__file__).parent / "golden"


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_twice_is_byte_identical(capsys):
    first = cli(capsys, "simulate", "--scenario", "relay_n3", "--seed", "7", "--format", "json")
    second = cli(capsys, "simulate", "--scenario", "relay_n3", "--seed", "7", "--format", "json")
    assert first[0] == 0 and first == second


def test_simulate_matches_golden(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = cli(capsys, "simulate", "--scenario", "relay_n3", "--seed", "7", "--format", "json", "--out", str(out))
    assert code == 0
    assert out.read_bytes() == (GOLDEN / "relay_n3_seed7.json").read_bytes()


def test_seed_override_beats_file(capsys):
    _, default, _ = cli(capsys, "simulate", "--scenario", "relay_n3", "--format", "json")
    _, seeded, _ = cli(capsys, "simulate", "--scenario", "relay_n3", "--seed", "8", "--format", "json")
    assert json.loads(default)["master_seed"] == 7
    assert json.loads(seeded)["master_seed"] == 8
    assert json.loads(default)["final_keys"] != json.loads(seeded)["final_keys"]


def test_text_report(capsys):
    code, out, _ = cli(capsys, "simulate", "--scenario", "relay_n3")
    assert code == 0
    assert "status" in out and "n_effective" in out and "final_key[ogs-a]" in out


def test_invalid_scenario_matches_golden(capsys, monkeypatch):
    monkeypatch.chdir(GOLDEN)
    code, out, err = cli(capsys, "simulate", "--scenario", "invalid_scenario.yaml")
    assert code == 2 and out == ""
    assert err == (GOLDEN / "invalid_scenario.stderr").read_text()


def test_missing_pair_names_field(tmp_path, capsys):
    from ptnsim.scenario import read_scenario_text

    text = "\n".join(l for l in read_scenario_text("relay_n3").splitlines() if not l.startswith("pair_under_test"))
    p = tmp_path / "s.yaml"
    p.write_text(text)
    code, _, err = cli(capsys, "simulate", "--scenario", str(p))
    assert code == 2 and "pair_under_test" in err and str(p) in err


def test_missing_file(capsys):
    code, _, err = cli(capsys, "simulate", "--scenario", "nope.yaml")
    assert code == 2 and "nope.yaml" in err


def test_bad_yaml(tmp_path, capsys):
    p = tmp_path / "s.yaml"
    p.write_text("a: [1, 2\n")
    code, _, err = cli(capsys, "passes", "--scenario", str(p))
    assert code == 2 and "not valid YAML" in err


@pytest.mark.parametrize("argv", [[], ["simulate"], ["frobnicate"], ["simulate", "--scenario", "x", "--seed", "abc"],
                                  ["adversary-analysis", "--scenario", "relay_n3", "--oracle-bits", "9"]])
def test_usage_errors(argv, capsys):
    code, _, err = cli(capsys, *argv)
    assert code == 1 and "usage" in err


def test_help(capsys):
    code, out, _ = cli(capsys, "--help")
    assert code == 0 and "simulate" in out


def test_no_key_exit_code(capsys):
    code, out, _ = cli(capsys, "simulate", "--scenario", "relay_n3", "--horizon", "60")
    assert code == 3 and "NO_KEY" in out


def test_unknown_compromised(capsys):
    code, _, err = cli(capsys, "simulate", "--scenario", "relay_n3", "--compromised", "C1,C9")
    assert code == 2 and "--compromised" in err and "C9" in err


def test_compromised_override(capsys):
    _, out, _ = cli(capsys, "simulate", "--scenario", "relay_n3", "--compromised", "C1,C2,C3", "--format", "json")
    assert json.loads(out)["adversary"] == {"compromised": ["C1", "C2", "C3"], "verdict": "BROKEN"}


def test_passes(capsys):
    code, out, _ = cli(capsys, "passes", "--scenario", "relay_n3", "--horizon", "30000", "--format", "json")
    rows = json.loads(out)
    assert code == 0 and len(rows) == 3
    assert list(rows[0]) == ["satellite_id", "ogs_id", "t_start", "t_end", "max_elevation_deg"]
    assert [r["satellite_id"] for r in rows] == ["C3", "C3", "C1"]


def test_compat(tmp_path, capsys):
    out = tmp_path / "m.json"
    code, text, _ = cli(capsys, "compat", "--scenario", "demo_fleet", "--out", str(out))
    assert code == 0
    assert text.splitlines()[1].split() == ["ogs-si", "FAIL(beacon)", "ok", "ok"]
    doc = json.loads(out.read_text())
    assert sum(not e["overall"] for e in doc["matrix"]) == 1


def test_adversary_analysis(capsys):
    code, out, _ = cli(capsys, "adversary-analysis", "--scenario", "relay_n3", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["verdict"] == "SECURE"
    assert doc["oracle"]["uniform"] and doc["oracle"]["entropy_bits"] == pytest.approx(2.0)
    code, out, _ = cli(capsys, "adversary-analysis", "--scenario", "relay_n3", "--compromised", "C1,C2,C3",
                       "--format", "json", "--oracle-bits", "3")
    doc = json.loads(out)
    assert doc["verdict"] == doc["oracle"]["verdict"] == "BROKEN"
    assert doc["oracle"]["entropy_bits"] == 0


def test_simulate_side_files_and_derive_key(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, out, _ = cli(capsys, "simulate", "--scenario", "relay_n3", "--format", "json", "--out", "r.json",
                       "--csv", "s.csv", "--parities", "p.jsonl", "--key-store", "k.csv")
    assert code == 0 and out == ""
    assert sorted(p.name for p in tmp_path.iterdir()) == ["k.csv", "p.jsonl", "r.json", "s.csv"]
    report = json.loads(Path("r.json").read_text())
    assert len(list(csv.DictReader(open("s.csv")))) == len(report["sessions"])
    assert len(Path("p.jsonl").read_text().splitlines()) == 3

    for node, peer in (("ogs-a", "ogs-b"), ("ogs-b", "ogs-a")):
        code, out, _ = cli(capsys, "derive-key", "--keys", "k.csv", "--node", node, "--parities", "p.jsonl",
                           "--format", "json")
        doc = json.loads(out)
        assert code == 0
        assert doc["final_key_hex"] == report["final_keys"][node]
        assert doc["peer_key_hex"] == report["final_keys"][peer]
        assert doc["satellites"] == ["C1", "C2", "C3"]


def test_derive_key_single_satellite_is_elementary_relay(tmp_path, capsys):
    rng = np.random.default_rng(12)
    ka, kb = KeyMaterial.random(96, rng), KeyMaterial.random(96, rng)
    rec = compute_parity(ka, kb, satellite_id="C", ogs_a_id="A", ogs_b_id="B", session_a_id="s-a", session_b_id="s-b")
    keys, pars = tmp_path / "k.csv", tmp_path / "p.jsonl"
    write_key_store(str(keys), [
        {"node_id": "A", "peer_id": "C", "session_id": "s-a", "length_bits": 96, "key_hex": ka.to_hex()},
        {"node_id": "B", "peer_id": "C", "session_id": "s-b", "length_bits": 96, "key_hex": kb.to_hex()},
    ])
    pars.write_text(rec.to_line() + "\n")
    code, out, _ = cli(capsys, "derive-key", "--keys", str(keys), "--node", "A", "--parities", str(pars),
                       "--format", "json")
    doc = json.loads(out)
    assert code == 0
    assert doc["final_key_hex"] == ka.to_hex()
    assert doc["peer_key_hex"] == recover_peer_key(ka, rec).to_hex() == kb.to_hex()


def test_derive_key_without_parities_folds_own_keys(tmp_path, capsys):
    keys = tmp_path / "k.csv"
    write_key_store(str(keys), [
        {"node_id": "A", "peer_id": "C1", "session_id": "x", "length_bits": 4, "key_hex": "a0"},
        {"node_id": "A", "peer_id": "C2", "session_id": "y", "length_bits": 4, "key_hex": "60"},
    ])
    code, out, _ = cli(capsys, "derive-key", "--keys", str(keys), "--node", "A", "--format", "json")
    assert code == 0 and json.loads(out)["final_key_hex"] == "c0"


def test_derive_key_errors(tmp_path, capsys):
    keys = tmp_path / "k.csv"
    keys.write_text("node_id,key_hex\nA,ff\n")
    code, _, err = cli(capsys, "derive-key", "--keys", str(keys), "--node", "A")
    assert code == 2 and "length_bits" in err
    write_key_store(str(keys), [{"node_id": "A", "peer_id": "C", "session_id": "s", "length_bits": 4,
                                 "key_hex": "zz"}])
    code, _, err = cli(capsys, "derive-key", "--keys", str(keys), "--node", "A")
    assert code == 2 and "key_hex" in err
    code, _, err = cli(capsys, "derive-key", "--keys", str(keys), "--node", "B")
    assert code == 2 and "'B'" in err


def test_key_store_round_trip(tmp_path):
    rows = [{"node_id": "A", "peer_id": "C", "session_id": "s", "length_bits": "4", "key_hex": "a0"}]
    write_key_store(str(tmp_path / "k.csv"), rows)
    assert read_key_store(str(tmp_path / "k.csv")) == rows
    assert (tmp_path / "k.csv").read_text().splitlines()[0] == ",".join(KEY_STORE_FIELDS)


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ptnsim", "compat", "--scenario", "relay_n3"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "ogs-a" in proc.stdout
