import json

import pytest

from oauthsim.cli import EXIT_OK, EXIT_UNEXPECTED, EXIT_USAGE, main, parse_header


def run(tmp_path, *args):
    return main(["run", *args, "--out", str(tmp_path)])


@pytest.mark.parametrize("name", ["attack-307", "naive-rp"])
def test_run_writes_trace_and_verdicts(tmp_path, name):
    assert run(tmp_path, "--scenario", name) == EXIT_OK
    data = json.loads((tmp_path / "verdicts.json").read_text())
    assert data["outcome"] == "expected"
    assert set(data["violated"]) >= set(data["expected_violations"])
    header = parse_header((tmp_path / "trace.txt").read_text().splitlines()[0])
    assert header["scenario"] == name and header["mode"] == "scripted"


def test_honest_run_is_random_by_default(tmp_path):
    assert run(tmp_path, "--scenario", "honest-fixed", "--seed", "3", "--max-steps", "60") == EXIT_OK
    data = json.loads((tmp_path / "verdicts.json").read_text())
    assert data["header"]["mode"] == "random" and data["steps"] == 60
    assert data["violated"] == []


def test_fix_toggle_run_expects_nothing(tmp_path):
    assert run(tmp_path, "--scenario", "attack-307", "--toggle", "redirectStatus=303") == EXIT_OK
    data = json.loads((tmp_path / "verdicts.json").read_text())
    assert data["expected_violations"] == [] and data["violated"] == []


def test_replay_identical(tmp_path, capsys):
    run(tmp_path, "--scenario", "mixup-code")
    capsys.readouterr()
    assert main(["replay", "--trace", str(tmp_path / "trace.txt")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "serialization: identical" in out and "witnesses: all re-derive" in out


def test_replay_detects_tampering(tmp_path):
    run(tmp_path, "--scenario", "attack-307")
    path = tmp_path / "trace.txt"
    text = path.read_text()
    assert 'mode="token"' in text
    path.write_text(text.replace('mode="token"', 'mode="code"', 1))
    assert main(["replay", "--trace", str(path)]) == EXIT_UNEXPECTED


def test_check_reports_verified_witness(tmp_path, capsys):
    run(tmp_path, "--scenario", "attack-307")
    capsys.readouterr()
    code = main(["check", "--trace", str(tmp_path / "trace.txt"), "--property", "authentication"])
    data = json.loads(capsys.readouterr().out)
    assert code == EXIT_OK
    assert data["holds"] is False and data["witness_verified"] is True


def test_check_holding_property(tmp_path, capsys):
    run(tmp_path, "--scenario", "attack-307")
    code = main(["check", "--trace", str(tmp_path / "trace.txt"), "--property", "si-authz"])
    assert code == EXIT_OK


def test_explore_writes_report(tmp_path):
    # at this bound only the password lemma is reached, not the expected main violation
    assert main(["explore", "--scenario", "attack-307", "--depth", "10", "--branch", "2",
                 "--out", str(tmp_path)]) == EXIT_UNEXPECTED
    report = json.loads((tmp_path / "report.json").read_text())
    assert "lemma-passwords" in [v["property"] for v in report["violations"]]
    finding = tmp_path / "finding-lemma-passwords.txt"
    assert main(["replay", "--trace", str(finding)]) == EXIT_OK


def test_explore_honest_small(tmp_path):
    assert main(["explore", "--scenario", "honest-fixed", "--depth", "6", "--branch", "2",
                 "--out", str(tmp_path)]) == EXIT_OK


@pytest.mark.parametrize("argv", [
    [],
    ["run", "--scenario", "nope", "--out", "x"],
    ["run", "--scenario", "honest-fixed"],
    ["run", "--scenario", "honest-fixed", "--seed", "-1", "--out", "x"],
    ["run", "--scenario", "honest-fixed", "--toggle", "bogus=1", "--out", "x"],
    ["run", "--scenario", "mixup-code", "--toggle", "intentionTracking=naive", "--out", "x"],
    ["explore", "--scenario", "honest-fixed", "--depth", "0", "--branch", "2", "--out", "x"],
    ["check", "--trace", "missing.txt", "--property", "nonsense"],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_USAGE


def test_header_parsing():
    assert parse_header("# scenario=attack-307 seed=0 mode=scripted") == {
        "scenario": "attack-307", "seed": "0", "mode": "scripted"}
