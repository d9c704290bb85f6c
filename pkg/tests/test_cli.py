import json
from importlib import resources

import pytest

from hfmdp.hfmdp import build_parser, main


@pytest.fixture
def golden_path(tmp_path):
    text = resources.files("hfmdp.models").joinpath("two_subsystem.hmdp").read_text(encoding="utf-8")
    path = tmp_path / "golden.hmdp"
    path.write_text(text)
    return str(path)


@pytest.fixture(autouse=True)
def quiet_logging(monkeypatch):
    monkeypatch.setenv("HFMDP_LOG", "error")


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def test_parser_defaults():
    args = build_parser().parse_args(["plan", "--model", "m.hmdp"])
    assert args.schedule == "sync"
    assert args.max_iters == 1000
    assert args.reuse == "off"
    assert not args.timing
    with pytest.raises(SystemExit):
        build_parser().parse_args(["plan", "--model", "m.hmdp", "--schedule", "chaotic"])


def test_validate_exit_codes(golden_path, tmp_path):
    out = tmp_path / "report.json"
    assert main(["validate", "--model", golden_path, "--out", str(out)]) == 0
    assert json.loads(_read(out))["validation"]["ok"] is True

    broken = tmp_path / "broken.hmdp"
    broken.write_text(_read(golden_path).replace("    1 0\n    0 1\n    1 0\n    0 1\n",
                                                 "    1 0\n    0 1\n    1 0\n    0.5 1\n"))
    assert main(["validate", "--model", str(broken), "--out", str(out)]) == 3
    report = json.loads(_read(out))
    assert report["validation"]["violations"][0]["kind"] == "normalization"


def test_parse_error_exits_with_2(tmp_path, capsys):
    bad = tmp_path / "bad.hmdp"
    bad.write_text("hfmdp 1\ndiscount 0.9\nvar x 0 1\nnonsense here\n")
    assert main(["plan", "--model", str(bad)]) == 2
    assert "bad.hmdp:4:1" in capsys.readouterr().err


def test_plan_output_is_byte_identical(golden_path, tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    for out in (first, second):
        assert main(["plan", "--model", golden_path, "--seed", "5", "--out", str(out)]) == 0
    assert _read(first) == _read(second)
    report = json.loads(_read(first))
    assert report["command"] == "plan"
    assert report["plan"]["objective"] == pytest.approx(124.0)
    assert "timing" not in report


def test_plan_to_stdout_with_timing(golden_path, capsys):
    assert main(["plan", "--model", golden_path, "--schedule", "leaves-first", "--timing"]) == 0
    captured = capsys.readouterr()
    report = json.loads(captured.out)
    assert report["config"]["schedule"] == "leaves-first"
    assert report["timing"]["wall_seconds"] >= 0
    assert "converged in" in captured.err


def test_execute_runs_episodes(golden_path, tmp_path):
    out = tmp_path / "run.json"
    code = main(["execute", "--model", golden_path, "--horizon", "3", "--episodes", "2",
                 "--start", "x=1,y=0", "--out", str(out)])
    assert code == 0
    episodes = json.loads(_read(out))["episodes"]
    assert len(episodes) == 2
    assert episodes[0]["states"][0] == {"x": "1", "y": "0"}
    assert episodes[0]["rewards"] == pytest.approx([-3.0, 7.0, 7.0])


def test_execute_rejects_bad_start(golden_path):
    assert main(["execute", "--model", golden_path, "--start", "z=1"]) == 1
    assert main(["execute", "--model", golden_path, "--start", "x"]) == 1
    assert main(["execute", "--model", golden_path, "--horizon", "0"]) == 1


def test_compare_on_golden(golden_path, tmp_path):
    out = tmp_path / "compare.json"
    assert main(["compare", "--model", golden_path, "--out", str(out)]) == 0
    comparison = json.loads(_read(out))["comparison"]
    assert comparison["objective_delta"] <= 1e-6
    assert comparison["exact"]["available"]
    assert comparison["exact"]["joint_values"] == pytest.approx([54.0, 64.0, 60.0, 70.0], abs=1e-6)
    assert comparison["feasibility"]["max_violation"] <= 1e-7


def test_compare_records_a_skipped_oracle(golden_path, tmp_path):
    out = tmp_path / "compare.json"
    assert main(["compare", "--model", golden_path, "--oracle-cap", "4", "--out", str(out)]) == 0
    exact = json.loads(_read(out))["comparison"]["exact"]
    assert exact["available"] is False
    assert "cap" in exact["reason"]


def test_non_convergence_exits_with_4(golden_path):
    assert main(["plan", "--model", golden_path, "--max-iters", "1"]) == 4


def test_reuse_with_cache_file(tmp_path):
    text = resources.files("hfmdp.models").joinpath("twin_valves.hmdp").read_text(encoding="utf-8")
    model = tmp_path / "twin.hmdp"
    model.write_text(text)
    cache = tmp_path / "flows.json"
    out = tmp_path / "plan.json"
    assert main(["plan", "--model", str(model), "--reuse", "on", "--cache", str(cache), "--out", str(out)]) == 0
    assert json.loads(_read(cache))["format"] == "hfmdp-flow-cache"
    counters = json.loads(_read(out))["plan"]["counters"]
    assert counters["standalone_avoided"] >= 1
    assert main(["plan", "--model", str(model), "--reuse", "on", "--cache", str(cache), "--out", str(out)]) == 0

    cache.write_text(json.dumps({"format": "hfmdp-flow-cache", "version": 99}))
    assert main(["plan", "--model", str(model), "--reuse", "on", "--cache", str(cache)]) == 1


def test_weights_override(golden_path, tmp_path):
    out = tmp_path / "plan.json"
    assert main(["plan", "--model", golden_path, "--weights", "normalized", "--out", str(out)]) == 0
    report = json.loads(_read(out))
    assert report["config"]["weights"] == "normalized"
    assert report["plan"]["objective"] == pytest.approx(62.0, abs=1e-6)
