import io
import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import pytest
from jsonschema import validate

from pipa.cli import main, schema
from pipa.syntax import parse
from pipa.terms import congruent

TERMS = Path(__file__).resolve().parent.parent / "terms"
F = Fraction


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


def t(name):
    return TERMS / name


# -- parse ------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["example1.pi", "example2.pi", "election.pi", "com_vs_comprime.pi"])
def test_parse_round_trip(name):
    code, out, _ = cli("parse", t(name))
    assert code == 0
    assert congruent(parse(out), parse(t(name).read_text()))


def test_parse_json_validates():
    code, out, _ = cli("parse", t("election.pi"), "--format", "json")
    assert code == 0
    validate(json.loads(out), schema("ast"))


def test_parse_error_names_span(tmp_path):
    f = tmp_path / "bad.pi"
    f.write_text("1/2: tau. 0 +\n  1/0: tau. 0\n")
    code, out, err = cli("parse", f)
    assert code == 2 and out == ""
    assert "line 2, column 5" in err


def test_missing_file_is_usage_error():
    assert cli("parse", "/nonexistent.pi")[0] == 1


# -- groups -----------------------------------------------------------------------

def _group_probs(out):
    return sorted(sorted(F(e["prob"]) for e in g["entries"]) for g in json.loads(out)["groups"])


def test_groups_example1():
    code, out, _ = cli("groups", t("example1.pi"), "--format", "json")
    assert code == 0
    validate(json.loads(out), schema("groups"))
    assert _group_probs(out) == [[F(1, 2), F(1, 2)], [F(1, 2), F(1, 2)], [1]]


def test_groups_example2_and_3():
    assert len(json.loads(cli("groups", t("example2.pi"), "--format", "json")[1])["groups"]) == 2
    assert _group_probs(cli("groups", t("example3_r1.pi"), "--format", "json")[1]) == [[1], [1]]
    assert _group_probs(cli("groups", t("example3_r2.pi"), "--format", "json")[1]) == \
        [[F(1, 3), F(2, 3)]]


def test_groups_modes():
    std = cli("groups", t("com_vs_comprime.pi"), "--format", "json")[1]
    alt = cli("groups", t("com_vs_comprime.pi"), "--mode", "com-prime", "--format", "json")[1]
    assert len(json.loads(std)["groups"]) == 3
    assert len(json.loads(alt)["groups"]) == 2
    assert json.loads(alt)["mode"] == "com-prime"


def test_groups_text_has_exact_fractions():
    code, out, _ = cli("groups", t("example3_r2.pi"))
    assert code == 0
    assert out.startswith("1 group(s)")
    assert "1/3" in out and "2/3" in out


def test_stuck_conditional_exit_3():
    code, _, err = cli("groups", t("stuck.pi"))
    assert code == 3 and "semantic" in err


# -- run ----------------------------------------------------------------------------

def _records(out):
    return [json.loads(line) for line in out.splitlines()]


def test_run_scripted_tau_loop():
    code, out, _ = cli("run", t("example2.pi"), "--adversary", "scripted:1,1,1", "--max-steps", 3)
    assert code == 0
    recs = _records(out)
    for r in recs:
        validate(r, schema("run"))
    steps = recs[1:-1]
    assert [(r["group"], r["action"], r["prob"]) for r in steps] == [(1, "tau", "1")] * 3
    # the loop returns to the start state every time
    assert {r["state"] for r in steps} == {recs[0]["state"]}
    assert recs[-1]["budgetExhausted"] and recs[-1]["pb"] == "1"


def test_run_script_file(tmp_path):
    f = tmp_path / "s.txt"
    f.write_text("1\n1\n")
    a = cli("run", t("example2.pi"), "--adversary", f"scripted:{f}", "--max-steps", 3)[1]
    assert _records(a)[-1]["flags"] == ["script-exhausted"]


def test_run_replay_is_byte_identical():
    args = ("run", t("election.pi"), "--adversary", "uniform-random", "--seed", 17,
            "--max-steps", 300)
    assert cli(*args)[1] == cli(*args)[1]
    other = cli("run", t("election.pi"), "--adversary", "uniform-random", "--seed", 18,
                "--max-steps", 300)[1]
    assert other != cli(*args)[1]


def test_run_adversary_errors():
    assert cli("run", t("example2.pi"), "--adversary", "scripted:7")[0] == 4
    assert cli("run", t("example2.pi"), "--adversary", "oracle")[0] == 4
    assert cli("run", t("example2.pi"), "--adversary", "uniform-random")[0] == 1


def test_run_deadlock_record(tmp_path):
    f = tmp_path / "nil.pi"
    f.write_text("a!b\n")
    recs = _records(cli("run", f)[1])
    assert recs[-1]["deadlocked"] and recs[-1]["steps"] == 1


# -- analyze --------------------------------------------------------------------------

def _bounds(out):
    d = json.loads(out)
    validate(d, schema("analyze"))
    return F(d["lower"]["exact"]), F(d["upper"]["exact"])


def test_analyze_true_event():
    code, out, _ = cli("analyze", t("example1.pi"), "--event", "true", "--depth", 3,
                       "--format", "json")
    assert code == 0 and _bounds(out) == (1, 1)


def test_analyze_deadlock_on_nil(tmp_path):
    f = tmp_path / "nil.pi"
    f.write_text("0\n")
    out = cli("analyze", f, "--event", "deadlock", "--depth", 0, "--format", "json")[1]
    assert _bounds(out) == (1, 1)


def test_analyze_election_draws_no_withholding():
    out = cli("analyze", t("election.pi"), "--event", "draws-at-least:4", "--depth", 20,
              "--no-withholding", "--format", "json")[1]
    lo, hi = _bounds(out)
    assert lo == hi == F(121, 400)
    assert json.loads(out)["policyPaths"] >= 1


def test_analyze_small_depth_matches_enumeration():
    # depth 4 allows at most two draws, so four draws are out of reach
    out = cli("analyze", t("election.pi"), "--event", "draws-at-least:4", "--depth", 4,
              "--format", "json")[1]
    assert _bounds(out) == (0, 1)


def test_analyze_with_named_adversary():
    out = cli("analyze", t("example2.pi"), "--event", "deadlock", "--depth", 3,
              "--adversary", "scripted:0,0,0", "--format", "json")[1]
    d = json.loads(out)
    validate(d, schema("analyze"))
    assert F(d["lower"]["exact"]) == F(7, 8)


def test_analyze_budget_exit_5():
    code, out, _ = cli("analyze", t("election.pi"), "--event", "leader-elected", "--depth", 30,
                       "--max-states", 5, "--format", "json")
    assert code == 5
    d = json.loads(out)
    validate(d, schema("analyze"))
    assert d["partial"] is True


def test_analyze_bad_event():
    assert cli("analyze", t("example1.pi"), "--event", "draws-at-least:x")[0] == 1


def test_analyze_text_output():
    code, out, _ = cli("analyze", t("example2.pi"), "--event", "deadlock", "--depth", 2)
    assert code == 0
    assert "lower" in out and "upper" in out and "policy paths" in out


# -- election ------------------------------------------------------------------------

def test_election_zero_runs():
    code, _, err = cli("election", "--runs", 0)
    assert code == 1 and "runs" in err


def test_election_bad_epsilon():
    assert cli("election", "--epsilon", "2", "--runs", 10)[0] == 1
    assert cli("election", "--epsilon", "tiny", "--runs", 10)[0] == 1


def test_election_json_and_determinism():
    args = ("election", "--runs", 300, "--seed", 4, "--adversary", "uniform-random",
            "--format", "json")
    a, b = cli(*args), cli(*args)
    assert a == b and a[0] == 0
    validate(json.loads(a[1]), schema("election"))


def test_election_round_robin_within_bound():
    d = json.loads(cli("election", "--runs", 10_000, "--seed", 1, "--format", "json")[1])
    for r in d["rows"]:
        assert r["fraction"] <= r["bound"] + 3 * r["sigma"]


def test_election_leader_split_uniform_random():
    d = json.loads(cli("election", "--runs", 4000, "--seed", 8, "--adversary", "uniform-random",
                       "--format", "json")[1])
    s = d["summary"]
    k = s["elected0"] + s["elected1"]
    assert abs(s["elected0"] - k / 2) <= 3 * (k / 4) ** 0.5


def test_election_text_table():
    code, out, _ = cli("election", "--runs", 100, "--seed", 2)
    assert code == 0
    lines = out.splitlines()
    assert lines[1].split() == ["n", "count", "fraction", "bound", "sigma"]
    assert len(lines) == 2 + 7 + 2


def test_console_entry_point_is_byte_identical():
    cmd = [sys.executable, "-m", "pipa.cli", "run", str(t("election.pi")), "--adversary",
           "uniform-random", "--seed", "5", "--max-steps", "100"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and a.endswith(b"\n")
