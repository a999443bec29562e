"""Command-line entry points: exit codes, artifacts, reproducibility."""

import json
import os

import pytest

from percolab.cli import main


def run(tmp_path, *argv, stem="out"):
    out = tmp_path / stem
    code = main(list(argv) + ["--out", str(out)])
    return code, out


def test_quotient_build(tmp_path, capsys):
    code, out = run(tmp_path, "quotient-build", "--graph", "hypercubic:1",
                    "--action", "translate:3")
    assert code == 0
    data = json.loads(out.with_suffix(".json").read_text())
    assert data["ok"] is True
    assert data["degree_bound"] >= 2
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["command"] == "quotient-build"


def test_verify_cover_period3(tmp_path):
    code, out = run(tmp_path, "verify-cover", "--graph", "hypercubic:1",
                    "--action", "translate:3")
    assert code == 0
    data = json.loads(out.with_suffix(".json").read_text())
    assert data["weak"]["passed"] and data["tame_radius"] is not None


def test_verify_cover_period2_still_ok(tmp_path):
    # strong covering fails for period-2 translations; the standing
    # hypotheses only need weak covering and tame fibres
    code, out = run(tmp_path, "verify-cover", "--graph", "hypercubic:1",
                    "--action", "translate:2")
    assert code == 0
    data = json.loads(out.with_suffix(".json").read_text())
    assert not data["strong"]["passed"]
    assert data["ok"] is True


def test_sweep_writes_csv_png(tmp_path):
    code, out = run(tmp_path, "sweep", "--graph", "tree:3",
                    "--p", "0.3,0.6", "--L", "3", "--samples", "300",
                    "--seed", "7")
    assert code == 0
    assert out.with_suffix(".png").exists()
    lines = out.with_suffix(".csv").read_text().splitlines()
    assert lines[0].split(",")[:4] == ["p", "s", "L", "theta"]
    assert len(lines) == 3


def test_sweep_worker_count_invariant(tmp_path):
    _, a = run(tmp_path, "sweep", "--graph", "tree:3", "--p", "0.4,0.5",
               "--L", "3,4", "--samples", "400", "--seed", "3",
               "--workers", "1", stem="w1")
    _, b = run(tmp_path, "sweep", "--graph", "tree:3", "--p", "0.4,0.5",
               "--L", "3,4", "--samples", "400", "--seed", "3",
               "--workers", "3", stem="w3")
    assert a.with_suffix(".csv").read_bytes() == \
        b.with_suffix(".csv").read_bytes()


def test_oracle_check(tmp_path):
    code, out = run(tmp_path, "oracle-check", "--graph", "cycle:6",
                    "--p", "0.4,0.7", "--L", "2", "--samples", "5000")
    assert code == 0
    data = json.loads(out.with_suffix(".json").read_text())
    assert data["worst_z"] <= 3.5


def test_surgery_test(tmp_path):
    code, out = run(tmp_path, "surgery-test", "--graph", "hypercubic:1",
                    "--L", "4", "--samples", "40")
    assert code == 0
    data = json.loads(out.with_suffix(".json").read_text())
    assert data["report"]["failures"] == 0


def test_pc_estimate_small(tmp_path):
    code, out = run(tmp_path, "pc-estimate", "--graph", "tree:3",
                    "--L", "4,8", "--samples", "400", "--seed", "2")
    assert code == 0
    data = json.loads(out.with_suffix(".json").read_text())
    assert 0 < data["lo"] < data["hi"] < 1
    assert out.with_suffix(".png").exists()


def test_couple_verify_campaign(tmp_path):
    code, out = run(tmp_path, "couple-verify", "--pair", "z-period2",
                    "--p", "0.5", "--epsilon", "0.1", "--samples", "120")
    assert code == 0
    data = json.loads(out.with_suffix(".json").read_text())
    assert data["report"]["audit_failures"] == 0


def test_couple_verify_transcript_roundtrip(tmp_path):
    dump = tmp_path / "t.log"
    code, _ = run(tmp_path, "couple-verify", "--pair", "z-period2",
                  "--p", "0.6", "--epsilon", "0.2", "--seed", "9",
                  "--dump-transcript", str(dump))
    assert code == 0 and dump.exists()
    code, _ = run(tmp_path, "couple-verify", "--pair", "z-period2",
                  "--p", "0.6", "--epsilon", "0.2", "--seed", "9",
                  "--verify-transcript", str(dump), stem="v")
    assert code == 0
    with open(dump, "a") as fh:
        fh.write("tampered\n")
    code, _ = run(tmp_path, "couple-verify", "--pair", "z-period2",
                  "--p", "0.6", "--epsilon", "0.2", "--seed", "9",
                  "--verify-transcript", str(dump), stem="v2")
    assert code == 1


def test_gap_refused_pair(tmp_path):
    code, out = run(tmp_path, "gap", "--pair", "tree3-ray",
                    "--samples", "10")
    assert code == 0
    data = json.loads(out.with_suffix(".json").read_text())
    assert data["report"]["refused"] is True


def test_unknown_pair_is_an_error(tmp_path):
    code, _ = run(tmp_path, "gap", "--pair", "nope", "--samples", "10")
    assert code == 2
