import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from kinsample.cli import main
from kinsample.fixtures import data_path
from kinsample.io.linkfile import parse_linkfile
from kinsample.io.pdb import parse_pdb

DENSE = str(data_path("dense_chain.lnk"))
HELIX = str(data_path("helix.pdb"))


def sample(tmp_path, name, *args):
    out = tmp_path / name
    code = main(["sample", *args, "-o", str(out)])
    return code, out


def outcomes(out):
    with open(out / "stats.csv", newline="") as fh:
        return [row["outcome"] for row in csv.DictReader(fh)]


def test_single_sample_is_the_input(tmp_path):
    code, out = sample(tmp_path, "one", "--linkage", DENSE, "--radius", "0.4", "--max-samples", "1")
    assert code == 0
    files = sorted((out / "ensemble").iterdir())
    assert [f.name for f in files] == ["conf_00000.lnk"]
    orig = parse_linkfile(DENSE)
    back = parse_linkfile(files[0])
    np.testing.assert_array_equal([a.position for a in back.atoms], [a.position for a in orig.atoms])
    assert (out / "stats.csv").read_text().splitlines() == [
        "attempt,seed_id,outcome,distance_to_init,distance_computations_cumulative,dcc_rounds"]


def test_same_seed_same_bytes(tmp_path):
    args = ["--linkage", DENSE, "--radius", "0.4", "--attempts", "5", "--max-samples", "25", "--seed", "7"]
    _, a = sample(tmp_path, "a", *args)
    _, b = sample(tmp_path, "b", *args)
    assert (a / "stats.csv").read_bytes() == (b / "stats.csv").read_bytes()
    assert (a / "tree.txt").read_bytes() == (b / "tree.txt").read_bytes()
    _, c = sample(tmp_path, "c", *args[:-1], "8")
    assert (a / "stats.csv").read_bytes() != (c / "stats.csv").read_bytes()


def test_manifest_rerun_reproduces_stats(tmp_path):
    _, a = sample(tmp_path, "a", "--linkage", DENSE, "--planner", "rrt", "--sigma", "0.2",
                  "--exploration-radius", "1.0", "--iterations", "60", "--seed", "3")
    code, b = sample(tmp_path, "b", "--manifest", str(a / "manifest.json"))
    assert code == 0
    assert (a / "stats.csv").read_bytes() == (b / "stats.csv").read_bytes()
    m = json.loads((a / "manifest.json").read_text())
    assert m["settings"]["planner"]["rng_seed"] == 3 and m["settings"]["planner"]["mode"] == "binned_rrt"
    assert m["summary"]["attempts"] == 60


def test_no_dcc_raises_clash_rate(tmp_path):
    rates = {}
    for name, extra in (("nik0", ["--no-dcc"]), ("nik5", [])):
        _, out = sample(tmp_path, name, "--linkage", DENSE, "--planner", "mcl", "--sigma", "0.1",
                        "--iterations", "200", "--seed", "1", *extra)
        seq = outcomes(out)
        rates[name] = seq.count("clash_rejected") / len(seq)
    assert rates["nik0"] > rates["nik5"]


def test_pdb_run_with_constraints_and_analysis(tmp_path, capsys):
    code, out = sample(tmp_path, "helix", "--pdb", HELIX, "--constraints", str(data_path("helix_hbonds.txt")),
                       "--no-hbond-detection", "--radius", "0.3", "--attempts", "3", "--max-samples", "12")
    assert code == 0
    confs = sorted((out / "ensemble").glob("conf_*.pdb"))
    assert len(confs) == 12
    assert len(parse_pdb(confs[-1])) == len(parse_pdb(HELIX))
    capsys.readouterr()

    assert main(["correlate", str(out), "--atoms", "CA"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert len(rows) == 13 and rows[0].startswith(",A1/CA")

    assert main(["rmsd", str(out), "-o", str(tmp_path / "rmsd.csv")]) == 0
    lines = (tmp_path / "rmsd.csv").read_text().splitlines()
    assert lines[0] == "conformation,rmsd" and len(lines) == 13
    assert lines[1].startswith("0,") and float(lines[1].split(",")[1]) < 1e-12

    assert main(["stats", str(out), "--csv"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("label,attempts,accepted")


def test_resume_in_place_matches_single_run(tmp_path):
    base = ["--linkage", DENSE, "--radius", "0.4", "--attempts", "4", "--seed", "2"]
    _, full = sample(tmp_path, "full", *base, "--max-samples", "30")
    _, part = sample(tmp_path, "part", *base, "--max-samples", "12")
    assert main(["sample", "--resume", str(part), "--max-samples", "30", "-o", str(part)]) == 0
    assert (part / "stats.csv").read_bytes() == (full / "stats.csv").read_bytes()
    assert (part / "tree.txt").read_bytes() == (full / "tree.txt").read_bytes()


def test_output_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("KINSAMPLE_OUTPUT", str(tmp_path / "env_out"))
    assert main(["sample", "--linkage", DENSE, "--radius", "0.4", "--max-samples", "1"]) == 0
    assert (tmp_path / "env_out" / "manifest.json").exists()


@pytest.mark.parametrize("args", [
    [],
    ["--linkage", DENSE],
    ["--linkage", DENSE, "--pdb", HELIX, "--radius", "1"],
    ["--linkage", DENSE, "--radius", "-1"],
    ["--linkage", DENSE, "--radius", "nan"],
    ["--linkage", DENSE, "--radius", "0.5", "--sigma", "0.1"],
    ["--linkage", DENSE, "--planner", "mcl"],
    ["--linkage", DENSE, "--planner", "rrt", "--sigma", "0.1"],
    ["--linkage", DENSE, "--planner", "mcl", "--sigma", "0.1", "--radius", "1"],
    ["--linkage", DENSE, "--radius", "0.5", "--no-dcc", "--dcc-rounds", "3"],
    ["--linkage", DENSE, "--radius", "0.5", "--max-samples", "0"],
    ["--linkage", DENSE, "--radius", "0.5", "--workers", "0"],
    ["--linkage", DENSE, "--radius", "0.5", "--collision-scale", "0"],
    ["--linkage", DENSE, "--radius", "0.5", "--translation-weight", "-1"],
    ["--linkage", DENSE, "--radius", "0.5", "--chain", "A"],
    ["--linkage", "/nonexistent.lnk", "--radius", "0.5"],
    ["--linkage", DENSE, "--radius", "0.5", "--constraints", "/nonexistent"],
    ["--linkage", DENSE, "--radius", "0.5", "--planner", "nope"],
    ["--linkage", DENSE, "--radius", "abc"],
    ["--manifest", "/nonexistent.json"],
    ["--resume", "/nonexistent_dir"],
])
def test_invalid_usage_exits_nonzero_cleanly(tmp_path, capsys, args):
    code = main(["sample", *args, "-o", str(tmp_path / "o")])
    assert code not in (0, 3)
    assert "Traceback" not in capsys.readouterr().err


def test_bad_input_files_reported(tmp_path, capsys):
    bad = tmp_path / "bad.lnk"
    bad.write_text("[atoms]\n1 C 0 0 0\n[bonds]\n1 9\n")
    assert main(["sample", "--linkage", str(bad), "--radius", "0.5", "-o", str(tmp_path / "o")]) == 1
    assert "bad.lnk:4" in capsys.readouterr().err


def test_infeasible_start_lists_clashes(tmp_path, capsys):
    text = parse_linkfile(DENSE)
    clash = tmp_path / "clash.lnk"
    shutil.copy(DENSE, clash)
    p = text.atoms[10].position
    with open(clash, "a") as fh:
        fh.write(f"{p[0]} {p[1]} {p[2]} 1.0\n")
    assert main(["sample", "--linkage", str(clash), "--radius", "0.5", "-o", str(tmp_path / "o")]) == 1
    assert "clashing pairs" in capsys.readouterr().err


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["sample", "--linkage", DENSE, "--radius", "0.5", "-o", str(blocker / "sub")]) == 2


def test_console_script_runs(tmp_path):
    exe = shutil.which("kinsample")
    cmd = [exe] if exe else [sys.executable, "-m", "kinsample.cli"]
    res = subprocess.run([*cmd, "sample", "--linkage", DENSE, "--radius", "0.4", "--max-samples", "3",
                          "-o", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "3 conformations written" in res.stdout
    res = subprocess.run([*cmd, "sample", "--radius", "0.4"], capture_output=True, text=True)
    assert res.returncode == 2 and "exactly one of" in res.stderr
