import csv
import io
import json

import pytest

from cutpoints import resistance_chain as rc
from cutpoints.cli import main
from cutpoints.trajectory import line_trajectory
from cutpoints.errors import InvalidArguments

TREE = "root 0\nabsorb 4\n0 1\n1 2 2.0\n1 3\n3 4 0.5\n"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_exact_p(capsys):
    code, out, _ = run(capsys, "exact", "--beta", "2", "--op", "p", "--k", "10")
    assert code == 0
    (r,) = rows(out)
    assert list(r)[0] == "schema_version" and r["schema_version"] == "1"
    t = rc.tails(rc.canonical(2.0), 1024)
    assert float(r["value"]) == rc.cutpoint_probability(t, 10)
    assert 0 < float(r["abs_error"]) < 1e-9
    assert json.loads(r["config"])["beta"] == 2.0


def test_exact_from_file(capsys, tmp_path):
    f = tmp_path / "uniform.txt"
    f.write_text("# uniform\n" + "1\n" * 8)
    code, out, _ = run(capsys, "exact", "--profile", str(f), "--op", "q", "--j", "4",
                       "--k", "6", "--format", "json")
    assert code == 0
    (r,) = json.loads(out)
    assert abs(r["value"] - 1 / 3) < 1e-12 and r["schema_version"] == 1


@pytest.mark.parametrize("op,extra", [("t", ["--k", "3"]), ("r", ["--k", "3"]),
                                      ("hit", ["--k", "3", "--n", "5"]),
                                      ("return", ["--n", "5", "--k", "3"]),
                                      ("b", ["--m", "3"]), ("psum", ["--m", "3"]),
                                      ("audit", ["--m", "1", "--M", "10"])])
def test_exact_ops_geometric(capsys, op, extra):
    code, out, _ = run(capsys, "exact", "--geometric", "0.5", "--op", op, *extra)
    assert code == 0
    r = rows(out)[0]
    want = {"t": 0.25, "r": 0.125, "hit": (0.5 + 0.25) / (1 - 2 ** -4),
            "return": 0.25, "psum": 6.0}
    if op in want:
        assert float(r["value"]) == pytest.approx(want[op], rel=1e-12)
    if op == "audit":
        assert r["holds"] == "True" and float(r["partial_sum"]) == pytest.approx(5.0)


def test_usage_errors(capsys):
    assert run(capsys, "exact", "--beta", "2", "--op", "p", "--bogus")[0] == 2
    assert run(capsys, "exact", "--beta", "2", "--op", "p")[0] == 2
    assert run(capsys, "experiment", "--beta", "2", "--escape", "5")[0] == 2  # no seed
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys)[0] == 2


def test_computation_error_record(capsys):
    code, out, _ = run(capsys, "exact", "--beta", "0.5", "--op", "p", "--k", "3")
    assert code == 1
    rec = json.loads(out)
    assert rec["error"] == "divergent-tail" and rec["schema_version"] == 1
    assert json.loads(rec["config"])["beta"] == 0.5


def test_simulate_dump(capsys, tmp_path):
    out = tmp_path / "t.txt"
    assert run(capsys, "simulate", "--beta", "2", "--first-passage", "6", "--seed", "3",
               "--out", str(out))[0] == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# start 1" and lines[1] == "# stop first_passage(6)"
    states = [int(x) for x in lines if not x.startswith("#")]
    tr = line_trajectory(states)
    assert states[0] == 1 and states[-1] == 6 and states.count(6) == 1 and tr.end == 6


def test_cutpoints_rows(capsys):
    code, out, _ = run(capsys, "cutpoints", "--geometric", "0.5", "--K", "5",
                       "--reps", "4000", "--seed", "1")
    assert code == 0
    rs = rows(out)
    assert [int(r["k"]) for r in rs] == [1, 2, 3, 4, 5]
    for r in rs:
        assert {"seed", "reps", "estimate", "se", "target", "z"} <= set(r)
        assert abs(float(r["z"])) <= 4 and float(r["target"]) == pytest.approx(0.5)


def test_cutpoints_censored_bias_column(capsys):
    code, out, _ = run(capsys, "cutpoints", "--beta", "2", "--K", "4", "--reps", "300",
                       "--method", "censored", "--seed", "2")
    assert code == 0
    t = rc.tails(rc.canonical(2.0), 1024)
    for r in rows(out):
        k = int(r["k"])
        assert float(r["bias_bound"]) == pytest.approx(t.t(16) / t.t(k))


def test_tree_and_stacks(capsys, tmp_path):
    f = tmp_path / "tree.txt"
    f.write_text(TREE)
    code, out, _ = run(capsys, "tree", "--input", str(f), "--reps", "20", "--seed", "4")
    assert code == 0
    for r in rows(out):
        assert r["reconstruct_match"] == r["exits_match"] == r["balanced"] == "True"
        assert r["loop_erasure"] == "0 1 3 4"
    code, out, _ = run(capsys, "stacks", "--input", str(f), "--seed", "5", "--reorders", "5")
    assert code == 0
    for r in rows(out):
        assert r["same_M"] == r["same_U"] == r["eulerian"] == "True"
    code, out, _ = run(capsys, "stacks", "--beta", "2", "--first-passage", "10", "--seed", "6")
    assert code == 0 and all(r["same_M"] == "True" for r in rows(out))


def test_tree_without_absorb(capsys, tmp_path):
    f = tmp_path / "tree.txt"
    f.write_text("root 0\n0 1\n")
    assert run(capsys, "tree", "--input", str(f), "--seed", "1")[0] == 1


def test_experiment_rows(capsys):
    for flags in (["--escape", "5"], ["--conditional", "4", "8"], ["--census", "4"],
                  ["--audit", "--m", "4:5"], ["--summability", "--m", "4:5"]):
        code, out, _ = run(capsys, "experiment", "--beta", "2", "--reps", "2000",
                           "--seed", "7", *flags)
        assert code == 0, flags
        for r in rows(out):
            assert {"seed", "reps", "estimate", "se", "target", "z", "config"} <= set(r)
            assert r["seed"] == "7"


def test_summability_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["experiment", "--beta", "2", "--summability", "--m", "4:9", "--reps", "10000",
            "--seed", "7"]
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b), "--threads", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    r = rows(a.read_text())
    assert [int(x["m"]) for x in r] == list(range(4, 10))


def test_json_mirrors_csv(capsys):
    argv = ["experiment", "--beta", "2", "--escape", "4", "--reps", "500", "--seed", "1"]
    _, c, _ = run(capsys, *argv)
    _, j, _ = run(capsys, *argv, "--format", "json")
    (rc_,), (rj,) = rows(c), json.loads(j)
    assert list(rc_) == list(rj)
    assert float(rc_["estimate"]) == rj["estimate"]


def test_line_trajectory_validation():
    with pytest.raises(InvalidArguments):
        line_trajectory([1, 3])
    with pytest.raises(InvalidArguments):
        line_trajectory([])
