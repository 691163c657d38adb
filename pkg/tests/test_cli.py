import csv
import io
import os

import pytest

from cfofem.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, RunConfig, cmd_dofs, main


def run(args, tmp_path, capsys=None):
    code = main(args + ["--out", str(tmp_path)])
    return code


def test_dofs(capsys):
    assert main(["dofs", "--k-max", "10"]) == EXIT_OK
    rows = {int(r.split()[0]): tuple(map(int, r.split()[1:])) for r in capsys.readouterr().out.splitlines()[1:]}
    assert rows[1] == (7, 8, 6)
    assert rows[2] == (13, 15, 12)
    assert rows[3] == (20, 24, 20)
    assert rows[10][0] == 97


def test_dofs_direct():
    buf = io.StringIO()
    cmd_dofs(RunConfig(command="dofs", k_max=2), out=buf)
    assert len(buf.getvalue().splitlines()) == 3


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_converge_exact_case(tmp_path):
    assert run(["converge", "--case", "3", "--k", "2", "--beta", "1", "--sizes", "8,16"], tmp_path) == EXIT_OK
    rows = read_csv(tmp_path / "case3_k2_beta1.csv")
    assert len(rows) == 2
    for row in rows:
        for key in ("L2", "H1", "flux"):
            assert float(row[key]) <= 1e-10
    assert (tmp_path / "manifest.txt").exists()


def test_converge_rerun_byte_identical(tmp_path):
    args = ["converge", "--case", "1", "--k", "1", "--beta", "1,-0.5", "--sizes", "4,8"]
    assert run(args, tmp_path) == EXIT_OK
    names = sorted(p for p in os.listdir(tmp_path) if p.endswith(".csv"))
    assert names == ["case1_k1_beta1.csv", "case1_k1_betam0p5.csv"]
    first = {n: (tmp_path / n).read_bytes() for n in names + ["manifest.txt"]}
    assert run(args, tmp_path) == EXIT_OK
    assert first == {n: (tmp_path / n).read_bytes() for n in first}
    text = first["case1_k1_beta1.csv"].decode()
    assert "e-0" in text and "," in text


@pytest.mark.parametrize("args", [
    ["converge", "--beta", ""],
    ["converge", "--beta", "nan"],
    ["converge", "--sizes", "8,12"],
    ["converge", "--sizes", "8"],
    ["solve", "--case", "7"],
    ["solve", "--k", "4"],
    ["solve", "--k", "two"],
    ["solve", "--h-measure", "volume"],
    ["solve", "--bogus", "1"],
    ["twophase", "--n", "0"],
    ["twophase", "--perm", "missing_file.txt"],
])
def test_config_errors(tmp_path, args):
    assert run(args, tmp_path) == EXIT_CONFIG


def test_missing_command():
    assert main([]) == EXIT_CONFIG


def test_solve_outputs(tmp_path, capsys):
    assert run(["solve", "--case", "1", "--k", "2", "--beta", "2", "--n", "8"], tmp_path) == EXIT_OK
    for name in ("u.txt", "q.txt", "lambda.txt", "report.txt", "manifest.txt"):
        assert (tmp_path / name).exists()
    report = dict(line.split("=", 1) for line in (tmp_path / "report.txt").read_text().splitlines())
    assert float(report["l2"]) < 1e-2 and float(report["cons_residual"]) <= 1e-9
    manifest = (tmp_path / "manifest.txt").read_text()
    for key in ("command=solve", "case=1", "k=2", "betas=2.0", "n=8", "numpy=", "scipy="):
        assert key in manifest


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("case = 3\nk = 1\nn = 4\nbeta = 1\n")
    out = tmp_path / "out"
    assert main(["solve", "--config", str(cfg), "--k", "2", "--out", str(out)]) == EXIT_OK
    manifest = (out / "manifest.txt").read_text()
    assert "case=3" in manifest and "k=2" in manifest and "n=4" in manifest


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("case = 3\ncolour = red\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_estimator_outputs(tmp_path, capsys):
    assert run(["estimator", "--case", "4", "--k", "1", "--beta", "1", "--n", "8"], tmp_path) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("correlation=")
    lam = (tmp_path / "lambda_sq.txt").read_text().splitlines()
    err = (tmp_path / "error_sq.txt").read_text().splitlines()
    assert len(lam) == len(err) == 2 * 8 * 8


def test_twophase_outputs(tmp_path):
    args = ["twophase", "--perm", "synthetic", "--seed", "7", "--n", "8", "--end-time", "0.02",
            "--snapshots", "0.01,0.02"]
    assert run(args, tmp_path) == EXIT_OK
    snaps = sorted(p for p in os.listdir(tmp_path) if p.startswith("saturation_t"))
    assert len(snaps) == 2
    manifest = (tmp_path / "manifest.txt").read_text()
    assert "twophase.seed=7" in manifest and "seed=7" in manifest
    first = {n: (tmp_path / n).read_bytes() for n in snaps}
    assert run(args, tmp_path) == EXIT_OK
    assert first == {n: (tmp_path / n).read_bytes() for n in snaps}


def test_twophase_numeric_failure(tmp_path):
    # a fixed step far above the CFL limit is a numerical failure
    assert run(["twophase", "--n", "8", "--end-time", "0.5", "--dt", "0.5"], tmp_path) == EXIT_NUMERIC
