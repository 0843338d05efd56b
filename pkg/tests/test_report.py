import csv

from cdkernel import cli
from cdkernel.report import TABLES


def run(*argv):
    return cli.main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_empty_run_dir(tmp_path):
    assert run("report", tmp_path, "--no-figures") == 0
    for name, header in TABLES.items():
        assert rows(tmp_path / "report" / name) == [header]
    assert not list((tmp_path / "report").glob("*.png"))


def test_missing_run_dir(tmp_path):
    assert run("report", tmp_path / "absent") == 2


def test_report_deterministic_and_figures(tmp_path):
    for sub in ("a", "b"):
        run("invert", "--family", "modulated", "--grid", "4,64", "--out", tmp_path / sub / "runs")
        assert run("report", tmp_path / sub / "runs", "--out", tmp_path / sub / "rep") == 0
    for name in TABLES:
        assert (tmp_path / "a" / "rep" / name).read_bytes() == (tmp_path / "b" / "rep" / name).read_bytes()
    for fig in ("modulus.png", "decay.png", "residuals.png"):
        assert (tmp_path / "a" / "rep" / fig).stat().st_size > 0

    mod = rows(tmp_path / "a" / "rep" / "modulus.csv")[1:]
    assert mod and all(r[0] == "dense" for r in mod)
    om = [float(r[2]) for r in mod]
    assert all(x <= y for x, y in zip(om, om[1:]))
    checks = rows(tmp_path / "a" / "rep" / "checks.csv")[1:]
    assert all(r[-1] == "1" for r in checks)
