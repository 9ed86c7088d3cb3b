import os
import subprocess
import sys

import pytest

from hpmaxwell.cli import main

TINY = """problem = exp2_smooth
k = 10
p = 1, 2
n0 = 1
levels = 2
p_ref = 3
ref_n = 2
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY + f"output = {tmp_path / 'out'}\n")
    return path


def test_verify_passes(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.strip().endswith("checks passed")


def test_mesh_info(tiny, capsys):
    assert main(["mesh-info", str(tiny)]) == 0
    out = capsys.readouterr().out
    assert "n=1 " in out and "n=2 " in out and "tets=48" in out
    assert "reference p=3 on n=2" in out


def test_mesh_dump_round_trip(tiny, tmp_path, capsys):
    assert main(["mesh-info", str(tiny), "--dump", str(tmp_path / "meshes")]) == 0
    capsys.readouterr()
    assert main(["mesh-info", "--mesh", str(tmp_path / "meshes" / "mesh_n2.txt")]) == 0
    assert "tets=48" in capsys.readouterr().out
    (tmp_path / "junk.txt").write_text("not a mesh\n")
    assert main(["mesh-info", "--mesh", str(tmp_path / "junk.txt")]) == 1


def test_solve_prints_report(tiny, capsys):
    assert main(["solve", "--config", str(tiny)]) == 0
    out = capsys.readouterr().out
    assert "curl-k" in out and "reference p=3 on n=2" in out


def test_study_writes_outputs(tiny, tmp_path, capsys):
    assert main(["study", str(tiny)]) == 0
    names = sorted(os.listdir(tmp_path / "out"))
    assert names == ["data_p1_k10.csv", "data_p2_k10.csv", "plot_p1.svg", "plot_p2.svg"]
    other = tmp_path / "elsewhere"
    assert main(["study", "--config", str(tiny), "--out", str(other)]) == 0
    for n in ("data_p1_k10.csv", "data_p2_k10.csv"):
        assert (other / n).read_bytes() == (tmp_path / "out" / n).read_bytes()


def test_bad_config_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("problem = exp2_smooth\nk = 10\np = 1, 2\np_ref = 2\n")
    assert main(["study", str(bad)]) == 1
    assert "p_ref" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["mesh-info", str(tmp_path / "nope.cfg")]) == 1
    assert "cannot read" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["verify", "--bogus"], ["study"]])
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_numerical_failure_exit_2(tiny, monkeypatch, capsys):
    import hpmaxwell.study.runner as runner
    from hpmaxwell.linalg import SingularSystemError

    def boom(*a, **k):
        raise SingularSystemError("zero pivot")

    monkeypatch.setattr(runner, "solve_on", boom)
    assert main(["study", str(tiny)]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_console_script(tiny):
    r = subprocess.run([sys.executable, "-m", "hpmaxwell.cli", "mesh-info", str(tiny)], capture_output=True, text=True)
    assert r.returncode == 0 and "tets=6" in r.stdout
