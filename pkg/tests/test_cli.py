import subprocess
import sys

import pytest

from kornlab.cli import EXIT_CONFIG, EXIT_GEOMETRY, EXIT_OK, EXIT_SOLVER, main


def _cfg(tmp_path, body, name="c.ini"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


CYL = "[surface]\npreset = cylinder-circular radius=1 length=1\n"


def test_geometry_check_ok(tmp_path, capsys):
    rc = main(["geometry-check", _cfg(tmp_path, CYL)])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert "uniformly_convex = True" in out and "codazzi" in out


def test_geometry_check_rejects_bad_surface(tmp_path, capsys):
    body = "[surface]\nB = x\na = 0\nb = -1\nc = 1\np = 2*pi\nz_range = 0 1\n"
    assert main(["geometry-check", _cfg(tmp_path, body)]) == EXIT_GEOMETRY
    assert "geometry validation failed" in capsys.readouterr().err


def test_config_errors_exit_two(tmp_path, capsys):
    assert main(["ansatz", _cfg(tmp_path, CYL + "[experiment]\nmode = ansatz\n")]) == EXIT_CONFIG
    assert main(["sweep", str(tmp_path / "nope.ini")]) == EXIT_CONFIG
    bad_curve = tmp_path / "curve.txt"
    bad_curve.write_text("1.0 0.0\nnot numbers\n")
    body = f"[surface]\ncurve = {bad_curve}\n[experiment]\nh_list = 0.1\n"
    assert main(["ansatz", _cfg(tmp_path, body, "d.ini")]) == EXIT_CONFIG


def test_eig_non_convergence_exits_three(tmp_path, capsys):
    body = CYL + "[experiment]\nh_list = 0.5\n[eig]\nmaxit = 1\ntheta_min = 8\ntheta_per_wave = 8\nn_z = 4\n"
    assert main(["eig", _cfg(tmp_path, body)]) == EXIT_SOLVER


def test_ansatz_command_writes_reports(tmp_path, capsys):
    body = CYL + "[experiment]\nn_list = 2 3 4\n[output]\nname = run\ntiming = no\n"
    out = tmp_path / "out"
    rc = main(["--out", str(out), "--format", "both", "ansatz", _cfg(tmp_path, body)])
    assert rc == EXIT_OK
    assert (out / "run.csv").exists() and (out / "run.svg").exists()
    assert "slope=" in capsys.readouterr().out


def test_sweep_both_modes(tmp_path, capsys):
    body = (CYL + "[experiment]\nmode = both\nh_list = 0.3 0.2 0.1\n"
            "[eig]\ntheta_min = 16\nn_z = 6\n[output]\nname = s\n")
    out = tmp_path / "o"
    assert main(["--out", str(out), "sweep", _cfg(tmp_path, body)]) == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["s_ansatz.csv", "s_eig.csv"]


def test_planar_check(capsys):
    assert main(["planar-check", "--seed", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "harmonic gap: 350 instances" in out and "seed=1" in out


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "kornlab.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "geometry-check" in r.stdout


def test_unknown_command_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
