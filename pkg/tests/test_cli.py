import pytest

from maxwell_afem import io as afem_io
from maxwell_afem.cli import build_parser, main


def test_mesh_command(capsys, tmp_path):
    out = tmp_path / "cube.mesh"
    assert main(["mesh", "--domain", "cube", "--n", "1", "--out", str(out)]) == 0
    assert capsys.readouterr().out.startswith("6 tets")
    assert afem_io.read_mesh(out).n_tets == 6


def test_solve_command(capsys, tmp_path):
    code = main(["solve", "--n", "2", "--k", "3", "--out-dir", str(tmp_path)])
    assert code == 0
    text = capsys.readouterr().out
    assert "lambda_1 =" in text and "lambda_3 =" in text
    assert (tmp_path / "solve.vtk").exists()


def test_adapt_defaults_report_rate(capsys, tmp_path):
    assert main(["adapt", "--out-dir", str(tmp_path), "--no-vtk"]) == 0
    text = capsys.readouterr().out
    assert "rate eta^2 vs ndofs:" in text
    rows = afem_io.read_csv(tmp_path / "adapt.csv")
    assert len(rows) == 7


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("max_levels = 5\ntheta = 0.3\n")
    assert main(["adapt", "--config", str(cfg), "--max-levels", "1",
                 "--out-dir", str(tmp_path), "--no-vtk"]) == 0
    assert len(afem_io.read_csv(tmp_path / "adapt.csv")) == 2


def test_verify_selftest_fails(tmp_path, capsys):
    code = main(["verify", "--n", "2", "--max-dofs", "3000", "--selftest", "fail",
                 "--out-dir", str(tmp_path)])
    assert code == 1
    text = capsys.readouterr().out
    assert "FAIL selftest" in text and "PASS eigenvalue_identity" in text
    assert (tmp_path / "theory.csv").exists() and (tmp_path / "theory.txt").exists()


def test_bad_config_value_exits_2(capsys):
    assert main(["adapt", "--theta", "1.5", "--no-vtk"]) == 2
    assert "theta" in capsys.readouterr().err


def test_unknown_flag_exits_2(capsys):
    assert main(["adapt", "--bogus", "1"]) == 2


@pytest.mark.parametrize("command", ["solve", "adapt", "verify", "mesh"])
def test_help_lists_flags(command, capsys):
    assert main([command, "--help"]) == 0
    text = capsys.readouterr().out
    assert "--domain" in text
    if command != "mesh":
        for flag in ("--theta", "--max-dofs", "--config", "--threads", "--reference"):
            assert flag in text


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
