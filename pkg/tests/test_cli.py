import pytest

from glvlab import cli
from glvlab.errors import ParseError, ValidationError
from glvlab.geometry import regular_polygon, build_polygon, triangulate
from glvlab.gl_core import save_field
from glvlab.geometry import save_mesh
from glvlab.vortex_profile import default_table, synthesize_vortex

MINIMAL_DIPOLE = """\
scenario = dipole
eps_list = 0.2, 0.1, 0.05

[params]
eta = 0.25
"""

CONSTANT = """\
scenario = constant
eps_list = 0.4 0.3 0.2
out_dir = {out}
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_parse_minimal_config(tmp_path):
    cfg = cli.parse_config(_write(tmp_path, MINIMAL_DIPOLE))
    assert cfg.scenario == "dipole"
    assert cfg.eps_list == [0.2, 0.1, 0.05]
    assert cfg.solver.tol == 1e-8
    assert cfg.solver.max_iters == 200000
    assert cfg.solver.method == "ncg"
    assert cfg.alpha == 0.5
    assert cfg.params == {"eta": 0.25}


def test_parse_rejects_increasing_eps(tmp_path):
    bad = MINIMAL_DIPOLE.replace("0.2, 0.1, 0.05", "0.05, 0.1, 0.2")
    with pytest.raises(ValidationError):
        cli.parse_config(_write(tmp_path, bad))


def test_parse_rejects_unknown_key(tmp_path):
    bad = MINIMAL_DIPOLE + "foo = 1\n"
    with pytest.raises(ValidationError, match="foo"):
        cli.parse_config(_write(tmp_path, bad))


def test_parse_rejects_missing_scenario_param(tmp_path):
    bad = "scenario = cone\neps_list = 0.02 0.015 0.01\n\n[params]\nmu = 0.8\n"
    with pytest.raises(ValidationError, match="theta0"):
        cli.parse_config(_write(tmp_path, bad))


def test_parse_error_reports_line(tmp_path):
    bad = MINIMAL_DIPOLE + "not a key value line\n"
    with pytest.raises(ParseError, match="line 6"):
        cli.parse_config(_write(tmp_path, bad))


def test_run_constant_exit_zero(tmp_path):
    out = tmp_path / "out"
    cfg_path = _write(tmp_path, CONSTANT.format(out=out))
    status = cli.main(["run", cfg_path])
    assert status == 0
    report = (out / "report.csv").read_text().splitlines()
    assert report[0].startswith("eps,M,N,sup_dev")
    assert len(report) == 5          # header + 3 rows + fit line
    m_values = [float(r.split(",")[1]) for r in report[1:4]]
    assert max(m_values) <= 1e-20
    assert report[4].startswith("fit,")
    assert (out / "config.echo").exists()
    assert (out / "diagnostics.csv").exists()
    assert (out / "fields" / "eps_0.4.fld").exists()
    assert (out / "fields" / "eps_0.4.msh").exists()


def test_run_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    s1 = cli.main(["run", _write(tmp_path, CONSTANT.format(out=out1), "c1.cfg")])
    s2 = cli.main(["run", _write(tmp_path, CONSTANT.format(out=out2), "c2.cfg")])
    assert s1 == s2 == 0
    assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()
    assert (out1 / "diagnostics.csv").read_bytes() == \
        (out2 / "diagnostics.csv").read_bytes()


def test_config_echo_roundtrip(tmp_path):
    out = tmp_path / "out"
    cfg_path = _write(tmp_path, CONSTANT.format(out=out))
    assert cli.main(["run", cfg_path]) == 0
    cfg1 = cli.parse_config(cfg_path)
    cfg2 = cli.parse_config(out / "config.echo")
    assert cfg1 == cfg2


def test_run_nonconvergent_exit_two(tmp_path):
    out = tmp_path / "out"
    text = ("scenario = dipole\neps_list = 0.3 0.25 0.2\n"
            f"out_dir = {out}\n\n[params]\neta = 0.25\n"
            "\n[solver]\nmax_iters = 1\n")
    status = cli.main(["run", _write(tmp_path, text)])
    assert status == 2
    diag = (out / "diagnostics.csv").read_text().splitlines()
    assert diag[0].endswith("converged")
    assert all(r.split(",")[-1] == "0" for r in diag[1:])


def test_run_missing_config_exit_one(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.cfg")]) == 1


def test_profile_subcommand(tmp_path):
    out = tmp_path / "profile.csv"
    status = cli.main(["profile", "--rmax", "20", "--n", "2000",
                       "--out", str(out)])
    assert status == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "r,f,fprime"
    r0, f0, _ = lines[1].split(",")
    assert float(r0) == 0.0
    assert float(f0) == 0.0


def test_degree_and_check_subcommands(tmp_path, capsys, quiet_warnings):
    eps = 0.05
    dom = build_polygon(regular_polygon(48, 0.5))
    mesh = triangulate(dom, eps / 2, refine=[((0, 0), 4 * eps, eps / 4)])
    u = synthesize_vortex((0.0, 0.0), eps, default_table(), mesh)
    u.constrained = True
    fld = tmp_path / "v.fld"
    save_field(u, eps, fld)
    save_mesh(mesh, tmp_path / "v.msh")

    assert cli.main(["degree", "--field", str(fld)]) == 0
    assert capsys.readouterr().out.strip() == "1"

    assert cli.main(["check", "--field", str(fld),
                     "--x0", "0", "0", "--r", "0.2"]) == 0
    out = capsys.readouterr().out
    assert "eps,M,N,sup_dev" in out
    assert "zero," in out
    assert "x0x,x0y,r,lhs,rhs,residual" in out


def test_degree_requires_mesh(tmp_path, quiet_warnings):
    dom = build_polygon(regular_polygon(16, 0.5))
    mesh = triangulate(dom, 0.1)
    u = synthesize_vortex((0.0, 0.0), 0.05, default_table(), mesh)
    fld = tmp_path / "lone.fld"
    save_field(u, 0.05, fld)
    assert cli.main(["degree", "--field", str(fld)]) == 1


def test_threads_env_override(tmp_path, monkeypatch):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    cli.main(["run", _write(tmp_path, CONSTANT.format(out=out1), "c1.cfg")])
    monkeypatch.setenv("GLV_THREADS", "2")
    cli.main(["run", _write(tmp_path, CONSTANT.format(out=out2), "c2.cfg")])
    assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()
