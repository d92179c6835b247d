import csv
import json

import pytest

from cfslab import cli
from cfslab.config import ConfigError, Field, parse_config, validate


# --------------------------------------------------------------------------
# config parsing


def test_parse_basic():
    raw = parse_config("units natural\nlattice.points 401  # comment\n\n")
    assert raw == {"units": ["natural"], "lattice.points": ["401"]}


def test_parse_rejects_duplicates_and_bare_keys():
    with pytest.raises(ConfigError):
        parse_config("a 1\na 2\n")
    with pytest.raises(ConfigError):
        parse_config("lonely\n")


def test_validate_types_and_defaults():
    schema = {
        "n": Field("int", required=True),
        "xs": Field("float-list", default=[1.0]),
        "name": Field("str", default="x"),
    }
    out = validate(parse_config("units natural\nn 3\nxs 0.5 0.25\n"), schema)
    assert out["n"] == 3 and out["xs"] == [0.5, 0.25] and out["name"] == "x"


def test_validate_unknown_and_missing():
    schema = {"n": Field("int", required=True)}
    with pytest.raises(ConfigError, match="unknown config key 'm'"):
        validate(parse_config("units natural\nn 1\nm 2\n"), schema)
    with pytest.raises(ConfigError, match="missing required config key 'n'"):
        validate(parse_config("units natural\n"), schema)


def test_validate_units_enforced():
    schema = {"n": Field("int", default=1)}
    with pytest.raises(ConfigError, match="units"):
        validate(parse_config("n 1\n"), schema)
    with pytest.raises(ConfigError, match="natural"):
        validate(parse_config("units SI\nn 1\n"), schema)


# --------------------------------------------------------------------------
# CLI end-to-end


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_eigencheck_deterministic_artifacts(tmp_path):
    cfg = _write(tmp_path, "e.cfg", "units natural\ntrials 10\ndims 8\nspins 1\n")
    rc1 = cli.main(["eigencheck", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "7"])
    rc2 = cli.main(["eigencheck", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "7"])
    assert rc1 == 0 and rc2 == 0
    a = (tmp_path / "a" / "eigencheck.csv").read_bytes()
    b = (tmp_path / "b" / "eigencheck.csv").read_bytes()
    assert a == b
    ma = (tmp_path / "a" / "manifest.json").read_bytes()
    mb = (tmp_path / "b" / "manifest.json").read_bytes()
    assert ma == mb
    # the suite itself passed
    rows = list(csv.reader((tmp_path / "a" / "eigencheck.csv").read_text().splitlines()))
    assert all(float(r[2]) <= 1e-9 for r in rows[1:])


def test_eigencheck_threads_same_values(tmp_path):
    cfg = _write(tmp_path, "e.cfg", "units natural\ntrials 10\ndims 8\nspins 1\n")
    cli.main(["eigencheck", "--config", cfg, "--out", str(tmp_path / "t1"), "--seed", "7"])
    cli.main(
        ["eigencheck", "--config", cfg, "--out", str(tmp_path / "t4"), "--seed", "7",
         "--threads", "4"]
    )
    a = (tmp_path / "t1" / "eigencheck.csv").read_bytes()
    b = (tmp_path / "t4" / "eigencheck.csv").read_bytes()
    assert a == b


def test_vacuum_sweep_ratio_column_decreases(tmp_path):
    cfg = _write(
        tmp_path,
        "s.cfg",
        "units natural\n"
        "lattice.extent 32.0\nlattice.points 401\nlattice.mode 1+1\nlattice.mass 1.0\n"
        "sweep.eps 0.2 0.1 0.05\nsweep.grid_points 4\nsweep.grid_spacing 1.0\n",
    )
    out = tmp_path / "sweep"
    assert cli.main(["vacuum-sweep", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.reader((out / "sweep.csv").read_text().splitlines()))
    assert rows[0] == ["eps", "mean_spacelike_L", "mean_nonspacelike_L", "ratio"]
    ratios = [float(r[3]) for r in rows[1:]]
    assert ratios[0] > ratios[1] > ratios[2]
    assert (out / "ratio.svg").exists()
    # RFC 4180: CRLF line endings
    assert b"\r\n" in (out / "sweep.csv").read_bytes()
    # plot emission is reproducible byte for byte as well
    out2 = tmp_path / "sweep2"
    assert cli.main(["vacuum-sweep", "--config", cfg, "--out", str(out2)]) == 0
    assert (out / "ratio.svg").read_bytes() == (out2 / "ratio.svg").read_bytes()


def test_manifest_contents(tmp_path):
    cfg = _write(tmp_path, "e.cfg", "units natural\ntrials 2\ndims 8\nspins 1\n")
    out = tmp_path / "m"
    cli.main(["eigencheck", "--config", cfg, "--out", str(out), "--seed", "11"])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "eigencheck"
    assert manifest["seed"] == 11
    assert len(manifest["config_sha256"]) == 64
    assert "cfslab" in manifest["versions"] and "numpy" in manifest["versions"]


def test_missing_key_single_line_diagnostic(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.cfg", "units natural\nlattice.extent 32.0\n")
    rc = cli.main(["vacuum-sweep", "--config", cfg, "--out", str(tmp_path / "x")])
    assert rc == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert "lattice.points" in err[0]


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.cfg", "units natural\ntrials 2\nwhat.ever 1\n")
    rc = cli.main(["eigencheck", "--config", cfg, "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "what.ever" in capsys.readouterr().err


def test_unreadable_config(tmp_path, capsys):
    rc = cli.main(["eigencheck", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)])
    assert rc == 2


def test_minimize_command_artifacts(tmp_path):
    cfg = _write(
        tmp_path,
        "m.cfg",
        "units natural\nsystem.dim 4\nsystem.spin 1\nsystem.atoms 4\n"
        "opt.mu 0.5\nopt.max_iters 25\n",
    )
    out = tmp_path / "min"
    assert cli.main(["minimize", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
    assert (out / "iterations.csv").exists()
    assert (out / "measure.cfs").exists()
    assert (out / "summary.csv").exists()
    from cfslab import core

    system = core.load_system(out / "measure.cfs")
    assert abs(core.constraints(system)[0] - 1.0) <= 1e-6


def test_discrete_vp_command(tmp_path):
    cfg = _write(
        tmp_path,
        "d.cfg",
        "units natural\nspace.points 2\nspace.block_dim 4\nflow.particles 3\n"
        "flow.mu 0.25\nflow.max_iters 30\n",
    )
    out = tmp_path / "dvp"
    assert cli.main(["discrete-vp", "--config", cfg, "--out", str(out), "--seed", "1"]) == 0
    rows = list(csv.reader((out / "flow.csv").read_text().splitlines()))
    assert rows[0] == ["iter", "objective", "el_residual"]
    first, last = float(rows[1][2]), float(rows[-1][2])
    assert last < first


def test_sea_contour_command(tmp_path):
    cfg = _write(
        tmp_path,
        "c.cfg",
        "units natural\nmodel.dim 12\nmodel.n_neg 4\nmodel.n_pos 5\n"
        "model.strength 0.04\norders 0 2 8\n",
    )
    out = tmp_path / "sc"
    assert cli.main(["sea-contour", "--config", cfg, "--out", str(out), "--seed", "5"]) == 0
    rows = list(csv.reader((out / "contour.csv").read_text().splitlines()))
    defects = [float(r[1]) for r in rows[1:]]
    assert defects[0] > defects[1] > defects[2]


def test_pexp_command(tmp_path):
    cfg = _write(tmp_path, "p.cfg", "units natural\npath.dim 3\norders 4 8 12\n")
    out = tmp_path / "px"
    assert cli.main(["pexp-test", "--config", cfg, "--out", str(out), "--seed", "2"]) == 0
    rows = list(csv.reader((out / "pexp.csv").read_text().splitlines()))
    errs = [float(r[1]) for r in rows[1:]]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] <= 1e-8
