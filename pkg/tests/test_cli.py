"""
Command-line surface: grids, exit codes and reproducible outputs
"""

import json

import numpy as np
import pandas as pd
import pytest

from risage import cli
from risage.errors import InvalidArgumentError
from risage.scenario import dump_scenario


@pytest.fixture
def env_args(tmp_path):
    """Keep a stray .env in the working directory out of the run"""
    return ["--env-file", str(tmp_path / "missing.env")]


@pytest.fixture
def density_file(tmp_path, density_config):
    path = tmp_path / "density.ini"
    path.write_text(dump_scenario(density_config), encoding="utf-8")
    return path


def test_parse_grid():
    np.testing.assert_allclose(cli.parse_grid("0:30:10,33"), [0, 10, 20, 30, 33])
    np.testing.assert_allclose(cli.parse_grid("1e-1,1e-2"), [0.1, 0.01])
    np.testing.assert_allclose(cli.parse_grid("0:1:0.25"), [0, 0.25, 0.5, 0.75, 1.0])
    for bad in ("", "a", "1:2", "3:1:1", "0:1:0"):
        with pytest.raises(InvalidArgumentError):
            cli.parse_grid(bad)


def test_parse_int_list():
    assert cli.parse_int_list("16,64:256:64") == [16, 64, 128, 192, 256]
    with pytest.raises(InvalidArgumentError):
        cli.parse_int_list("1.5")
    with pytest.raises(InvalidArgumentError):
        cli.parse_int_list("0")


def test_show(capsys, env_args):
    assert cli.main(["show", *env_args]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "config_hash = " in out
    assert "[ris]" in out


def test_usage_errors(tmp_path, env_args):
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["teleport"]) == cli.EXIT_USAGE
    assert cli.main(["show", "--scenario", str(tmp_path / "nope.ini"), *env_args]) == cli.EXIT_USAGE
    out = str(tmp_path / "out")
    assert cli.main(["pdf", "--hop", "g2a", "--mode", "large_n", "--out", out, *env_args]) == cli.EXIT_USAGE
    assert cli.main(["pdf", "--hop", "a2g", "--mode", "asymptotic", "--out", out, *env_args]) == cli.EXIT_USAGE
    assert cli.main(["pdf", "--hop", "g2a", "--samples", "0", "--out", out, *env_args]) == cli.EXIT_USAGE


def test_bad_scenario_file(tmp_path, env_args):
    path = tmp_path / "broken.ini"
    path.write_text("[ris]\nelements = many\n", encoding="utf-8")
    assert cli.main(["show", "--scenario", str(path), *env_args]) == cli.EXIT_USAGE


def test_exact_a2g_density_is_singular_without_aging(tmp_path, env_args):
    # the default scenario hovers, so rho = 1
    args = ["pdf", "--hop", "a2g", "--samples", "500", "--out", str(tmp_path), *env_args]
    assert cli.main(args) == cli.EXIT_USAGE


def test_pdf_outputs_are_reproducible(tmp_path, env_args):
    bodies = []
    for run in ("a", "b"):
        out = tmp_path / run
        args = ["pdf", "--hop", "g2a", "--samples", "2000", "--seed", "5", "--out", str(out), *env_args]
        assert cli.main(args) == cli.EXIT_OK
        bodies.append((out / "pdf_g2a_exact.csv").read_text(encoding="utf-8"))
        assert (out / "plot_pdf.py").is_file()
        manifest = json.loads((out / "manifest_pdf.json").read_text(encoding="utf-8"))
        assert manifest["seed"] == 5
        assert manifest["samples"] == 2000
    assert bodies[0] == bodies[1]
    assert bodies[0].startswith("# schema=pdf/v1 ")

    frame = pd.read_csv(tmp_path / "a" / "pdf_g2a_exact.csv", comment="#")
    assert list(frame.columns) == ["x", "analytical_pdf", "mc_pdf", "mc_ci_low", "mc_ci_high"]
    assert len(frame) == cli.PDF_POINTS
    assert (frame["analytical_pdf"] >= 0).all()


def test_pdf_large_n_density(tmp_path, env_args, density_file):
    args = [
        "pdf", "--hop", "a2g", "--mode", "large_n", "--samples", "2000",
        "--grid", "1:100:1", "--scenario", str(density_file), "--out", str(tmp_path), *env_args,
    ]
    assert cli.main(args) == cli.EXIT_OK
    frame = pd.read_csv(tmp_path / "pdf_a2g_large_n.csv", comment="#")
    assert len(frame) == 100


def test_outage_without_simulation(tmp_path, env_args, density_file):
    args = [
        "outage", "--levels", "1e-2,1e-3", "--powers", "0,10", "--samples", "0",
        "--scenario", str(density_file), "--out", str(tmp_path), *env_args,
    ]
    assert cli.main(args) == cli.EXIT_OK
    frame = pd.read_csv(tmp_path / "outage.csv", comment="#")
    assert len(frame) == 4
    assert frame["op_mc"].isna().all()
    assert ((frame["op_analytical"] >= 0) & (frame["op_analytical"] <= 1)).all()
    runs = (tmp_path / "runs.jsonl").read_text(encoding="utf-8").splitlines()
    assert json.loads(runs[-1])["command"] == "outage"


def test_outage_rejects_bad_levels(tmp_path, env_args):
    args = ["outage", "--levels", "1.5", "--samples", "0", "--out", str(tmp_path), *env_args]
    assert cli.main(args) == cli.EXIT_USAGE


def test_se_sweep(tmp_path, env_args):
    args = ["se-sweep", "--speeds", "0:50:25", "--elements", "16,64", "--out", str(tmp_path), *env_args]
    assert cli.main(args) == cli.EXIT_OK
    frame = pd.read_csv(tmp_path / "se_sweep.csv", comment="#")
    assert len(frame) == 6
    assert sorted(frame["N"].unique()) == [16, 64]
    assert (frame["se_max"] <= frame["se_ref_g2a"] + 1e-12).all()


def test_parallel_sweep_matches_serial(tmp_path, env_args):
    bodies = []
    for workers in ("1", "3"):
        out = tmp_path / workers
        args = ["se-sweep", "--speeds", "10:40:10", "--workers", workers, "--out", str(out), *env_args]
        assert cli.main(args) == cli.EXIT_OK
        bodies.append((out / "se_sweep.csv").read_text(encoding="utf-8"))
    assert bodies[0] == bodies[1]


def test_validate_reports_failures(tmp_path, env_args, density_file, capsys):
    args = [
        "validate", "--suite", "dists", "--samples", "2000", "--points", "200",
        "--ks-threshold", "1e-4", "--scenario", str(density_file), "--out", str(tmp_path), *env_args,
    ]
    assert cli.main(args) == cli.EXIT_VALIDATION
    out = capsys.readouterr().out
    assert "[FAIL] dists.g2a_ks" in out
