import json
import math
import os

import numpy as np
import pytest

from mpdiff.cli import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_OK,
    format_real,
    main,
    run_experiment,
    state_columns,
    write_chain_csv,
    write_report_json,
)
from mpdiff.config import parse_config
from mpdiff.errors import ConfigError
from mpdiff.samplers import Chain

MALA = """
seed = 7
[geometry]
kind = "euclidean"
dim = 2
[target]
name = "gaussian"
[sampler]
kind = "mala"
n_iterations = 400
dt = 0.3
"""

LIE = """
seed = 3
[geometry]
kind = "so3"
[target]
name = "trace"
[sampler]
kind = "ilmcmc_lie"
n_iterations = 150
dt = 0.1
n_leapfrog = 5
"""

VERIFY = """
seed = 3
[geometry]
kind = "euclidean"
dim = 1
[target]
name = "gaussian"
[recipe]
noise = "multiplicative"
[verify]
fokker_planck = true
mutants = true
current = true
"""


def write(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def errors_of(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.errors


def test_minimal_mala_config_fills_defaults():
    cfg = parse_config(MALA)
    assert cfg.sampler["burn_in"] == 0
    assert cfg.sampler["thinning"] == 1
    assert cfg.target["beta"] == 1.0
    assert cfg.recipe["bracket"] == "zero"
    assert cfg.verify is None
    assert cfg.seed == 7


def test_negative_beta_names_path_and_rule():
    errs = errors_of(MALA.replace('name = "gaussian"', 'name = "gaussian"\nbeta = -1'))
    assert any(path == "target.beta" and "positive" in msg for path, msg in errs)


def test_duplicate_key_reports_line():
    errs = errors_of('seed = 1\nseed = 2\n[geometry]\nkind = "euclidean"\n')
    assert len(errs) == 1
    assert "line 2" in errs[0][1]


def test_all_errors_collected():
    text = MALA.replace("dt = 0.3", "dt = -0.3\nbogus = 1").replace("dim = 2", "dim = 0")
    paths = {p for p, _ in errors_of(text)}
    assert {"sampler.dt", "sampler.bogus", "geometry.dim"} <= paths


def test_unknown_table_and_missing_table():
    paths = {p for p, _ in errors_of('seed = 1\n[extra]\na = 1\n[sampler]\nkind = "mala"\nn_iterations = 1\n')}
    assert {"extra", "geometry", "target"} <= paths


def test_datetimes_and_mixed_arrays_rejected():
    errs = errors_of(MALA.replace("dt = 0.3", "dt = 0.3\nwhen = 1979-05-27"))
    assert any("datetime" in m for _, m in errs)
    errs = errors_of(MALA.replace('name = "gaussian"', 'name = "gaussian"\nvariances = [1.0, "a"]'))
    assert any("homogeneous" in m for _, m in errs)


def test_sampler_geometry_mismatch():
    errs = errors_of(LIE.replace('kind = "ilmcmc_lie"', 'kind = "mala"'))
    assert any(p.startswith("sampler") for p, _ in errs)


def test_seed_absent_is_an_error(tmp_path):
    cfg = parse_config(MALA.replace("seed = 7", ""))
    with pytest.raises(ConfigError):
        run_experiment(cfg, str(tmp_path / "out"))
    assert not (tmp_path / "out").exists()


def test_run_writes_chain_and_report(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", write(tmp_path, MALA), "--out", str(out)]) == EXIT_OK
    assert sorted(os.listdir(out)) == ["chain.csv", "kl_trace.csv", "report.json"]
    header = (out / "chain.csv").read_text().splitlines()[0]
    assert header == "iter,x0,x1,accepted,delta_H"
    report = json.loads((out / "report.json").read_text())
    assert set(report) == {"meta", "moments", "ess", "kl_trace", "residuals"}
    assert report["moments"] and all(abs(m["z"]) < 10 for m in report["moments"])
    rows = (out / "kl_trace.csv").read_text().splitlines()
    assert rows[0] == "chain,iteration,kl"
    assert len(rows) - 1 == len(report["kl_trace"])
    assert float(rows[1].split(",")[2]) == report["kl_trace"][0]["kl"]


def test_same_seed_gives_identical_bytes(tmp_path):
    cfg = write(tmp_path, LIE)
    main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b")])
    for name in ("chain.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    main(["run", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "4"])
    assert (tmp_path / "a" / "chain.csv").read_bytes() != (tmp_path / "c" / "chain.csv").read_bytes()


def test_verify_only_config(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--config", write(tmp_path, VERIFY), "--out", str(out)]) == EXIT_OK
    assert sorted(os.listdir(out)) == ["report.json", "verify.json"]
    details = json.loads((out / "verify.json").read_text())
    kinds = [c["kind"] for c in details["checks"]]
    assert kinds == ["fokker_planck", "current"]
    assert details["checks"][0]["mutants"]


def test_sampler_plus_verify_cross_reference(tmp_path):
    text = MALA + '[recipe]\nnoise = "isotropic"\n[verify]\nfokker_planck = true\n'
    out = tmp_path / "sv"
    assert main(["run", "--config", write(tmp_path, text), "--out", str(out)]) == EXIT_OK
    assert sorted(os.listdir(out)) == ["chain.csv", "kl_trace.csv", "report.json", "verify.json"]
    report = json.loads((out / "report.json").read_text())
    assert report["meta"]["verify"] == "verify.json"
    assert report["residuals"] and all(r["details"] == "verify.json" for r in report["residuals"])


def test_failed_check_exit_status(tmp_path):
    text = VERIFY.replace("current = true", "current = true\ntolerance = 1e-20")
    assert main(["verify", "--config", write(tmp_path, text), "--out", str(tmp_path / "f")]) == EXIT_CHECK_FAILED


def test_config_error_exit_and_no_files(tmp_path, capsys):
    out = tmp_path / "bad"
    text = MALA.replace("dt = 0.3", "dt = -1")
    assert main(["run", "--config", write(tmp_path, text), "--out", str(out)]) == EXIT_CONFIG
    assert "sampler.dt" in capsys.readouterr().err
    assert not out.exists()


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_list_builtins(capsys):
    assert main(["list-builtins"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "mala" in out and "stream_function" in out


def test_empty_chain_header_only(tmp_path):
    chain = Chain(np.empty((0, 2)), np.empty(0, dtype=int), np.zeros(5, dtype=bool), np.zeros(5), 1,
                  {"n_iterations": 5})
    path = tmp_path / "c.csv"
    write_chain_csv(chain, path)
    assert path.read_text() == "iter,x0,x1,accepted,delta_H\n"


def test_so3_columns(tmp_path):
    out = tmp_path / "lie"
    main(["run", "--config", write(tmp_path, LIE), "--out", str(out)])
    lines = (out / "chain.csv").read_text().splitlines()
    cols = lines[0].split(",")
    assert cols == ["iter"] + [f"g{i}{j}" for i in range(3) for j in range(3)] + ["v0", "v1", "v2", "accepted", "delta_H"]
    first = lines[1].split(",")
    assert first[0] == "0"
    np.testing.assert_array_equal(np.array(first[1:10], float).reshape(3, 3), np.eye(3))
    assert len(lines) == 152


def test_su2_columns_split_complex():
    chain = Chain(np.zeros((1, 4), complex), np.array([0]), np.zeros(0, bool), np.zeros(0), 1,
                  {"n_iterations": 0, "geometry": "sun", "velocity_dim": 3}, velocities=np.zeros((1, 3)))
    pos, vel = state_columns(chain)
    assert pos[:2] == ["g00_re", "g00_im"] and len(pos) == 8 and vel == ["v0", "v1", "v2"]


def test_json_round_trip_is_lossless(tmp_path):
    values = [0.1, 1 / 3, math.pi * 1e-300, 2.0**60, -5e-324, 1e308]
    report = {"meta": {"x": values, "flag": True, "none": None, "n": 3}, "moments": [], "inf": math.inf}
    path = tmp_path / "r.json"
    write_report_json(report, path)
    back = json.loads(path.read_text())
    assert back["meta"]["x"] == values
    assert back["meta"]["n"] == 3 and isinstance(back["meta"]["n"], int)
    assert back["inf"] is None


def test_format_real():
    assert format_real(1.0) == "1.0"
    assert float(format_real(0.1)) == 0.1
    assert format_real(1e300) == "1.0000000000000001e+300"
