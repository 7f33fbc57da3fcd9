import argparse
import csv
import json
import math

import numpy as np
import pytest

from conftest import uniform_pattern
from stlgcp import io
from stlgcp.cli import _intensity, main
from stlgcp.geometry import PointPattern, SpaceTimeWindow

WIN = "0,1,0,1,0,50"


def write_points(path, pts):
    with open(path, "w") as fh:
        fh.write("x,y,t\n")
        for x, y, t in pts:
            fh.write(f"{float(x)!r},{float(y)!r},{float(t)!r}\n")
    return str(path)


def read_table(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def csr_file(tmp_path):
    return write_points(tmp_path / "csr.csv", uniform_pattern(300, seed=4).points)


def test_read_pattern_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y,t\n0.1,0.2,3\n0.1,oops,4\n")
    with pytest.raises(ValueError, match="line 3"):
        io.read_pattern(bad, WIN)
    outside = write_points(tmp_path / "out.csv", [(0.1, 0.1, 1.0), (2.0, 0.5, 1.0), (0.5, 0.5, 60.0)])
    with pytest.raises(ValueError, match="2 point") as err:
        io.read_pattern(outside, WIN)
    assert "line 3" in str(err.value) and "line 4" in str(err.value)
    hdr = tmp_path / "hdr.csv"
    hdr.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="line 1"):
        io.read_pattern(hdr, WIN)
    short = tmp_path / "short.csv"
    short.write_text("x,y,t\n1,2\n")
    with pytest.raises(ValueError, match="line 2"):
        io.read_pattern(short, WIN)


def test_window_parsing_and_bounding_box(tmp_path):
    with pytest.raises(ValueError, match="six"):
        io.parse_window("0,1,0,1")
    f = write_points(tmp_path / "p.csv", [(0.2, 0.3, 1.0), (0.8, 0.9, 4.0)])
    p = io.read_pattern(f, "from-data")
    assert p.window.bounds() == (0.2, 0.8, 0.3, 0.9, 1.0, 4.0)


def test_number_formatting_round_trips():
    for v in (0.1, 1 / 3, 1e-300, 12345.678):
        assert float(io.fmt(v)) == v
    assert io.fmt(True) == "true" and io.fmt(np.int64(3)) == "3"


def test_constant_intensity_is_n_over_volume():
    w = SpaceTimeWindow.from_bounds((0, 1, 0, 1, 0, 50))
    p = PointPattern(np.random.default_rng(0).random((500, 3)) * [1, 1, 50], w)
    args = argparse.Namespace(intensity=None, constant_intensity=True)
    lam, fn = _intensity(args, p)
    assert lam == 10.0 and fn == 10.0
    lam, _ = _intensity(argparse.Namespace(intensity="2.5", constant_intensity=False), p)
    assert lam == 2.5


def test_stats_on_csr_is_near_one(tmp_path, csr_file):
    out = tmp_path / "o"
    assert main(["stats", "--pattern", csr_file, "--window", WIN, "--out-dir", str(out), "--k", "--stack"]) == 0
    rows = read_table(out / "pcf.csv")
    assert len(rows) == 225 and list(rows[0]) == ["r", "h", "value"]
    mid = [float(r["value"]) for r in rows[60:170]]
    assert 0.8 < np.mean(mid) < 1.2
    assert (out / "k.csv").exists() and (out / "bandwidths.json").exists()
    assert list(read_table(out / "pcf_local.csv")[0]) == ["point_id", "r", "h", "value"]


def test_stats_two_point_hand_oracle(tmp_path):
    f = write_points(tmp_path / "two.csv", [(0.2, 0.2, 10.0), (0.3, 0.2, 10.5)])
    out = tmp_path / "o"
    assert main(["stats", "--pattern", f, "--window", WIN, "--out-dir", str(out), "--eps-space", "0.05",
                 "--eps-time", "1", "--intensity", "2", "--r-max", "0.1", "--h-max", "1", "--n-r", "1",
                 "--n-h", "1"]) == 0
    value = float(read_table(out / "pcf.csv")[0]["value"])
    omega = 1 / 0.9 * 50 / 49.5
    expect = 2 * 0.75 / 0.05 * 0.75 * (1 - 0.25) / 1.0 * omega / 4 / (4 * math.pi * 0.1 * 50)
    assert value == pytest.approx(expect, rel=1e-12)


def test_header_only_pattern_fails(tmp_path, capsys):
    f = tmp_path / "empty.csv"
    f.write_text("x,y,t\n")
    assert main(["stats", "--pattern", str(f), "--window", WIN, "--out-dir", str(tmp_path)]) == 1
    assert "n < 2" in capsys.readouterr().err


def test_fit_intensity_and_variable_bandwidths(tmp_path, csr_file):
    out = tmp_path / "o"
    assert main(["fit-intensity", "--pattern", csr_file, "--window", WIN, "--out-dir", str(out),
                 "--np", "5", "--local", "--grid", "2,2,2"]) == 0
    d = json.loads((out / "intensity.json").read_text())
    assert math.exp(d["theta"][0]) == pytest.approx(300 / 50, rel=1e-6)
    assert len(read_table(out / "bandwidths_variable.csv")) == 300
    assert len(read_table(out / "intensity_local.csv")) == 8


def test_pipeline_simulate_fit_diagnose_deterministic(tmp_path):
    model = tmp_path / "model.json"
    model.write_text(json.dumps({"model": "sep_exp", "sigma2": 3.0, "alpha": 0.1, "beta": 5.0}))
    win = "0,1,0,1,0,10"
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        common = ["--window", win, "--out-dir", str(out), "--seed", "7"]
        assert main(["simulate", "--model", str(model), "--n-expected", "150", "--grid", "16,16,10",
                     "--field-out", "field.csv", *common]) == 0
        pat = str(out / "pattern.csv")
        assert main(["fit-global", "--pattern", pat, *common]) == 0
        assert main(["fit-local", "--pattern", pat, *common]) == 0
        assert main(["diagnose", "--pattern", pat, "--fit", str(out / "fit_global.json"), "--q", "5",
                     "--grid", "8,8,5", *common]) == 0
        outputs.append(out)
    for name in ("pattern.csv", "field.csv", "fit_global.json", "fit_local.csv", "fit_local_summary.csv",
                 "result.json", "envelopes.csv"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes(), name
    rows = read_table(outputs[0] / "fit_local.csv")
    assert list(rows[0]) == ["point_id", "x", "y", "t", "sigma2", "alpha", "beta", "contrast", "converged"]
    assert rows[0]["converged"] in ("true", "false")
    fit = json.loads((outputs[0] / "fit_global.json").read_text())
    assert set(fit) == {"model", "params", "contrast", "converged"}
    env = read_table(outputs[0] / "envelopes.csv")
    assert list(env[0]) == ["r", "h", "lower", "mean", "upper", "observed"]
    # local model diagnose reads the per-point CSV back
    assert main(["diagnose", "--pattern", str(outputs[0] / "pattern.csv"), "--fit",
                 str(outputs[0] / "fit_global.json"), "--local-params", str(outputs[0] / "fit_local.csv"),
                 "--q", "3", "--grid", "8,8,5", "--window", win, "--out-dir", str(tmp_path / "c")]) == 0


def test_local_fit_csv_round_trip(tmp_path):
    from stlgcp.contrast import LocalFitResult
    from stlgcp.covariance import Gneiting
    w = SpaceTimeWindow.from_bounds((0, 1, 0, 1, 0, 50))
    p = PointPattern([[0.1, 0.2, 3.0], [0.5, 0.6, 7.0]], w)
    models = [Gneiting(1.0, 0.1, 2.0, delta=0.5), Gneiting(2.0, 0.2, 3.0, delta=1.5)]
    fit = LocalFitResult(models, np.array([0.1, 0.2]), np.array([True, False]))
    io.write_local_fit(tmp_path / "f.csv", p, fit)
    q, back = io.read_local_fit(tmp_path / "f.csv", w)
    assert np.array_equal(q.points, p.points) and back.params == models
    assert list(back.converged) == [True, False]


def test_config_file_precedence_and_unknown_keys(tmp_path, csr_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"pattern": csr_file, "window": WIN, "eps-space": 0.05, "eps_time": 2.0}))
    out = tmp_path / "o"
    assert main(["stats", "--config", str(cfg), "--out-dir", str(out), "--eps-time", "3"]) == 0
    bw = json.loads((out / "bandwidths.json").read_text())
    assert bw["eps_space"] == 0.05 and bw["eps_time"] == 3.0
    cfg.write_text(json.dumps({"pattern": csr_file, "bogus": 1}))
    assert main(["stats", "--config", str(cfg), "--window", WIN]) == 2


def test_unknown_scenario_lists_ids(tmp_path, capsys):
    assert main(["replicate", "--scenario", "nope", "--out-dir", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "sep-01" in err and "gn-08" in err


def test_missing_window_and_bad_threads(tmp_path, csr_file, capsys):
    assert main(["stats", "--pattern", csr_file]) == 1
    assert "window" in capsys.readouterr().err
    assert main(["stats", "--pattern", csr_file, "--window", WIN, "--threads", "0"]) == 1


@pytest.mark.slow
def test_replicate_smoke(tmp_path):
    assert main(["replicate", "--scenario", "sep-05", "--replicates", "1", "--n-expected", "200",
                 "--out-dir", str(tmp_path)]) == 0
    row = json.loads((tmp_path / "replicate_sep-05.json").read_text())
    assert row["R"] == 1 and set(row["true"]) == {"sigma2", "alpha", "beta"}
    table = read_table(tmp_path / "replicate_sep-05.csv")
    assert len(table) == 1 and "sigma2_median" in table[0]
