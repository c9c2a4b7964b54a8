import csv
import io as _io
import json

import numpy as np
import pytest

import martquant as mq
import oracles
from martquant import io
from martquant.cli import main


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def _pair_files(tmp_path, seed=3):
    x, a, y, b = oracles.random_martingale_pair(np.random.default_rng(seed), 8, 10)
    mu, nu = tmp_path / "mu.json", tmp_path / "nu.json"
    io.dump(io.measure_to_dict(mq.DiscreteMeasure(x, a)), mu)
    io.dump(io.measure_to_dict(mq.DiscreteMeasure(y, b)), nu)
    return str(mu), str(nu)


def test_help_documents_exit_codes(capsys):
    code, out, _ = run(["--help"], capsys)
    assert code == 0
    for token in ("exit codes", "convex order", "MARTQUANT_THREADS"):
        assert token in out


def test_quantize_primal_uniform(capsys):
    code, out, err = run(["quantize", "--measure", "uniform01", "--n", "5"], capsys)
    assert code == 0
    d = json.loads(out)
    assert np.allclose(np.ravel(d["grid"]), [0.1, 0.3, 0.5, 0.7, 0.9], atol=1e-12)
    assert np.allclose(d["weights"], 0.2)
    assert d["distortion"] == pytest.approx(1 / 300)
    assert "primal grid" in err


def test_quantize_dual_to_file(tmp_path, capsys):
    out = tmp_path / "q.json"
    code, text, _ = run(["quantize", "--measure", "builtin:tri2x", "--mode", "dual", "--n", "3",
                         "--out", str(out)], capsys)
    assert code == 0 and "dual grid" in text
    d = json.loads(out.read_text())
    assert np.allclose(np.ravel(d["grid"]), [0, 1 / np.sqrt(3), 1], atol=1e-9)
    assert d["distortion"] == pytest.approx(1 / 6 - 2 / 3**2.5, abs=1e-12)


def test_quantize_dual_given_grid_2d(tmp_path, capsys):
    m = tmp_path / "m.json"
    g = tmp_path / "g.json"
    io.dump({"dim": 2, "points": [[0.25, 0.25], [0.25, -0.25], [-0.25, 0.25], [-0.25, -0.25]]}, m)
    io.dump({"points": [[1, 1], [1, -1], [-1, 1], [-1, -1]]}, g)
    code, out, _ = run(["quantize", "--measure", str(m), "--mode", "dual", "--n", "4", "--grid", str(g)], capsys)
    assert code == 0
    assert json.loads(out)["distortion"] == pytest.approx(1.875)


def test_quantize_lloyd_2d_and_nonconvergence(tmp_path, capsys):
    m = tmp_path / "m.json"
    io.dump({"dim": 2, "points": np.random.default_rng(0).uniform(size=(80, 2)).tolist()}, m)
    code, out, _ = run(["quantize", "--measure", str(m), "--n", "4"], capsys)
    assert code == 0 and json.loads(out)["residual"] <= 1e-12
    code, _, err = run(["quantize", "--measure", str(m), "--n", "4", "--max-iter", "1", "--tol", "0"], capsys)
    assert code == 3 and "converge" in err


def test_input_errors(tmp_path, capsys):
    assert run(["quantize", "--measure", "nosuch", "--n", "3"], capsys)[0] == 2
    assert run(["quantize", "--measure", "uniform01", "--n", "0"], capsys)[0] == 2
    assert run(["quantize", "--measure", "uniform01"], capsys)[0] == 2
    assert run(["frobnicate"], capsys)[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["mot", "--mu", str(bad), "--nu", "uniform01"], capsys)[0] == 2
    assert run(["sweep", "--mu", "uniform01", "--nu", "uniform01", "--n-list", "a,b"], capsys)[0] == 2


def test_mot_infeasible_exit_code(capsys):
    code, _, err = run(["mot", "--mu", "mu6", "--nu", "mu6check"], capsys)
    assert code == 4 and "convex order" in err


def test_mot_value_and_upper(tmp_path, capsys):
    mu, nu = _pair_files(tmp_path)
    code, out, _ = run(["mot", "--mu", mu, "--nu", nu, "--p", "2"], capsys)
    assert code == 0
    m, n = io.load_measure(mu), io.load_measure(nu)
    assert json.loads(out)["value"] == pytest.approx(n.second_moment() - m.second_moment(), abs=1e-12)
    lo = json.loads(run(["mot", "--mu", mu, "--nu", nu], capsys)[1])["value"]
    hi = json.loads(run(["mot", "--mu", mu, "--nu", nu, "--upper"], capsys)[1])["value"]
    assert lo <= hi + 1e-12
    code, out, _ = run(["mot", "--mu", "uniform01", "--nu", "mu6check", "--atoms", "16"], capsys)
    assert code == 0


def test_sweep_csv(tmp_path, capsys, monkeypatch):
    mu, nu = _pair_files(tmp_path)
    out = tmp_path / "s.csv"
    code, text, _ = run(["sweep", "--mu", mu, "--nu", nu, "--n-list", "3,2", "--k-list", "4,2",
                         "--out", str(out)], capsys)
    assert code == 0 and "slope" in text
    raw = out.read_bytes()
    assert b"\r" not in raw
    rows = list(csv.DictReader(_io.StringIO(raw.decode())))
    assert list(rows[0]) == ["N", "K", "e2_N", "dp_K", "V", "W_p", "AW_p", "seconds", "status"]
    assert [(r["N"], r["K"]) for r in rows] == [("2", "2"), ("2", "4"), ("3", "2"), ("3", "4")]
    assert all(r["status"] == "ok" for r in rows)
    for r in rows:
        assert float(r["AW_p"]) >= float(r["W_p"]) - 1e-9
    monkeypatch.setenv("MARTQUANT_THREADS", "3")
    code, text2, _ = run(["sweep", "--mu", mu, "--nu", nu, "--n-list", "3,2", "--k-list", "4,2"], capsys)
    rows2 = list(csv.DictReader(_io.StringIO(text2)))
    strip = lambda rs: [{k: v for k, v in r.items() if k != "seconds"} for r in rs]
    assert strip(rows2) == strip(rows)


def test_sweep_uniform_error_columns(capsys):
    code, text, _ = run(["sweep", "--mu", "uniform01", "--nu", "mu6check", "--n-list", "2,4", "--p", "2",
                         "--atoms", "32", "--no-distances"], capsys)
    assert code == 0
    rows = list(csv.DictReader(_io.StringIO(text)))
    for r in rows:
        N = int(r["N"])
        assert float(r["e2_N"]) == pytest.approx(1 / (2 * np.sqrt(3) * N), abs=1e-12)
        assert r["W_p"] == "nan"


def test_reproduce(capsys):
    code, out, _ = run(["reproduce", "--json"], capsys)
    d = json.loads(out)
    assert code == 0 and d["all_pass"]
    assert len(d["checks"]) >= 20
    code, out, _ = run(["reproduce", "--atoms", "5"], capsys)
    assert code == 1
    assert "FAIL" in out and "W_2^2" in out
