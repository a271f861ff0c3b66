import csv
import io
import json
import os
import subprocess
import sys

import pytest

from ohlcvol.cli import main
from ohlcvol.estimators import classic_diagram


def write(tmp_path, text, name="bars.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_estimate_examples(tmp_path, capsys):
    src = write(tmp_path, "open,high,low,close\n0,1,-1,0\n0,0,0,0\n")
    code, out, _ = run(capsys, "estimate", src, "--rs", "--gk", "--parkinson")
    assert code == 0
    rows = rows_of(out)
    assert float(rows[0]["rs_variance"]) == pytest.approx(2.0)
    assert float(rows[0]["gk_variance"]) == pytest.approx(2.006)
    assert all(float(v) == 0.0 for v in rows[1].values())


def test_estimate_ml_and_efficient(tmp_path, capsys):
    src = write(tmp_path, "open,high,low,close,horizon\n0,1,-1,0.5,1\n0,2,-2,1,1\n")
    code, out, _ = run(capsys, "estimate", src, "--mle", "--eff", "0")
    assert code == 0
    rows = rows_of(out)
    assert float(rows[1]["ml_volatility"]) == pytest.approx(2 * float(rows[0]["ml_volatility"]), rel=1e-12)
    assert float(rows[1]["eff(0)_variance"]) == pytest.approx(4 * float(rows[0]["eff(0)_variance"]), rel=1e-10)


@pytest.mark.parametrize(
    "body, message",
    [
        ("open,high,low,close\n0,1,2,0\n", "row 1: low <= open violated"),
        ("open,high,low,close\n0,1,-1,0\n0,x,-1,0\n", "row 2: non-numeric field"),
        ("open,high,low,close\n0,1,-1\n", "row 1: expected 4 fields"),
        ("o,h,l,c\n0,1,-1,0\n", "header"),
    ],
)
def test_estimate_input_errors(tmp_path, capsys, body, message):
    code, _, err = run(capsys, "estimate", write(tmp_path, body), "--rs")
    assert code == 2
    assert message in err


def test_missing_estimator_and_bad_flag(tmp_path, capsys):
    src = write(tmp_path, "open,high,low,close\n0,1,-1,0\n")
    assert run(capsys, "estimate", src)[0] == 2
    assert run(capsys, "estimate", src, "--nope")[0] == 2


def test_manifest_and_replay(tmp_path, capsys):
    src = write(tmp_path, "open,high,low,close\n0,1,-1,0.25\n")
    out = str(tmp_path / "est.csv")
    assert run(capsys, "estimate", src, "--rs", "--out", out)[0] == 0
    first = open(out).read()
    manifest = json.load(open(out + ".manifest.json"))
    assert manifest["command"] == "estimate"
    assert manifest["argv"][0] == "estimate"
    for key in ("parameters", "seed", "tool_version", "wall_time"):
        assert key in manifest
    os.remove(out)
    assert run(capsys, "replay", out + ".manifest.json")[0] == 0
    assert open(out).read() == first


def test_curves(capsys):
    code, out, _ = run(capsys, "curves", "bound_V", "--gamma", "0")
    assert code == 0
    assert float(rows_of(out)[0]["value"]) == pytest.approx(0.2583, abs=3e-3)
    code, out, _ = run(capsys, "curves", "mean", "--rs", "--gamma=-1,0,1.5")
    assert [float(r["value"]) for r in rows_of(out)] == pytest.approx([1, 1, 1], rel=5e-3)


def test_curves_efficient_below_gk(capsys):
    _, out, _ = run(capsys, "curves", "variance", "--eff", "1.0", "--gk", "--gamma", "0.5")
    vals = {r["estimator"]: float(r["value"]) for r in rows_of(out)}
    assert vals["EFF(1)"] < vals["GK"]


def test_diagram(tmp_path, capsys):
    out = str(tmp_path / "rs.csv")
    assert run(capsys, "diagram", "--rs", "--out", out)[0] == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 128 * 128
    gk = classic_diagram("GK")
    code, text, _ = run(capsys, "diagram", "--gk")
    for r in rows_of(text)[::997]:
        assert float(r["value"]) == pytest.approx(float(gk.exact(float(r["theta"]), float(r["phi"]))), abs=1e-12)
    assert run(capsys, "diagram", "--rs", "--gk")[0] == 2


def test_diagram_rs_equator_is_one():
    d = classic_diagram("RS")
    assert float(d.exact(0.0, -0.3)) == pytest.approx(1.0)


def test_pdf_mass(capsys):
    code, out, _ = run(capsys, "pdf", "variance", "--rs")
    assert code == 0
    rows = rows_of(out)
    u = [float(r["u"]) for r in rows]
    p = [float(r["density"]) for r in rows]
    mass = sum(0.5 * (p[i] + p[i + 1]) * (u[i + 1] - u[i]) for i in range(len(u) - 1))
    assert mass == pytest.approx(1.0, abs=1e-3)


def test_quasi(tmp_path, capsys):
    out = str(tmp_path / "q.csv")
    code, _, _ = run(capsys, "quasi", "--K", "1", "--Gamma", "1", "--gamma=-1,0,1", "--out", out)
    assert code == 0
    rows = list(csv.DictReader(open(out)))
    assert [float(r["mean"]) for r in rows] == pytest.approx([1, 1, 1], abs=1e-6)
    assert (tmp_path / "q.weights.csv").exists()


def test_quasi_zero_order_matches_efficient(capsys):
    _, q, _ = run(capsys, "quasi", "--K", "0", "--gamma", "0.5")
    _, c, _ = run(capsys, "curves", "mean", "--eff", "0", "--gamma", "0.5")
    mean_q = float([ln for ln in q.splitlines() if not ln.startswith("#")][1].split(",")[1])
    assert mean_q == pytest.approx(float(rows_of(c)[0]["value"]), rel=1e-10)


def test_quasi_ill_conditioned(capsys):
    code, _, err = run(capsys, "quasi", "--K", "4", "--Gamma", "0.05", "--gamma", "0")
    assert code == 4
    assert "condition number" in err


def test_mle_rows(tmp_path, capsys):
    src = write(tmp_path, "open,high,low,close\n0,1,-1,0.5\n0,2,-2,1\n1,1,1,1\n")
    code, out, _ = run(capsys, "mle", src)
    assert code == 0
    rows = rows_of(out)
    assert float(rows[0]["mu_hat"]) == 0.5
    assert float(rows[1]["sigma_hat"]) == 2 * float(rows[0]["sigma_hat"])
    for r in rows[:2]:
        assert float(r["d_hat"]) == pytest.approx(float(r["sigma_hat"]) ** 2, rel=1e-15)
    assert rows[2]["error"] == "degenerate_range"
    only_bad = write(tmp_path, "open,high,low,close\n1,1,1,1\n", "bad.csv")
    assert run(capsys, "mle", only_bad)[0] == 2


def test_simulate_deterministic(tmp_path, capsys):
    args = ["simulate", "--N", "1e3", "--M", "2000", "--gamma", "0", "--rs", "--seed", "42"]
    a = run(capsys, *args)[1]
    b = run(capsys, *args)[1]
    assert a == b
    row = rows_of(a)[0]
    assert row["estimator"] == "RS-variance"
    assert 0.9 < float(row["mean"]) < 1.05


def test_simulate_study_and_mle(capsys):
    code, out, _ = run(capsys, "simulate", "--study", "50,200", "--M", "500", "--gk", "--mle", "--quantity", "volatility")
    assert code == 0
    labels = {r["estimator"] for r in rows_of(out)}
    assert labels == {"GK-volatility", "ML-volatility", "ML-variance"}
    assert run(capsys, "simulate", "--N", "1", "--M", "10")[0] == 2


def test_console_entry_and_forced_backend(tmp_path):
    src = write(tmp_path, "open,high,low,close\n0,1,-1,0\n")
    env = dict(os.environ, OHLCVOL_BACKEND="numpy")
    res = subprocess.run(
        [sys.executable, "-c", "import ohlcvol.montecarlo as m; print(m.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert res.stdout.strip() == "numpy"
    res = subprocess.run(
        [sys.executable, "-m", "ohlcvol.cli", "estimate", src, "--rs"], capture_output=True, text=True
    )
    assert res.returncode == 0
    assert float(rows_of(res.stdout)[0]["rs_variance"]) == 2.0
