import json
import subprocess
import sys

import numpy as np
import pytest

from spinrelax import pipeline as pl
from spinrelax.cli import main
from spinrelax.deadtime import DetectorSpec
from spinrelax.experiment import NoiseSpec, reference_config
from spinrelax.t1fit import PulsePairRecord, t1_model
from spinrelax.tempfit import RelaxationPoint, TempModelParams, model_rate
from spinrelax.traces import TimeTrace


@pytest.fixture
def config_file(tmp_path):
    cfg = reference_config(noise=NoiseSpec("poisson", seed=1), detector=DetectorSpec())
    p = tmp_path / "cfg.json"
    p.write_text(cfg.canonical_json())
    return p


def test_synth_writes_identical_runs(tmp_path, config_file):
    assert main(["synth", str(config_file), "--out", str(tmp_path / "a")]) == 0
    assert main(["synth", str(config_file), "--out", str(tmp_path / "b")]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "report.json" in files and "pulse_pairs.csv" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_seed_override(capsys, config_file):
    main(["synth", str(config_file), "--seed", "9"])
    doc = json.loads(capsys.readouterr().out)
    assert doc["seed"] == 9
    main(["synth", str(config_file), "--format", "csv"])
    assert capsys.readouterr().out.startswith("tau_s,h1_hz,h2_hz\n")


def test_fit_t1(tmp_path, capsys):
    recs = [PulsePairRecord(t, 1e5, 1e5 * float(t1_model(t, 2.4, 0.6))) for t in (0.2, 0.5, 1, 2, 4, 8)]
    p = tmp_path / "pairs.csv"
    pl.save_pulse_pairs(p, recs)
    assert main(["fit-t1", str(p)]) == 0
    fit = json.loads(capsys.readouterr().out)["fit"]
    assert fit["t1_s"] == pytest.approx(2.4, rel=1e-6)
    out = tmp_path / "fit.csv"
    main(["fit-t1", str(p), "--format", "csv", "--out", str(out)])
    assert out.read_text().startswith("t1_s,q,")


def test_fit_temp(tmp_path, capsys):
    params = TempModelParams(0.2, 1e-3, 5, 1.3e9, 7.0, 0.0)
    pts = [RelaxationPoint(t, model_rate(params, t)) for t in np.arange(2, 7.01, 0.5)]
    p = tmp_path / "relax.csv"
    p.write_text(pl.relaxation_to_csv(pts))
    assert main(["fit-temp", str(p), "--n", "both", "--power-law"]) == 0
    doc = json.loads(capsys.readouterr().out)
    models = [f["model"] for f in doc["fits"]]
    assert models == ["orbach_raman5", "orbach_raman9", "power_law", "constant"]
    assert doc["ranking"][0]["model"] == "orbach_raman5"
    main(["fit-temp", str(p), "--n", "9", "--format", "csv"])
    assert capsys.readouterr().out.startswith("rank,model")


def test_deadtime_solver_and_mc(tmp_path, capsys):
    p = tmp_path / "photon.csv"
    pl.save_trace(p, TimeTrace(0.0, 1e-7, np.full(2000, 1e5)))
    assert main(["deadtime", str(p), "--dead-time", "1e-5"]) == 0
    tr = pl.trace_from_csv(capsys.readouterr().out)
    assert tr.counts[-1] == pytest.approx(5e4, rel=5e-3)
    assert main(["deadtime", str(p), "--dead-time", "1e-5", "--mc", "200", "--seed", "3", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["sigma_hz"]) == 2000


def test_rules(capsys):
    assert main(["rules"]) == 0
    text = capsys.readouterr().out
    assert "A1 + A2 + E" in text and "3σ̄v" in text
    main(["rules", "--rule", "G5", "G5", "B_perp", "--format", "json"])
    assert json.loads(capsys.readouterr().out)["allowed"] is False
    main(["rules", "--product", "Γ6", "Γ5"])
    assert capsys.readouterr().out.strip() == "A2"
    main(["rules", "--doublet", "Γ4", "--format", "json"])
    assert json.loads(capsys.readouterr().out)["allowed"]["B⊥"] is True


def test_simulate(capsys, config_file):
    assert main(["simulate", str(config_file), "--bin-width", "1e-5", "--tau", "0.001"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t_s,p1,p2,p3"
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    assert np.allclose(rows[:, 1:].sum(axis=1), 1.0, atol=1e-9)
    assert main(["simulate", str(config_file), "--tau", "16"]) == 2


def test_errors_exit_codes(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["fit-t1", str(empty)]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["fit-t1", str(tmp_path / "missing.csv")]) == 1


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "spinrelax", "rules", "--product", "Γ5", "Γ5"],
        capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "A1"
