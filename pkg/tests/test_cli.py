import csv
import json

import numpy as np
import pytest

from rieszlab.cli import main, thread_count
from rieszlab.energy import hamiltonian_baxter
from rieszlab.selftest import run_selftest


def run(*argv):
    return main([str(a) for a in argv])


def read_json(path):
    return json.loads(path.read_text())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_generate_deterministic_and_replayable(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for out in (a, b):
        assert run("generate", "poisson", "--intensity", 1, "--window", "0,100", "--samples", 10,
                   "--seed", 5, "--out", out) == 0
    lines = (a / "configs.jsonl").read_text().splitlines()
    assert len(lines) == 10
    manifest = read_json(a / "manifest.json")
    assert manifest["seed"] == 5 and "configs.jsonl" in manifest["outputs"]
    assert all((a / name).exists() for name in manifest["outputs"])
    assert run("replay", a / "manifest.json", "--out", c) == 0
    for name in manifest["outputs"]:
        assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()


def test_generate_counterexample_has_multiplicities(tmp_path):
    assert run("generate", "counterexample", "--a", "zipf2", "--nmax", 100, "--window", "0,500",
               "--samples", 20, "--seed", 1, "--out", tmp_path) == 0
    assert read_json(tmp_path / "summary.json")["max_multiplicity"] > 1


def test_generate_bad_parameters(tmp_path, capsys):
    with pytest.raises(SystemExit):
        run("generate", "ginibre", "--out", tmp_path)
    with pytest.raises(SystemExit) as info:
        run("generate", "poisson", "--set", "bogus=1", "--out", tmp_path)
    assert info.value.code == 2 and "bogus" in capsys.readouterr().err


def test_sample_exact_coulomb(tmp_path):
    assert run("sample-riesz", "--s", -1, "--beta", 1, "--n", 50, "--method", "exact", "--samples", 5,
               "--seed", 2, "--out", tmp_path) == 0
    rep = read_json(tmp_path / "report.json")
    assert rep["batch"]["method"] == "exact" and rep["report"]["attempts"] >= 5
    assert 0 < rep["report"]["acceptance_rate"] <= 1
    assert len((tmp_path / "samples.jsonl").read_text().splitlines()) == 5


def test_sample_exact_requires_coulomb(tmp_path):
    with pytest.raises(SystemExit) as info:
        run("sample-riesz", "--s", -0.5, "--beta", 1, "--n", 5, "--method", "exact", "--out", tmp_path)
    assert "s = -1" in str(info.value.code)


def test_sample_exact_falls_back_to_mcmc(tmp_path):
    with pytest.warns(UserWarning):
        assert run("sample-riesz", "--s", -1, "--beta", 1, "--n", 60, "--method", "exact", "--samples", 3,
                   "--max-attempts", 5, "--thin", 2, "--burn-in", 10, "--out", tmp_path) == 0
    assert read_json(tmp_path / "report.json")["batch"]["method"] == "mcmc"


def test_sample_mcmc_report(tmp_path):
    assert run("sample-riesz", "--s", -1.5, "--beta", 2, "--n", 100, "--samples", 20, "--thin", 2,
               "--burn-in", 50, "--seed", 3, "--out", tmp_path) == 0
    rep = read_json(tmp_path / "report.json")["report"]
    assert 0 < rep["acceptance_rate"] < 1 and rep["autocorrelation_time"] >= 1
    assert len(read_csv(tmp_path / "energies.csv")) == 20
    assert (tmp_path / "energy_trace.svg").read_text().startswith("<svg")


def test_energy_and_transport_commands(tmp_path):
    src = tmp_path / "src"
    run("sample-riesz", "--s", -1, "--beta", 1, "--n", 8, "--method", "exact", "--samples", 4, "--out", src)
    out = tmp_path / "energy"
    assert run("energy", "--input", src / "samples.jsonl", "--s", -1, "--evaluator", "all", "--audit",
               "--out", out) == 0
    assert any(p.name.endswith(".csv") for p in out.iterdir())
    out = tmp_path / "transport"
    assert run("transport", "--input", src / "samples.jsonl", "--box", "--out", out) == 0
    assert len(list(out.iterdir())) >= 2


def test_diagnose_verdicts(tmp_path):
    pois, lat = tmp_path / "pois", tmp_path / "lat"
    run("generate", "poisson", "--window", "0,300", "--samples", 200, "--seed", 4, "--out", pois)
    run("generate", "lattice", "--window", "0,300", "--samples", 200, "--seed", 5, "--out", lat)
    d1 = tmp_path / "d1"
    assert run("diagnose", "--input", pois / "configs.jsonl", "--diagnostics", "variance,discrepancy",
               "--lengths", "10,30,60,100,150,200", "--out", d1) == 0
    summary = read_json(d1 / "summary.json")
    assert summary["variance"]["verdict"] == "not hyperuniform" and not summary["variance"]["passed"]
    assert (d1 / "variance.csv").exists() and (d1 / "variance.svg").exists()
    d2 = tmp_path / "d2"
    assert run("diagnose", "--input", lat / "configs.jsonl", "--diagnostics", "shift,rigidity,variance,transport",
               "--lengths", "10.5,30.5,60.5,100.5", "--out", d2) == 0
    summary = read_json(d2 / "summary.json")
    assert summary["shift"]["passed"] and summary["rigidity"]["agreement_rate"] == 1.0
    assert summary["variance"]["passed"]
    assert len(read_csv(d2 / "shift_histogram.csv")) == 10


def test_diagnose_rigidity_on_coulomb_batch(tmp_path):
    src = tmp_path / "src"
    run("sample-riesz", "--s", -1, "--beta", 1, "--n", 50, "--method", "exact", "--samples", 10, "--out", src)
    out = tmp_path / "diag"
    assert run("diagnose", "--input", src / "samples.jsonl", "--diagnostics", "rigidity", "--out", out) == 0
    assert 0.0 <= read_json(out / "summary.json")["rigidity"]["agreement_rate"] <= 1.0
    assert len(read_csv(out / "rigidity.csv")) == 10


def test_diagnose_malformed_batch(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"window":[0,1],"atoms":[[0.5,1]]}\nnot json\n')
    with pytest.raises(SystemExit) as info:
        run("diagnose", "--input", bad, "--out", tmp_path / "o")
    assert info.value.code == 2 and "line 2" in capsys.readouterr().err


def test_scan_beta_coulomb(tmp_path):
    assert run("scan-beta", "--s", -1, "--betas", "0.5,1,2", "--n", 8, "--samples", 200, "--thin", 2,
               "--burn-in", 100, "--grid-points", 5, "--samples-per-point", 200, "--seed", 6,
               "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "scan.csv")
    assert len(rows) == 3
    energy = [float(r["mean_energy"]) for r in rows]
    assert energy[0] > energy[1] > energy[2]
    logz = [float(r["log_z"]) for r in rows]
    assert logz[0] > logz[1] > logz[2]


def test_scan_beta_soft_riesz_smoke(tmp_path):
    assert run("scan-beta", "--s", -0.5, "--betas", "1", "--n", 6, "--samples", 50, "--thin", 2, "--burn-in", 50,
               "--grid-points", 3, "--samples-per-point", 100, "--out", tmp_path) == 0
    row = read_csv(tmp_path / "scan.csv")[0]
    assert all(np.isfinite(float(row[k])) for k in ("mean_energy", "log_z", "transport_plateau"))
    with pytest.raises(SystemExit):
        run("scan-beta", "--s", -0.5, "--betas", "0", "--n", 6, "--out", tmp_path / "x")


def test_logz_command(tmp_path):
    assert run("logz", "--s", -1, "--beta", 1, "--n", 1, "--grid-points", 5, "--samples-per-point", 300,
               "--out", tmp_path) == 0
    out = read_json(tmp_path / "logz.json")
    assert out["bounds"]["holds"] and -7 / 6 <= out["log_z"]["value"] <= 0


def test_selftest_fast_passes(tmp_path, capsys):
    assert run("selftest", "--level", "fast", "--out", tmp_path) == 0
    assert read_json(tmp_path / "selftest.json")["passed"]
    assert "PASS" in capsys.readouterr().out


def test_selftest_detects_corrupted_baxter_constant():
    def corrupted(config, params):
        return hamiltonian_baxter(config, params) - params.n / 12 + params.n / 11

    checks = {c.name: c for c in run_selftest("fast", evaluators={"baxter": corrupted})}
    assert not checks["energy_agreement"].passed
    assert not checks["hand_values"].passed
    assert all(c.passed for c in run_selftest("fast"))


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("RIESZLAB_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("RIESZLAB_THREADS", "0")
    assert thread_count() == 1
