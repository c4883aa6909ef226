import csv
import json
from pathlib import Path

import numpy as np
import pytest

from quantmirror.cli import main
from quantmirror.config import RunConfig, load_config
from quantmirror.harness import (
    CSV_COLUMNS,
    load_grid,
    rate_ordering_violations,
    rates_from_csv,
    read_csv_errors,
    run_experiment,
    sweep,
)
from quantmirror.validation import validate_suite

EXPERIMENTS = Path(__file__).resolve().parents[1] / "experiments"


def tiny(**kw):
    base = dict(n_agents=4, dim=2, lower=-5.0, upper=5.0, horizon=60, network="gossip_ring")
    base.update(kw)
    return RunConfig(**base)


def test_config_round_trip(tmp_path):
    cfg = tiny(tau=3, quantize=False, target_low=-1.0, target_high=1.0)
    cfg.save(tmp_path / "c.cfg")
    back = load_config(tmp_path / "c.cfg")
    assert back == cfg


def test_config_rejects_bad_values(tmp_path):
    with pytest.raises(ValueError):
        tiny(rho1=1.2)
    with pytest.raises(ValueError):
        tiny(geometry="negative_entropy")
    (tmp_path / "bad.cfg").write_text("[run]\nhorizon = 10\nbogus = 1\n")
    with pytest.raises(ValueError):
        load_config(tmp_path / "bad.cfg")


def test_shipped_configs_load():
    for name in ("estimation_tau0", "estimation_tau5", "estimation_tau7", "rate_base", "entropy_simplex"):
        cfg = load_config(EXPERIMENTS / f"{name}.cfg")
        assert cfg.name == name
    full = load_config(EXPERIMENTS / "estimation_tau5.cfg")
    assert (full.n_agents, full.dim, full.lower, full.upper, full.tau, full.k) == (30, 10, -100.0, 100.0, 5, 5)
    configs, _, _ = load_grid(EXPERIMENTS / "rate_grid.ini")
    assert len(configs) == 9


def test_csv_schema_and_determinism(tmp_path):
    cfg = tiny()
    a = run_experiment(cfg, out_dir=tmp_path / "a")
    b = run_experiment(cfg, out_dir=tmp_path / "b")
    assert a.csv_path.read_bytes() == b.csv_path.read_bytes()
    with open(a.csv_path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + cfg.horizon * cfg.n_agents
    assert float(rows[1][3]) == a.rel_err.average[0]
    assert (tmp_path / "a" / "error.png").stat().st_size > 0
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["meta"]["objective_scaling"] == "1/N"
    ts, avg = read_csv_errors(a.csv_path)
    np.testing.assert_array_equal(avg, a.rel_err.average)


def test_cli_run_and_rates(tmp_path, capsys):
    cfg = tiny(horizon=200)
    cfg.save(tmp_path / "t.cfg")
    assert main(["run", "--config", str(tmp_path / "t.cfg"), "--out", str(tmp_path / "o"), "--tau", "2"]) == 0
    out = capsys.readouterr().out
    assert "tau=2" in out
    assert main(["run", "--config", str(tmp_path / "t.cfg"), "--out", str(tmp_path / "p"), "--no-quantize"]) == 0
    summary = json.loads((tmp_path / "p" / "summary.json").read_text())
    assert summary["meta"]["quantize"] is False
    assert main(["rates", "--record", str(tmp_path / "o" / "run.csv")]) == 0
    assert "exponent" in capsys.readouterr().out


def test_cli_run_reports_monitor_violation(tmp_path, monkeypatch, capsys):
    import quantmirror.engine as engine_mod

    cfg = tiny(horizon=30)
    cfg.save(tmp_path / "t.cfg")
    monkeypatch.setattr(engine_mod, "MONITOR_TOL", -1.0)
    assert main(["run", "--config", str(tmp_path / "t.cfg"), "--out", str(tmp_path / "o")]) == 1
    assert "MONITOR VIOLATION" in capsys.readouterr().out


def test_sweep_emits_records_and_comparison(tmp_path):
    base = tiny(horizon=100, output=str(tmp_path / "base"))
    base.save(tmp_path / "base.cfg")
    (tmp_path / "grid.ini").write_text(
        f"[sweep]\nbase = base.cfg\noutput = {tmp_path / 'sw'}\nworkers = 2\n\n[grid]\nrho1 = 0.25, 0.75\ntau = 0, 1\n"
    )
    configs, output, workers = load_grid(tmp_path / "grid.ini")
    summaries = sweep(configs, output, workers)
    assert len(summaries) == 4
    rows = list(csv.DictReader(open(output / "comparison.csv")))
    assert [r["name"] for r in rows] == [c.name for c in configs]
    for c in configs:
        assert (Path(c.output) / "run.csv").exists()


def test_cli_validate(capsys):
    assert main(["validate"]) == 0
    assert "ALL PASS" in capsys.readouterr().out


def test_validate_detects_mutations():
    clean = validate_suite()
    assert clean.passed
    drop = validate_suite("drop-beta-factor")
    failed = {line.name for line in drop.lines if not line.passed}
    assert failed == {"engine: replay audit"}
    k1 = validate_suite("k1")
    failed = {line.name for line in k1.lines if not line.passed}
    assert "quantizer: per-coordinate |x-Q| <= d (K=1)" in failed


def test_rate_ordering_helper():
    cells = [("a", 0.1, 0.2), ("b", 0.25, 0.3), ("c", 0.5, 0.22)]
    bad = rate_ordering_violations(cells)
    assert [(x, y) for x, y, _ in bad] == [("c", "b")]


def test_rates_from_csv_on_synthetic(tmp_path):
    path = tmp_path / "r.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for t in range(1, 1001):
            w.writerow([t, 0, 0, repr(2.0 / t**0.5)] + [0] * 7)
    assert rates_from_csv(path).exponent == pytest.approx(0.5, abs=1e-9)
