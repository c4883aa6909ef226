"""Experiment runner: CSV and plot emission, parameter sweeps, rate fits from files."""

from __future__ import annotations

import configparser
import csv
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import load_config, parse_override
from .metrics import RateFitError, fit_rate_exponent, relative_error

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "t", "agent", "rel_err", "rel_err_avg", "consensus", "quant_err_max", "E_t",
    "proj_err_max", "bregman_err_max", "bits_cum", "slack_min",
)


@dataclass
class ExperimentResult:
    config: object
    record: object
    rel_err: object
    fit: object
    summary: dict
    csv_path: Path | None = None
    plot_path: Path | None = None

    @property
    def ok(self):
        return self.record.ok


def write_csv(path, record, rel):
    """One row per (T, agent); floats use Python's shortest round-trip repr."""
    N = record.meta["n_agents"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for k in range(record.horizon):
            shared = (
                repr(float(rel.average[k])), repr(float(record.consensus[k])),
                repr(float(record.quant_err_max[k])), repr(float(record.E_t[k])),
                repr(float(record.proj_err_max[k])), repr(float(record.bregman_err_max[k])),
                str(int(record.bits_cum[k])), repr(float(record.descent_slack_min[k])),
            )
            for agent in range(N):
                w.writerow((str(k + 1), str(agent), repr(float(rel.per_agent[k, agent])), *shared))


def read_csv_errors(path):
    """Return ``(ts, rel_err_avg)`` from a run CSV."""
    ts, avg = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"CSV lacks columns {sorted(missing)}")
        for row in reader:
            if row["agent"] == "0":
                ts.append(int(row["t"]))
                avg.append(float(row["rel_err_avg"]))
    return np.array(ts), np.array(avg)


def plot_errors(path, curves, title=""):
    """Log-scale error curves; ``curves`` maps label -> e(T) array."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, e in curves.items():
        ax.semilogy(np.arange(1, len(e) + 1), np.maximum(e, 1e-300), label=label, lw=1)
    ax.set_xlabel("iteration T")
    ax.set_ylabel("relative error e(T)")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _summary(config, record, rel, fit):
    viol = record.violation_summary()
    return {
        "name": config.name,
        "final_rel_err_avg": float(rel.average[-1]),
        "absolute_error": rel.absolute,
        "fit": fit.as_dict() if fit is not None else None,
        "predicted_rate": config.schedules.predicted_rate,
        "violations": {k: {"count": v["count"], "first": [list(x) for x in v["first"]]} for k, v in viol.items()},
        "meta": record.meta,
        "config": {s: dict(config.to_ini()[s]) for s in config.to_ini().sections()},
    }


def run_experiment(config, out_dir=None, write=True, plot=True):
    """Build, run and (optionally) persist one configuration.

    Files written to ``out_dir`` (default ``config.output``): ``run.csv``,
    ``summary.json`` and ``error.png``.
    """
    engine = config.build_engine()
    record = engine.run(config.horizon)
    rel = relative_error(record)
    try:
        fit = fit_rate_exponent(rel.average) if config.horizon >= 10 else None
    except RateFitError as exc:
        log.warning("%s: %s", config.name, exc)
        fit = None
    summary = _summary(config, record, rel, fit)
    result = ExperimentResult(config, record, rel, fit, summary)
    if write:
        out = Path(out_dir or config.output)
        out.mkdir(parents=True, exist_ok=True)
        result.csv_path = out / "run.csv"
        write_csv(result.csv_path, record, rel)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
        if plot:
            result.plot_path = out / "error.png"
            plot_errors(result.plot_path, {"network average": rel.average}, config.name)
    return result


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------


def load_grid(path):
    """Parse a sweep file.

    ``[sweep]`` holds ``base`` (a run config, relative to the grid file),
    optional ``output`` and ``workers``; ``[grid]`` maps config fields to
    comma-separated values whose Cartesian product is swept.
    """
    path = Path(path)
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    base = load_config(path.parent / cp["sweep"]["base"])
    output = Path(cp["sweep"].get("output", f"runs/{path.stem}"))
    workers = cp["sweep"].getint("workers", 1)
    axes = {k: [parse_override(k, v.strip()) for v in raw.split(",")] for k, raw in cp["grid"].items()}
    configs = []
    for combo in itertools.product(*axes.values()):
        changes = dict(zip(axes, combo))
        tag = "_".join(f"{k}{v}" for k, v in changes.items())
        configs.append(base.replace(name=tag, output=str(output / tag), **changes))
    return configs, output, workers


def _sweep_worker(config):
    res = run_experiment(config, plot=False)
    return res.summary, res.rel_err.average


def sweep(configs, output, workers=1):
    """Run configurations (in worker processes when ``workers > 1``).

    Writes ``comparison.csv`` with one row per run and a combined plot; returns
    the list of summaries in input order.
    """
    output = Path(output)
    output.mkdir(parents=True, exist_ok=True)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, configs))
    else:
        results = [_sweep_worker(c) for c in configs]
    with open(output / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("name", "rho1", "rho2", "tau", "quantize", "seed", "predicted_rate", "fitted_rate",
                    "ci_low", "ci_high", "final_rel_err_avg", "violations"))
        for cfg, (summ, _) in zip(configs, results):
            fit = summ["fit"] or {}
            w.writerow((cfg.name, repr(cfg.rho1), repr(cfg.rho2), cfg.tau, cfg.quantize, cfg.seed,
                        repr(summ["predicted_rate"]), repr(fit.get("exponent", float("nan"))),
                        repr(fit.get("ci_low", float("nan"))), repr(fit.get("ci_high", float("nan"))),
                        repr(summ["final_rel_err_avg"]), sum(v["count"] for v in summ["violations"].values())))
    plot_errors(output / "comparison.png", {c.name: e for c, (_, e) in zip(configs, results)})
    return [s for s, _ in results]


def rates_from_csv(path, t_min=None):
    ts, avg = read_csv_errors(path)
    return fit_rate_exponent(avg, t_min=t_min, ts=ts)


def rate_ordering_violations(cells, tol=0.05):
    """Pairs ``(hi, lo)`` whose larger predicted rate fits smaller by more than ``tol``.

    ``cells`` is a list of ``(label, predicted, fitted)``.
    """
    bad = []
    for a, b in itertools.permutations(cells, 2):
        if a[1] > b[1] + 1e-12 and a[2] < b[2] - tol:
            bad.append((a[0], b[0], a[2] - b[2]))
    return bad
