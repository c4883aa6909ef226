"""Command-line entry point: ``run``, ``sweep``, ``validate`` and ``rates``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .harness import load_grid, rates_from_csv, run_experiment, sweep
from .metrics import RateFitError
from .validation import MUTATIONS, validate_suite


def _cmd_run(args):
    cfg = load_config(args.config)
    changes = {}
    if args.no_quantize:
        changes["quantize"] = False
    if args.tau is not None:
        changes["tau"] = args.tau
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if changes:
        cfg = cfg.replace(**changes)
    res = run_experiment(cfg, out_dir=args.out, plot=not args.no_plot)
    s = res.summary
    print(f"{cfg.name}: T={cfg.horizon} tau={cfg.tau} quantize={cfg.quantize} "
          f"e(T)={s['final_rel_err_avg']:.6g} wall={s['meta']['wall_time']:.2f}s")
    if res.fit is not None:
        print(f"fitted exponent {res.fit.exponent:.4f} [{res.fit.ci_low:.4f}, {res.fit.ci_high:.4f}] "
              f"(predicted {s['predicted_rate']:.4f})")
    print(f"outputs in {res.csv_path.parent}")
    if not res.ok:
        for name, v in s["violations"].items():
            print(f"MONITOR VIOLATION {name}: {v['count']} hits, first (t, agent, excess) {v['first'][:3]}")
        return 1
    return 0


def _cmd_sweep(args):
    configs, output, workers = load_grid(args.grid)
    if args.workers is not None:
        workers = args.workers
    summaries = sweep(configs, output, workers)
    bad = 0
    for cfg, s in zip(configs, summaries):
        fit = s["fit"]
        nviol = sum(v["count"] for v in s["violations"].values())
        bad += nviol
        rate = f"{fit['exponent']:.4f}" if fit else "refused"
        print(f"{cfg.name:<28} predicted={s['predicted_rate']:.3f} fitted={rate} "
              f"e(T)={s['final_rel_err_avg']:.4g} violations={nviol}")
    print(f"comparison written to {output / 'comparison.csv'}")
    return 1 if bad else 0


def _cmd_validate(args):
    report = validate_suite(mutate=args.mutate)
    print(report)
    return 0 if report.passed else 1


def _cmd_rates(args):
    try:
        fit = rates_from_csv(args.record, t_min=args.t_min)
    except RateFitError as exc:
        print(f"fit refused: {exc}")
        return 1
    print(f"exponent {fit.exponent:.4f}  95% CI [{fit.ci_low:.4f}, {fit.ci_high:.4f}]  "
          f"rms residual {fit.residual:.3g}  window [{fit.t_min}, {fit.t_max}]")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="quantmirror", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one configuration")
    r.add_argument("--config", required=True)
    r.add_argument("--no-quantize", action="store_true", help="perfect channel")
    r.add_argument("--tau", type=int)
    r.add_argument("--horizon", type=int)
    r.add_argument("--out")
    r.add_argument("--no-plot", action="store_true")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run a parameter grid")
    s.add_argument("--grid", required=True)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=_cmd_sweep)

    v = sub.add_parser("validate", help="run the invariant suite")
    v.add_argument("--mutate", choices=[m for m in MUTATIONS if m], help="inject a known defect")
    v.set_defaults(func=_cmd_validate)

    f = sub.add_parser("rates", help="fit the decay exponent of a run CSV")
    f.add_argument("--record", required=True)
    f.add_argument("--t-min", type=int)
    f.set_defaults(func=_cmd_rates)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
