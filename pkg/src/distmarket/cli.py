"""Command line entry point: ``distmarket run | validate | sweep``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import AwardError, InfeasibleError, ScenarioError, StageError
from .market_core import load_scenario
from .pipeline import run, run_penalty_sweep, write_sweep

EXIT_OK, EXIT_SCENARIO, EXIT_INFEASIBLE = 0, 2, 3


def _multipliers(text):
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("multipliers must be nonnegative numbers")
    return vals


def _penalty_mode(text):
    return {"positive": "positive_only", "positive_only": "positive_only", "absolute": "absolute"}[text]


def build_parser():
    p = argparse.ArgumentParser(prog="distmarket", description="Market-based vs price-based microgrid scheduling")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one or both scheduling schemes")
    r.add_argument("--scenario", required=True)
    r.add_argument("--mode", choices=("market", "price", "both"))
    r.add_argument("--penalty-mult", type=_multipliers, help="comma-separated, e.g. 1,2,5")
    r.add_argument("--penalty-mode", type=_penalty_mode, choices=("positive_only", "absolute"),
                   help="positive or absolute")
    r.add_argument("--out", help="output directory (default: scenario's output_dir)")
    r.add_argument("--workers", type=int, default=4)

    v = sub.add_parser("validate", help="load and validate a scenario")
    v.add_argument("--scenario", required=True)

    s = sub.add_parser("sweep", help="deviation-penalty sweep with the ISO award held fixed")
    s.add_argument("--scenario", required=True)
    s.add_argument("--penalty-mult", type=_multipliers)
    s.add_argument("--penalty-mode", type=_penalty_mode, choices=("positive_only", "absolute"))
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=4)
    return p


def _out_dir(args, scenario):
    if args.out:
        return args.out
    out = scenario.config.output_dir
    return out if os.path.isabs(out) else os.path.join(args.scenario, out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        scenario = load_scenario(args.scenario)
        if args.command == "validate":
            net, units, mgs, cfg = scenario
            print(f"ok: {len(net.buses)} buses, {len(net.lines)} lines, {len(units)} units, "
                  f"{len(mgs)} microgrids, horizon {cfg.horizon}")
            return EXIT_OK
        out = _out_dir(args, scenario)
        if args.command == "run":
            _, summary = run(scenario, out, args.mode, args.penalty_mult, args.penalty_mode, args.workers)
            table = {k: v["totals"] for k, v in summary["schemes"].items()}
            print(json.dumps({"out": out, "totals": table, "comparison": summary.get("comparison")}, indent=2))
        else:
            rows = run_penalty_sweep(scenario, args.penalty_mult, args.penalty_mode, args.workers)
            write_sweep(rows, out)
            for r in rows:
                print(f"x{r['multiplier']:g} {r['microgrid']}: deviation {r['deviation_mwh']:.3f} MWh, "
                      f"cost {r['deviation_cost']:.2f} $, objective {r['objective']:.2f} $")
        return EXIT_OK
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, ScenarioError):
            return EXIT_SCENARIO
        if isinstance(exc.cause, (InfeasibleError, AwardError)):
            return EXIT_INFEASIBLE
        return 1
    except (InfeasibleError, AwardError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
