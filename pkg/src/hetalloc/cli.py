"""hetalloc-sim: run GNE / CHE / equal-time sweeps from a scenario file."""

from __future__ import annotations

import argparse
import sys

from hetalloc.scenario import ScenarioError, bundled_path, load_scenario
from hetalloc.sweep import SweepSpec, emit_report, run_sweep

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3


def _csv_list(conv):
    def parse(text):
        try:
            vals = [conv(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list: {text!r}") from None
        if not vals:
            raise argparse.ArgumentTypeError("empty list")
        return vals
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetalloc-sim", description=__doc__)
    p.add_argument("--scenario", default=None,
                   help="scenario file (default: bundled reference)")
    p.add_argument("--sizes", type=_csv_list(int), help="network sizes, e.g. 1000,2000")
    p.add_argument("--mu", type=_csv_list(float), help="level-0 mean as multiples of tau_0_LB")
    p.add_argument("--samples", type=int, help="replicates per point")
    p.add_argument("--seed", type=int)
    p.add_argument("--solvers", type=_csv_list(str.strip), help="subset of gne,che,equal")
    p.add_argument("--out", default="-", help="output path, - for stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_VALIDATION
    try:
        sc = load_scenario(args.scenario or bundled_path())
        spec = SweepSpec.from_scenario(sc, sizes=args.sizes, mu_multipliers=args.mu,
                                       samples=args.samples, seed=args.seed,
                                       solvers=args.solvers)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    rows = run_sweep(spec, sc, workers=max(1, args.workers))
    try:
        emit_report(rows, args.format, args.out)
    except OSError as e:
        print(f"error: cannot write {args.out}: {e.strerror}", file=sys.stderr)
        return EXIT_VALIDATION
    if rows and not any(r.feasible for r in rows):
        print("error: every sweep point is infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
