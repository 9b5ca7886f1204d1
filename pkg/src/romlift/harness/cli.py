"""``romlift`` command line: run, verify, rate, dump-config.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure
(including failed verify checks), 3 file system errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import NumericalError, ValidationError
from .config import preset_names, preset_text, resolve
from .experiment import fit_rate, read_convergence, run_experiment
from .verify import verify_suite

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_run(args):
    cfg = resolve(args.config)
    out = Path(args.output or cfg.output_dir)
    rec = run_experiment(cfg, n_values=args.n, output_dir=out)
    print(f"{'n':>6} {'tau':>12} {'lift_error':>12} {'best_error':>12} "
          f"{'lift_vs_proj':>12} {'kappa':>10} {'eps':>10}")
    for r in rec.rows:
        print(f"{r.n:>6} {r.tau:>12.5e} {r.lift_error:>12.5e} {r.best_error:>12.5e} "
              f"{r.lift_vs_projection:>12.5e} {r.kappa:>10.3e} {r.eps:>10.3e}")
    if len(rec.rows) >= 3:
        for col in ("lift_error", "best_error"):
            print(f"slope({col}) = {rec.fit(col).slope:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_verify(args):
    rep = verify_suite(args.preset, n=args.n)
    print(rep.table())
    return EXIT_OK if rep.ok else EXIT_NUMERICAL


def cmd_rate(args):
    data = read_convergence(args.csv)
    if args.column not in data:
        raise ValidationError(f"no column {args.column!r} in {args.csv}")
    fit = fit_rate(data["tau"], data[args.column])
    if args.json:
        print(json.dumps(fit.to_dict(), sort_keys=True))
    else:
        print(f"slope = {fit.slope:.6f}")
        print(f"intercept = {fit.intercept:.6f}")
        print("halving ratios = " + ", ".join(f"{v:.4f}" for v in fit.ratios))
    return EXIT_OK


def cmd_dump(args):
    sys.stdout.write(preset_text(args.preset))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="romlift", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a convergence study")
    p.add_argument("config", help="config file or preset name")
    p.add_argument("-o", "--output", help="output directory (default: output_dir key)")
    p.add_argument("--n", type=_int_list, help="subset of n values, comma separated")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="check invariants on a preset")
    p.add_argument("preset", nargs="?", default="step-desk",
                   help="preset name or config file (default step-desk)")
    p.add_argument("--n", type=int, help="snapshot count (default: smallest in preset)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("rate", help="fit log-log slope from convergence.csv")
    p.add_argument("csv")
    p.add_argument("--column", default="lift_error")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("dump-config", help="print a bundled preset")
    p.add_argument("preset", choices=preset_names())
    p.set_defaults(func=cmd_dump)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
