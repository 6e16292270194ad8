"""Command line: ``kinvec run|verify <config>`` and ``kinvec fit <csv> --window a b``.

Exit codes: 0 success, 2 parse or input error, 3 solver abort, 4 invariant failure.
The thread count comes from ``KINVEC_NUM_THREADS``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .config import ConfigError, load
from .fitting import fit_decay_exponent
from .scenario import EXIT_OK, EXIT_PARSE, read_series, run_scenario
from .threads import num_threads

log = logging.getLogger("kinvec")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinvec", description="Phase-space diagnostics for transport and Vlasov-Poisson.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, text in (("run", "run a scenario and write all series"), ("verify", "check invariants only")):
        s = sub.add_parser(verb, help=text)
        s.add_argument("config", help="flat key = value scenario file")
    f = sub.add_parser("fit", help="fit a power law to a t,value CSV")
    f.add_argument("csv")
    f.add_argument("--window", nargs=2, type=float, required=True, metavar=("A", "B"))
    return p


def _scenario(args, verify_only: bool) -> int:
    try:
        num_threads()
        cfg = load(args.config)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    log.info("running %s (%s)", cfg.name, cfg.solver)
    res = run_scenario(cfg, verify_only=verify_only)
    for name, inv in sorted(res.invariants.items()):
        print(f"{'PASS' if inv['passed'] else 'FAIL'} {name} value={inv['value']} threshold={inv['threshold']}")
    if res.message:
        print(f"abort: {res.message}", file=sys.stderr)
    print(f"status={res.status} output={cfg.output_path}")
    return res.exit_code


def _fit(args) -> int:
    try:
        rows = read_series(args.csv)
        fit = fit_decay_exponent(rows, tuple(args.window))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    print(json.dumps(fit.as_dict(), sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.verb == "fit":
        return _fit(args)
    return _scenario(args, verify_only=args.verb == "verify")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
