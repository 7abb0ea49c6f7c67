"""``radmaxlab`` command line.

Exit codes: 0 success, 1 experiment failure (a partial report is still
emitted), 2 usage error (unknown flag, malformed space, missing config).
"""

from __future__ import annotations

import argparse
import sys

from .._errors import InvalidInputError, RadmaxError
from .config import ExperimentConfig, load_config, parse_p_list, thread_cap
from .experiments import EXPERIMENTS, new_report
from .selftest import run_selftest

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _p_list(text: str) -> list[float]:
    try:
        return parse_p_list(text)
    except (InvalidInputError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer") from exc
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radmaxlab", description="Rademacher maximal function experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    common.add_argument("--seed", type=_u64, metavar="U64")
    common.add_argument("--out", metavar="DIR", help="write <experiment>.<format> and metadata here")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--grid", type=int, metavar="J", dest="J", help="grid depth (2^J cells per axis)")
    common.add_argument("--space", metavar="SPEC", help='e.g. "lq:1.5:8", "hilbert:4", "schatten:2:3"')
    common.add_argument("--p", type=_p_list, metavar="LIST", help="comma-separated exponents")
    common.add_argument("--m", type=int, help="counterexample depth")
    common.add_argument("--ensemble", type=int, help="ensemble size")
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common])
    sub.add_parser("selftest", help="run the exact-identity suite")
    return parser


def _emit(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


def _selftest() -> int:
    results = run_selftest()
    for name, ok, detail in results:
        _emit(f"{'PASS' if ok else 'FAIL'} {name} {detail}\n")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.command == "selftest":
        return _selftest()
    try:
        thread_cap()
        file_values = load_config(args.config) if args.config else {}
        overrides = {k: getattr(args, k) for k in ("seed", "out", "format", "J", "space", "p", "m", "ensemble")}
        cfg = ExperimentConfig.build(args.command, file_values, overrides)
    except InvalidInputError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"radmaxlab: error: {exc}\n")
        return EXIT_USAGE
    try:
        report = EXPERIMENTS[cfg.experiment](cfg)
    except RadmaxError as exc:
        report = new_report(cfg, "aborted")
        report.errors.append(f"{type(exc).__name__}: {exc}")
    if cfg.out:
        path = report.write(cfg.out, cfg.format)
        sys.stderr.write(f"wrote {path}\n")
    else:
        _emit(report.render(cfg.format))
    for err in report.errors:
        sys.stderr.write(f"radmaxlab: {err}\n")
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
