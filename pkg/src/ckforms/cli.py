"""``verify``: run check suites on a metric and write a JSON report.

Exit codes: 0 when every check passes, 1 when any check fails, 2 for a
configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .harness import SUITES, ConfigError, SuiteConfig, list_checks, run_suite

__all__ = ["main", "build_parser"]


def _int_range(text: str) -> tuple[int, ...]:
    """'2' -> (2,), '1,3' -> (1, 2, 3)."""
    try:
        parts = [int(p) for p in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected K or K,K2, got {text!r}") from exc
    if len(parts) == 1:
        return (parts[0],)
    if len(parts) == 2 and parts[0] <= parts[1]:
        return tuple(range(parts[0], parts[1] + 1))
    raise argparse.ArgumentTypeError(f"expected K or K,K2 with K <= K2, got {text!r}")


def _signature(text: str) -> tuple[int, int]:
    try:
        p, q = (int(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected P,Q, got {text!r}") from exc
    return p, q


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="verify", description="Check conformal Killing form identities on a metric.")
    ap.add_argument("--metric", default="flat(4)", help="builtin name such as 'schwarzschild(1)' or a .toml/.json file")
    ap.add_argument("--dim", type=int, default=None, help="expected dimension")
    ap.add_argument("--signature", type=_signature, default=None, help="expected signature P,Q")
    ap.add_argument("--k", type=_int_range, default=(), help="form degree K or range K,K2 (default: all)")
    ap.add_argument("--l", type=_int_range, default=(), help="helicity shift L or range L,L2 (default: all admissible)")
    ap.add_argument("--points", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--atol", type=float, default=1e-6)
    ap.add_argument("--rtol", type=float, default=1e-6)
    ap.add_argument("--jet-order", type=int, default=3)
    ap.add_argument("--suite", action="append", choices=SUITES + ("all",), help="repeatable; default all")
    ap.add_argument("--out", default=None, help="write the JSON report here")
    ap.add_argument("--mutate", default=None, metavar="CHECK_ID", help="perturb one check's formula (self-test)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--list-checks", action="store_true", help="print check ids and anchors, then exit")
    ap.add_argument("--quiet", action="store_true")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    if args.list_checks:
        for c in list_checks():
            extra = f"  [mutation: {c['mutation']}]" if c["mutation"] else ""
            print(f"{c['id']:34s} {c['suite']:10s} {c['anchor']}{extra}")
        return 0
    cfg = SuiteConfig(
        metric=args.metric,
        dim=args.dim,
        signature=args.signature,
        ks=args.k,
        ls=args.l,
        points=args.points,
        seed=args.seed,
        atol=args.atol,
        rtol=args.rtol,
        jet_order=args.jet_order,
        suites=tuple(args.suite or ("all",)),
        mutate=args.mutate,
        workers=args.workers,
    )
    try:
        report = run_suite(cfg)
    except ConfigError as exc:
        print(f"verify: configuration error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        report.write(args.out)
    if not args.quiet:
        for r in report.results:
            flag = "PASS" if r.passed else "FAIL"
            print(f"{flag} {r.id:34s} max={r.max_residual:.3e} tol={r.tolerance:.1e} ({r.kind})")
        for s in report.skipped:
            print(f"SKIP {s['id']:34s} {s['reason']}")
    return 0 if report.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
