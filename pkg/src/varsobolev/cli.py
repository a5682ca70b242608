"""Command-line entry point.

Exit codes: 0 when every check passes, 1 when some check fails, 2 on a
configuration or runtime error (including per-report errors).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import SUITES, config_schema, load_config
from .errors import VarSobolevError

OUT_ENV = "VARSOBOLEV_OUT"


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="varsobolev", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=SUITES + ("all",))
    v.add_argument("--config", required=True)
    v.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./reports)")
    v.add_argument("--format", choices=("json", "csv", "both"), default="both")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--jobs", type=int, default=1)
    sub.add_parser("schema", help="print the config JSON schema")
    return ap


def _verify(args) -> int:
    # heavy numeric imports only when actually running checks
    from .suites import emit_report, run_suite, summary

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    out = args.out or cfg.output.dir or os.environ.get(OUT_ENV) or "reports"
    formats = ("json", "csv") if args.format == "both" else (args.format,)
    result = run_suite(cfg, args.suite, jobs=max(1, args.jobs))
    paths = emit_report(result, out, formats)
    info = summary(result)
    print(f"{args.suite}: {info['passed']}/{info['reports']} passed, {info['errors']} errors")
    for r in result.reports:
        if not r.passed:
            print(f"  FAIL {r.name}" + (f" ({r.error})" if r.error else ""))
    for p in paths:
        print(f"  wrote {p}")
    if info["errors"]:
        return 2
    return 0 if result.passed else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(config_schema(), indent=2))
        return 0
    try:
        return _verify(args)
    except (VarSobolevError, OSError) as exc:
        print(f"error: {getattr(exc, 'code', 'io-error')}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
