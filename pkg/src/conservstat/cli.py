"""Command line entry point: ``conservstat {solve,verify,roundtrip}``.

Exit codes: 0 success, 2 solver non-convergence, 3 obstruction (no solution
exists), 4 configuration or parse error, 5 output error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline as P


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(P.EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="conservstat",
                 description="Normalized conservative statistical structures from moduli data.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON job configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides outputs.dir)")
        p.add_argument("--grid", type=int, help="override nx = ny = N")
        p.add_argument("--quiet", action="store_true", help="only set the exit code")

    for name, help_ in (("solve", "solve for the metric and check every identity"),
                        ("roundtrip", "solve, then recover the moduli data from (C, g)")):
        common(sub.add_parser(name, help=help_))
    pv = sub.add_parser("verify", help="check an externally supplied (C, g) without solving")
    common(pv)
    pv.add_argument("--fields", type=Path, help="directory with field dumps and fields.json")
    return ap


def _summary(report: dict, exit_code: int) -> str:
    lines = [f"mode={report['mode']} chart={report['chart']['kind']} "
             f"{report['chart']['nx']}x{report['chart']['ny']} exit={exit_code}"]
    solver = report.get("solver")
    if solver:
        lines.append(f"converged={solver['converged']} iterations={solver['iterations']} "
                     f"obstruction={solver['obstruction_detected']}")
    for key, v in report["panel"].items():
        lines.append(f"  {key:<26} sup={v['sup']:.3e}  l2={v['l2']:.3e}")
    lines.append("verdicts: " + ", ".join(f"{k}={v}" for k, v in report["verdicts"].items()))
    return "\n".join(lines)


def _run(args) -> int:
    cfg = None
    if args.config is not None:
        cfg = P.JobConfig.load(args.config, grid=args.grid)
    elif args.command != "verify":
        raise P.ConfigError(f"{args.command} needs --config")

    if args.command == "verify":
        if args.fields is not None:
            chart, fields = P.load_fields(args.fields)
            result = P.run_verify(chart, fields, cfg.thresholds if cfg else None)
        elif cfg is not None:
            result = P.verify_config(cfg)
        else:
            raise P.ConfigError("verify needs --fields or --config")
    elif args.command == "solve":
        result = P.run_forward(cfg)
    else:
        result = P.run_roundtrip(cfg)

    out_dir = args.out or (cfg.out_dir if cfg else None)
    if out_dir is not None:
        P.write_report(result.report, Path(out_dir) / "report.json")
        if cfg is not None and cfg.dump and result.fields is not None:
            P.dump_fields(cfg.chart, result.fields, Path(out_dir) / "fields")
    if not args.quiet:
        if out_dir is None:
            sys.stdout.write(P.report_json(result.report))
        else:
            print(_summary(result.report, result.exit_code))
    return result.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except P.ConfigError as e:
        print(f"conservstat: configuration error: {e}", file=sys.stderr)
        return P.EXIT_CONFIG
    except P.OutputError as e:
        print(f"conservstat: output error: {e}", file=sys.stderr)
        return P.EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
