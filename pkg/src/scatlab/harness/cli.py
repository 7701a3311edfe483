"""Command line entry point: ``scatlab run|sweep|check``.

Exit codes: 0 all checks pass, 1 a check failed (or a module error), 2 the
configuration is invalid or exceeds the dimension cap.
"""
from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from ..errors import ConfigInvalid, DimensionCapExceeded, ScatlabError
from .config import load_config
from .report import load_report, revalidate
from .runner import run, sweep

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def shipped_configs() -> dict:
    root = resources.files("scatlab") / "configs"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def resolve_config(arg: str) -> Path:
    """A path, or the name of a shipped config (e.g. ``quartic_smoke``)."""
    path = Path(arg)
    if path.exists():
        return path
    shipped = shipped_configs()
    if arg in shipped:
        return shipped[arg]
    return path


def _parse_values(text: str) -> list:
    out = []
    for i, item in enumerate(text.split(",")):
        item = item.strip()
        try:
            out.append(int(item) if item.lstrip("-").isdigit() else float(item))
        except ValueError:
            raise ConfigInvalid(f"--values[{i}]", f"not a number: {item!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scatlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the checks of a config and write a report")
    p.add_argument("config", help="config path or shipped config name")
    p.add_argument("--out", help="output directory (default: config output.dir)")
    p.add_argument("--workers", type=int, default=None)
    p = sub.add_parser("sweep", help="sweep one axis and write a CSV table")
    p.add_argument("config")
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--function", default=None, help="coupling to sweep (default: g)")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--workers", type=int, default=None)
    p = sub.add_parser("check", help="re-validate the tolerances of a report")
    p.add_argument("report")
    p = sub.add_parser("list", help="list shipped configs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for name, path in sorted(shipped_configs().items()):
                print(f"{name}\t{path}")
            return EXIT_OK
        if args.command == "check":
            try:
                report = load_report(args.report)
                bad = revalidate(report)
            except (OSError, ValueError, KeyError) as exc:
                print(f"error: cannot read report: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            for name, stored, ok in bad:
                print(f"FAIL {name} (stored passed={stored}, recomputed={ok})")
            print(f"{len(report['checks']) - len(bad)}/{len(report['checks'])} records pass")
            return EXIT_FAIL if bad else EXIT_OK
        config = load_config(resolve_config(args.config))
        if args.command == "run":
            report = run(config, args.out, args.workers)
            for r in report.records:
                status = "PASS" if r.passed else "FAIL"
                print(f"{status} {r.name}: value={r.value!r} tol={r.tolerance!r} ({r.comparison})")
            print(f"config {config.name} hash {report.config_hash[:12]}: "
                  f"{'all checks pass' if report.passed else 'FAILED'}")
            return EXIT_OK if report.passed else EXIT_FAIL
        values = _parse_values(args.values)
        fname = args.function or (config.sweep.function if config.sweep else "g")
        table = sweep(config, args.axis, values, args.workers, fname)
        table.write_csv(args.out if args.out else sys.stdout)
        return EXIT_OK
    except (ConfigInvalid, DimensionCapExceeded) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScatlabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
