"""Command-line experiment runner.

Verbs: ``run <config>`` executes the configured experiment and writes
report.json, CSV tables, and SVG plots into the output directory;
``validate <config>`` checks the schema and prints the assumption audit
without running; ``list-models`` prints the built-in model registry;
``version`` prints the package version.

Exit codes (stable): 0 all checks passed; 1 runtime failure or a failed
check; 2 config schema violation; 3 assumption-audit failure for the
requested experiment.

Environment overrides: HAWKESLIM_OUTPUT_DIR replaces output.directory,
HAWKESLIM_WORKERS replaces output.workers.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigurationError, HawkesLimError, SchemaError
from .experiments import audit_for, run_experiment
from .model import builtin_models
from .report import write_csv
from .svg import write_svg

EXIT_PASS = 0
EXIT_RUNTIME = 1
EXIT_SCHEMA = 2
EXIT_ASSUMPTIONS = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hawkeslim",
        description="Simulation and verification toolkit for nonlinear "
        "Hawkes processes in the small-excitation scaling regime.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config", help="path to an INI or JSON config")
    p_val = sub.add_parser(
        "validate", help="check a config and print the assumption audit"
    )
    p_val.add_argument("config", help="path to an INI or JSON config")
    sub.add_parser("list-models", help="print the built-in model registry")
    sub.add_parser("version", help="print the package version")
    return parser


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if v is None:
        return "-"
    return str(v)


def _print_audit(audit, out=None) -> None:
    # resolve the stream at call time so redirection of sys.stdout is honored
    out = out if out is not None else sys.stdout
    print("assumption audit:", file=out)
    for name in sorted(audit.flags):
        status = "ok" if audit.flags[name] else "FAIL"
        line = f"  {name}: {status}"
        if name in audit.reasons:
            line += f"  ({audit.reasons[name]})"
        print(line, file=out)
    print("witnesses:", file=out)
    for key in sorted(audit.witnesses):
        print(f"  {key} = {_fmt_value(audit.witnesses[key])}", file=out)


def _print_checks(report, out=None) -> None:
    out = out if out is not None else sys.stdout
    for check in report.checks:
        verdict = "PASS" if check.passed else "FAIL"
        print(
            f"  [{verdict}] {check.name}: {_fmt_value(check.value)} "
            f"{check.comparator} {_fmt_value(check.threshold)}",
            file=out,
        )


def _cmd_run(config_path: str) -> int:
    try:
        cfg = load_config(config_path)
    except (SchemaError, ConfigurationError) as exc:
        _schema_diagnostic(exc)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_SCHEMA

    audit, failed = audit_for(cfg)
    if failed:
        print(
            f"error: the {cfg.kind} experiment requires assumptions "
            f"{', '.join(failed)} which do not hold for this model:",
            file=sys.stderr,
        )
        for name in failed:
            reason = audit.reasons.get(name, "no reason recorded")
            print(f"  {name}: {reason}", file=sys.stderr)
        return EXIT_ASSUMPTIONS

    try:
        out = run_experiment(cfg)
    except (SchemaError, ConfigurationError) as exc:
        _schema_diagnostic(exc)
        return EXIT_SCHEMA
    except HawkesLimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    report = out.report
    report.results.setdefault("audit", audit.as_dict())
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in cfg.formats:
        target = out_dir / "report.json"
        target.write_text(report.to_json() + "\n", encoding="utf-8")
        written.append(target)
    if "csv" in cfg.formats:
        for name, (header, rows) in out.tables.items():
            target = out_dir / f"{name}.csv"
            with open(target, "w", encoding="utf-8", newline="") as f:
                write_csv(f, header, rows)
            written.append(target)
    if "svg" in cfg.formats:
        for name, fig in out.figures.items():
            target = out_dir / f"{name}.svg"
            write_svg(target, fig, include_timestamp=cfg.include_timestamp)
            written.append(target)

    print(f"{cfg.kind} experiment finished in {report.wall_time_s:.1f} s")
    _print_checks(report)
    for target in written:
        print(f"wrote {target}")
    if not report.passed:
        print("result: FAIL", file=sys.stderr)
        return EXIT_RUNTIME
    print("result: PASS")
    return EXIT_PASS


def _schema_diagnostic(exc) -> None:
    field = getattr(exc, "field", None)
    if field:
        print(f"error: config field {field}: {exc}", file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


def _cmd_validate(config_path: str) -> int:
    try:
        cfg = load_config(config_path)
    except (SchemaError, ConfigurationError) as exc:
        _schema_diagnostic(exc)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    audit, failed = audit_for(cfg)
    _print_audit(audit)
    if failed:
        print(
            f"error: the {cfg.kind} experiment requires assumptions "
            f"{', '.join(failed)} which do not hold",
            file=sys.stderr,
        )
        return EXIT_ASSUMPTIONS
    print("OK")
    return EXIT_PASS


def _cmd_list_models() -> int:
    for name, (kernel, phi, blurb) in sorted(builtin_models().items()):
        print(f"{name}: {blurb} [kernel={kernel.kind}, phi={phi.kind}]")
    return EXIT_PASS


def _cmd_version() -> int:
    from . import __version__

    print(__version__)
    return EXIT_PASS


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.verb == "run":
        return _cmd_run(args.config)
    if args.verb == "validate":
        return _cmd_validate(args.config)
    if args.verb == "list-models":
        return _cmd_list_models()
    if args.verb == "version":
        return _cmd_version()
    raise AssertionError("unreachable verb")


if __name__ == "__main__":
    sys.exit(main())
