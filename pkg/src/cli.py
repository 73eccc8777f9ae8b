#!/usr/bin/python3
"""Command-line front end for the network bound calculators and campaigns.

    python src/cli.py bounds --config configs/reference_tanh.json
    python src/cli.py verify --config configs/reference_tanh.json --out reports/tanh

``bounds`` prints the uniform bound table for every configured input norm.
``verify`` runs a certification campaign and writes records.csv,
summary.txt and effective_config.json into the output directory.

Exit codes: 0 success (no violations), 1 violations found, 2 configuration,
output-path or internal campaign errors.
"""

import argparse
import io
import json
import logging
import sys
from dataclasses import replace
from typing import Iterable, List, Optional

import numpy as np

from bounds import (
    BoundContext,
    activation_output_bound,
    full_jacobian_bound,
    hessian_block_bound,
    jacobian_block_bound,
    layer_output_bound,
    rho0,
)
from config import Check, ConfigurationError, RunConfig, load_run_config
from network import NetworkSpec
from path_utils import (
    effective_config_filepath,
    get_output_directory,
    is_valid_output_path,
    records_filepath,
    safe_write_text,
    summary_filepath,
)
from verify import SWEEP_CHANGE_LIMIT, CampaignError, CampaignReport, VerificationRecord, run_campaign


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_ERROR = 2

CSV_COLUMNS = ("check", "sample_id", "output_index", "w", "q", "j",
               "observed", "bound_norm_resolved", "bound_uniform", "margin", "violated")


def create_argument_parser() -> argparse.ArgumentParser:
    """Create and configure the argument parser.

    Returns:
        Configured ArgumentParser instance
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        '-c', '--config',
        required=True,
        type=str,
        help="Path to the JSON run config"
    )
    common.add_argument(
        '-q', '--quiet',
        default=False,
        action="store_true",
        help="Suppress the printed tables and summaries"
    )
    common.add_argument(
        '-v', '--verbose',
        default=False,
        action="store_true",
        help="Enable debug logging"
    )

    parser = argparse.ArgumentParser(
        description="Bounds on DNN outputs, Jacobians, Hessians and Taylor remainders",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser(
        "bounds",
        parents=[common],
        help="Print the uniform bound table",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )

    verify = commands.add_parser(
        "verify",
        parents=[common],
        help="Run a certification campaign and write the report",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    verify.add_argument(
        '-o', '--out',
        default=None,
        type=str,
        help="Report directory (overrides the config's output)"
    )
    verify.add_argument(
        '--check',
        action="append",
        default=None,
        choices=[check.value for check in Check],
        help="Check to run; repeat for several (overrides the config's checks)"
    )
    verify.add_argument(
        '-s', '--seed',
        default=None,
        type=int,
        help="Campaign seed (overrides the config's seed)"
    )
    verify.add_argument(
        '-w', '--workers',
        default=None,
        type=int,
        help="Number of worker processes (overrides the config's workers)"
    )
    # harness self-test hook: scales every bound before comparison
    verify.add_argument(
        '--bound-scale',
        default=1.0,
        type=float,
        help=argparse.SUPPRESS
    )

    return parser


def parse_arguments(arg_list=None) -> argparse.Namespace:
    """Parse command line arguments.

    Args:
        arg_list: Optional list of arguments (for testing), uses sys.argv if None

    Returns:
        Parsed arguments namespace
    """
    parser = create_argument_parser()
    return parser.parse_args(arg_list)


def get_run_config(args: argparse.Namespace) -> RunConfig:
    """Load the config file and apply the command-line overrides.

    Raises:
        ConfigurationError: If the file or an override is invalid
    """
    run_config = load_run_config(args.config)

    overrides = {}
    if getattr(args, "out", None) is not None:
        overrides["output"] = args.out
    if getattr(args, "check", None) is not None:
        overrides["checks"] = tuple(dict.fromkeys(args.check))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if not overrides:
        return run_config

    # re-validate so overrides obey the same schema as the file
    return RunConfig.from_dict(replace(run_config, **overrides).to_dict())


def _fmt(value: float) -> str:
    return f"{value:.10g}"


def bounds_table(spec: NetworkSpec, theta_bar: float, input_norms: Iterable[float]) -> str:
    """Uniform bounds (nu_j = theta_bar) for each input norm, as plain text."""
    k = spec.k
    poly = rho0(BoundContext.uniform(spec, theta_bar, 1.0))
    out = io.StringIO()

    out.write("=" * 60 + "\n")
    out.write(f"Bounds for widths {list(spec.widths)}, {spec.activation.value}, theta_bar = {_fmt(theta_bar)}\n")
    out.write("=" * 60 + "\n")
    a2, a1, a0 = poly.coefficients()
    out.write(f"rho0(x) = {a2!r} x^2 + {a1!r} x + {a0!r}\n")

    for norm in input_norms:
        ctx = BoundContext.uniform(spec, theta_bar, float(np.hypot(norm, 1.0)))
        out.write(f"\n||sigma|| = {_fmt(norm)}  (||sigma_a|| = {_fmt(ctx.sigma_a_norm)})\n")
        for j in range(k + 1):
            out.write(f"  layer_output       j={j}          {_fmt(layer_output_bound(j, ctx))}\n")
        for j in range(1, k + 1):
            out.write(f"  activation_output  j={j}          {_fmt(activation_output_bound(j, ctx))}\n")
        for j in range(k + 1):
            out.write(f"  jacobian_block     w={k} j={j}      {_fmt(jacobian_block_bound(k, j, ctx))}\n")
        out.write(f"  full_jacobian                   {_fmt(full_jacobian_bound(ctx))}\n")
        for q in range(k + 1):
            for j in range(k + 1):
                out.write(f"  hessian_block      q={q} j={j}      {_fmt(hessian_block_bound(k, q, j, ctx))}\n")
        out.write(f"  rho0(||sigma||)                 {_fmt(poly(norm))}\n")
    return out.getvalue()


def _csv_field(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records: Iterable[VerificationRecord]) -> str:
    """Render records as CSV with a fixed column order."""
    lines = [",".join(CSV_COLUMNS)]
    for record in records:
        row = (record.check, record.sample_id, record.output_index, record.w, record.q, record.j,
               record.observed, record.bound_norm_resolved, record.bound_uniform,
               record.margin, record.violated)
        lines.append(",".join(_csv_field(value) for value in row))
    return "\n".join(lines) + "\n"


def format_summary(report: CampaignReport) -> str:
    """Deterministic text summary of a campaign (no timing)."""
    config = report.config
    out = io.StringIO()
    out.write("=" * 60 + "\n")
    out.write("         Certification Campaign Summary\n")
    out.write("=" * 60 + "\n")
    out.write(f"  Widths:                    {list(config.spec.widths)}\n")
    out.write(f"  Activation:                {config.spec.activation.value}\n")
    out.write(f"  theta_bar:                 {config.theta_bar!r}\n")
    out.write(f"  Samples per check:         {config.samples}\n")
    out.write(f"  Seed:                      {config.seed}\n")
    out.write(f"  Checks:                    {', '.join(c.value for c in config.checks) or 'none'}\n")
    out.write("-" * 60 + "\n")
    for summary in report.summaries:
        out.write(f"  {summary.kind:<18} records {summary.records:>8}  violations {summary.violations:>6}"
                  f"  min margin {summary.min_margin:.6g}  median margin {summary.median_margin:.6g}\n")
    sweep = report.sweep_summary()
    if sweep is not None:
        out.write(f"  Remainder sweep (||R_s||/s^2, s=1/8 vs s=1/16): {sweep.within_limit}/{sweep.samples}"
                  f" samples change < {SWEEP_CHANGE_LIMIT:.0%}, median {sweep.median_change:.6g},"
                  f" max {sweep.max_change:.6g} -> {'holds' if sweep.holds else 'does not hold'}\n")
    out.write("-" * 60 + "\n")
    out.write(f"  Total violations:          {report.violations}\n")
    out.write(f"  Result:                    {'PASS' if report.passed else 'FAIL'}\n")
    out.write("=" * 60 + "\n")
    return out.getvalue()


def cmd_bounds(run_config: RunConfig, quiet: bool = False) -> int:
    """Print the uniform bound table."""
    table = bounds_table(run_config.network_spec(), run_config.theta_bar, run_config.input_norms)
    if not quiet:
        print(table, end="")
    return EXIT_OK


def cmd_verify(run_config: RunConfig, bound_scale: float = 1.0, quiet: bool = False) -> int:
    """Run a campaign and write the report files.

    Returns:
        EXIT_OK without violations, EXIT_VIOLATIONS with any, EXIT_ERROR if the
        report cannot be written
    """
    output_dir = get_output_directory(run_config.output)
    if not is_valid_output_path(output_dir):
        print(f"Error: output directory {output_dir} is not writable", file=sys.stderr)
        return EXIT_ERROR

    report = run_campaign(run_config.campaign_config(bound_scale))
    summary = format_summary(report)

    written = (
        safe_write_text(records_filepath(output_dir), records_to_csv(report.records))
        and safe_write_text(summary_filepath(output_dir), summary)
        and safe_write_text(effective_config_filepath(output_dir),
                            json.dumps(run_config.to_dict(), indent=2) + "\n")
    )
    if not written:
        print(f"Error: could not write report files to {output_dir}", file=sys.stderr)
        return EXIT_ERROR

    if not quiet:
        print(summary, end="")
        print(f"Report written to {output_dir} ({report.wall_time:.2f}s)")
    return EXIT_OK if report.passed else EXIT_VIOLATIONS


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = parse_arguments(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        run_config = get_run_config(args)
        if args.command == "bounds":
            return cmd_bounds(run_config, quiet=args.quiet)
        return cmd_verify(run_config, bound_scale=args.bound_scale, quiet=args.quiet)
    except ConfigurationError as e:
        print(f"Configuration Error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except CampaignError as e:
        logger.error("Campaign aborted: %s", e)
        print(f"Campaign Error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
