#!/usr/bin/env python3
"""
Command-line interface for rkcq-scatter.
Runs the tableau checks, weight dumps, convergence study, sector scan and
manufactured-solution check from a flat key=value config.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from . import __version__, get_rkcq_logger
from .bem2d import dtn_apply, dti_apply, indirect_apply, manufactured_dtn_error, operator_norm
from .butcher import get_tableau, validate
from .config import RunConfig
from .cq import StageGrid, Symbol, convergence_rate, scalar_convergence, weights
from .exceptions import ConfigurationError, RKCQError, TableauError
from .plotting import plot_convergence, predicted_rate
from .timedomain import floor_filtered_rate, solve_schemes

logger = get_rkcq_logger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

CONVERGENCE_COLUMNS = ["method", "tableau", "N", "k", "max_energy_error", "pair_rate"]
SCAN_COLUMNS = ["s_re", "s_im", "norm_dtn", "norm_dti"]
FLOAT_FORMAT = "%.16e"

SCALAR_SYMBOLS = {
    "identity": (lambda s: 1.0, 0),
    "derivative": (lambda s: s, 1),
    "integral": (lambda s: 1.0 / s, -1),
    "square": (lambda s: s * s, 2),
    "resolvent": (lambda s: 1.0 / (s + 1.0), None),
}


def _write_frame(frame: pd.DataFrame, path: Path, append: bool = False) -> None:
    frame.to_csv(path, mode="a" if append else "w", header=not append, index=False,
                 float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")


def _load_config(args) -> RunConfig:
    overrides = {"threads": args.threads, "radius": args.radius, "out_dir": args.out}
    if args.config:
        return RunConfig.from_file(args.config, **overrides)
    return RunConfig.from_text("", **overrides)


def _out_dir(config: RunConfig) -> Path:
    path = Path(config.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_validate_tableau(args) -> int:
    """Print the validation report of a tableau; exit 0 iff every check passes."""
    tableau = get_tableau(args.id)
    report = validate(tableau)
    print(f"🔬 {tableau.describe()}\n")
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_FAILURE


def cmd_weights(args) -> int:
    """Dump CQ weights of a scalar symbol; optionally measure its convergence rate."""
    tableau = get_tableau(args.tableau)
    fn, mu = SCALAR_SYMBOLS[args.symbol]
    symbol = Symbol.scalar(args.symbol, fn)
    grid = StageGrid(args.step, args.steps, tableau.c)
    sequence = weights(symbol, tableau, grid, radius=args.radius or "auto", oversampling=args.oversampling)
    out = Path(args.out or "weights.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    sequence.to_csv(out)
    print(f"💾 {sequence.size} weights of {args.symbol} for {tableau.name} written to: {out}")

    if args.check_rate:
        if mu is None:
            raise ConfigurationError(f"Rate check needs a power symbol; '{args.symbol}' is not one")
        ladder = [int(n) for n in args.ladder.split(",")]
        fit = convergence_rate(scalar_convergence(mu, tableau, ladder, oversampling=max(args.oversampling, 3)))
        expected = min(tableau.p, tableau.q + 1 - mu)
        print(f"\n📊 Scalar rate check for s^{mu} (expected {expected}):")
        for k, err, rate in fit.rows():
            print(f"   k={k:.5f}  error={err:.3e}  rate={'' if rate is None else f'{rate:.2f}'}")
        print(f"   least-squares slope: {fit.slope:.3f}")
    return EXIT_OK


def _spatial_floor(config: RunConfig, space, reference_scale: float) -> float:
    result = manufactured_dtn_error(space, config.manufactured_s, config.source_point)
    scale = 1.0 if config.normalize_errors else reference_scale
    return config.floor_factor * result.relative_error * scale


def cmd_convergence(args) -> int:
    """Run the ladder for every requested method, write CSV, fit and SVG."""
    config = _load_config(args)
    out_dir = _out_dir(config)
    config.write_resolved(out_dir)
    tableau = config.build_tableau()
    space = config.build_space()
    wave = config.build_wave()
    csv_path = out_dir / "convergence.csv"
    print(f"🔬 Convergence study: {tableau.name}, {space.n_dofs} dofs, T={config.final_time}, "
          f"ladder {config.ladder}")

    rows: List[dict] = []
    last_error = {}
    reference_scale = 0.0
    for N in config.ladder:
        grid = StageGrid.from_final_time(config.final_time, N, tableau.c)
        try:
            runs = solve_schemes(config.methods, tableau, grid, space, wave,
                                 radius=config.radius or "auto", oversampling=config.oversampling,
                                 threads=config.threads, normalize=config.normalize_errors)
        except Exception as exc:
            if not rows:
                _write_frame(pd.DataFrame(columns=CONVERGENCE_COLUMNS), csv_path)
            if isinstance(exc, RKCQError):
                logger.error("Run %s N=%d failed: %s", tableau.name, N, exc)
            else:
                logger.exception("Run %s N=%d failed unexpectedly", tableau.name, N)
            print(f"❌ Run {tableau.name} N={N} failed: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        batch = []
        for method in config.methods:
            run = runs[method]
            reference_scale = max(reference_scale, run.reference_scale)
            rate = np.nan
            if method in last_error:
                k_prev, e_prev = last_error[method]
                rate = float(np.log(e_prev / run.max_error) / np.log(k_prev / grid.k))
            last_error[method] = (grid.k, run.max_error)
            batch.append({"method": method, "tableau": tableau.name, "N": N, "k": grid.k,
                          "max_energy_error": run.max_error, "pair_rate": rate})
            print(f"   {method:>14s} N={N:5d}  error={run.max_error:.3e}"
                  + ("" if np.isnan(rate) else f"  rate={rate:.2f}"))
        _write_frame(pd.DataFrame(batch, columns=CONVERGENCE_COLUMNS), csv_path, append=bool(rows))
        rows.extend(batch)

    frame = pd.DataFrame(rows, columns=CONVERGENCE_COLUMNS)
    print(f"\n💾 Results saved to: {csv_path}")
    if len(config.ladder) < 2:
        logger.warning("Ladder has a single step count; no convergence rate can be fitted")
        print("⚠️  Single ladder entry: no rate fitted")
        return EXIT_OK

    floor = _spatial_floor(config, space, reference_scale)
    fits = []
    print(f"\n📊 Fitted rates (error floor {floor:.3e}):")
    for method, group in frame.groupby("method", sort=False):
        fit = floor_filtered_rate(group["k"].to_numpy(), group["max_energy_error"].to_numpy(), floor)
        expected = predicted_rate(method, tableau)
        slope = np.nan if fit is None else fit.slope
        fits.append({"method": method, "tableau": tableau.name, "predicted_rate": expected,
                     "fitted_rate": slope, "points_used": 0 if fit is None else len(fit.steps),
                     "error_floor": floor})
        shown = "n/a (fewer than one pair above the floor)" if fit is None else f"{slope:.2f}"
        print(f"   {method:>14s}: {shown} (predicted {expected})")
    _write_frame(pd.DataFrame(fits), out_dir / "convergence_fit.csv")
    svg = plot_convergence(frame, tableau, out_dir / "convergence.svg")
    print(f"💾 Plot saved to: {svg}")
    return EXIT_OK


def _scan_operator_norm(space, apply) -> float:
    """H^1 -> H^-1/2 proxy: V(1) on the output, M + S over continuous inputs."""
    ops = space.operators
    return operator_norm(space, apply, ops.energy, ops.mass.entries + ops.stiffness.entries,
                         basis=space.continuous_basis)


def cmd_bound_scan(args) -> int:
    """Discrete H^1 -> H^-1/2 norms of DtN^- and DtI^- over the sector grid."""
    config = _load_config(args)
    out_dir = _out_dir(config)
    config.write_resolved(out_dir)
    space = config.build_space()
    print(f"🔬 Sector scan on {space.n_dofs} dofs, sigma0={config.sigma0}, delta={config.delta}")
    rows, indirect_rows = [], []
    for s in config.scan_frequencies():
        norm_dtn = _scan_operator_norm(space, lambda x: dtn_apply(space, s, x))
        norm_dti = _scan_operator_norm(space, lambda x: dti_apply(space, s, x))
        rows.append({"s_re": s.real, "s_im": s.imag, "norm_dtn": norm_dtn, "norm_dti": norm_dti})
        print(f"   s={s:.4g}  |DtN|={norm_dtn:.4e}  |DtI|={norm_dti:.4e}")
        if config.scan_indirect:
            norm = _scan_operator_norm(space, lambda x: indirect_apply(space, s, x))
            indirect_rows.append({"s_re": s.real, "s_im": s.imag, "norm_indirect": norm})
        space.operators.clear()
    _write_frame(pd.DataFrame(rows, columns=SCAN_COLUMNS), out_dir / "bound_scan.csv")
    if indirect_rows:
        _write_frame(pd.DataFrame(indirect_rows), out_dir / "bound_scan_indirect.csv")
    print(f"💾 Results saved to: {out_dir / 'bound_scan.csv'}")
    return EXIT_OK


def cmd_manufactured(args) -> int:
    """Frequency-domain DtN check against the fundamental solution, under h-halving."""
    config = _load_config(args)
    out_dir = _out_dir(config)
    config.write_resolved(out_dir)
    rows = []
    print(f"🔬 Manufactured DtN check at s={config.manufactured_s}, source {config.source_point}")
    for level in range(config.refinements + 1):
        space = config.build_space(level)
        result = manufactured_dtn_error(space, config.manufactured_s, config.source_point)
        rows.append(result._asdict())
        print(f"   dofs={result.n_dofs:6d}  h={result.max_h:.4f}  relative energy error={result.relative_error:.3e}")
    errors = [row["relative_error"] for row in rows]
    if any(b >= a for a, b in zip(errors, errors[1:])):
        logger.warning("Manufactured error does not decrease monotonically: %s", errors)
        print("⚠️  Error is not monotonically decreasing under refinement")
    _write_frame(pd.DataFrame(rows), out_dir / "manufactured.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rkcq-scatter",
        description="rkcq-scatter - Runge-Kutta convolution quadrature for 2D wave scattering",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to a key=value config file")
    common.add_argument("--out", help="Output directory (overrides out_dir)")
    common.add_argument("--threads", type=int, help="Worker threads over frequencies")
    common.add_argument("--radius", type=float, help="Contour radius in (0, 1) (default: auto)")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    validate_parser = subparsers.add_parser("validate-tableau", parents=[common],
                                            help="Check a Runge-Kutta tableau")
    validate_parser.add_argument("id", help="Tableau id, e.g. radau-iia-3")

    weights_parser = subparsers.add_parser("weights", parents=[common], help="Dump CQ weights of a scalar symbol")
    weights_parser.add_argument("--tableau", default="radau-iia-2")
    weights_parser.add_argument("--symbol", choices=sorted(SCALAR_SYMBOLS), default="integral")
    weights_parser.add_argument("--step", type=float, default=0.1, help="Time step k")
    weights_parser.add_argument("--steps", type=int, default=32, help="Number of steps N")
    weights_parser.add_argument("--oversampling", type=int, default=1)
    weights_parser.add_argument("--check-rate", action="store_true",
                                help="Measure the scalar convergence rate on sin^4")
    weights_parser.add_argument("--ladder", default="40,80,160,320")

    subparsers.add_parser("convergence", parents=[common], help="Standard vs differentiated convergence study")
    subparsers.add_parser("bound-scan", parents=[common], help="Operator-norm scan over the sector")
    subparsers.add_parser("manufactured", parents=[common], help="Frequency-domain DtN check")
    return parser


COMMANDS = {
    "validate-tableau": cmd_validate_tableau,
    "weights": cmd_weights,
    "convergence": cmd_convergence,
    "bound-scan": cmd_bound_scan,
    "manufactured": cmd_manufactured,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, TableauError) as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RKCQError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
