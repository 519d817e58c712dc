"""Command-line front end: solve, certify, levelsets, scan, gap, list.

Reports go to stdout as ``key=value`` lines, log lines to stderr and the log
file. Exit codes: 0 success or pass, 1 failed certificate or no convergence,
2 usage, configuration or input error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from common.constants import (
    LEVELSETS_FILENAME,
    PGM_FILENAME,
    REPORT_ANISOTROPY,
    REPORT_CONVERGED,
    REPORT_DUAL,
    REPORT_FILENAME,
    REPORT_GAP,
    REPORT_ITERS_USED,
    REPORT_N,
    REPORT_PRIMAL,
    REPORT_RELATIVE_GAP,
    REPORT_SCENARIO,
    U_FILENAME,
    Z_STEM,
)
from common.logging_setup import setup_logging
from least_gradient.anisotropy import MetricIntegrand
from least_gradient.certify import CertifyTolerances, verify_calibration
from least_gradient.config import APP_NAME, Settings, load_settings
from least_gradient.errors import LeastGradientError
from least_gradient.grid import (
    DomainGrid,
    FaceSet,
    load_field,
    load_vector_field,
    save_field,
    save_pgm,
    save_vector_field,
)
from least_gradient.levelset import (
    continuity_scan,
    extract_levelsets,
    jump_levels,
    save_levelsets_csv,
    segment_check,
)
from least_gradient.operators import GradientOperator
from least_gradient.scenarios import (
    Scenario,
    get_scenario,
    list_scenarios,
    rasterize_scenario,
    scenario_integrand,
)
from least_gradient.solver import INIT_RANDOM, INIT_ZEROS, SolveConfig, solve

logger = logging.getLogger(APP_NAME)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _add_common(sub: argparse.ArgumentParser, needs_u: bool = True) -> None:
    sub.add_argument("--scenario", required=True, help="built-in scenario name (see 'list')")
    sub.add_argument("--n", type=int, help="cells per unit length")
    sub.add_argument("--anisotropy", help="euclidean | weighted:<path> | p1 | p2 | pinf")
    if needs_u:
        sub.add_argument("--u", required=True, help="scalar field CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="least-gradient",
        description="Anisotropic least gradient problems with a partial Dirichlet datum.",
    )
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--log-dir", dest="log_dir", help="directory for log files")
    commands = parser.add_subparsers(dest="command", required=True)

    p_solve = commands.add_parser("solve", help="run the primal-dual solver")
    _add_common(p_solve, needs_u=False)
    p_solve.add_argument("--tol", type=float, dest="gap_tol", help="relative gap tolerance")
    p_solve.add_argument("--max-iters", type=int, dest="max_iters")
    p_solve.add_argument("--log-every", type=int, dest="log_every")
    p_solve.add_argument("--seed", type=int)
    p_solve.add_argument("--init", choices=(INIT_ZEROS, INIT_RANDOM), default=INIT_ZEROS)
    p_solve.add_argument("--out", required=True, help="output directory")

    p_certify = commands.add_parser("certify", help="verify a calibration pair (u, z)")
    _add_common(p_certify)
    p_certify.add_argument("--zx", required=True)
    p_certify.add_argument("--zy", required=True)

    p_levels = commands.add_parser("levelsets", help="extract level curves of u")
    _add_common(p_levels)
    p_levels.add_argument("--levels", required=True, help="comma separated, e.g. 0.25,0.5")
    p_levels.add_argument("--out", required=True)

    p_scan = commands.add_parser("scan", help="continuity and trace diagnostics of u")
    _add_common(p_scan)

    p_gap = commands.add_parser("gap", help="primal and dual objectives of (u, z)")
    _add_common(p_gap)
    p_gap.add_argument("--zx", required=True)
    p_gap.add_argument("--zy", required=True)

    commands.add_parser("list", help="list built-in scenarios")
    return parser


def _parse_levels(raw: str) -> List[float]:
    try:
        levels = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid --levels '{raw}': {e}") from e
    if not levels or not all(np.isfinite(levels)):
        raise argparse.ArgumentTypeError(f"invalid --levels '{raw}'")
    return levels


def _settings(args: argparse.Namespace) -> Settings:
    overrides = {
        key: getattr(args, key, None)
        for key in ("n", "max_iters", "gap_tol", "log_every", "seed", "anisotropy", "log_dir")
    }
    return load_settings(args.config, overrides)


def _tolerances(settings: Settings) -> CertifyTolerances:
    return CertifyTolerances(
        feas=settings.tol_feas,
        div_flux=settings.tol_div_flux,
        pair=settings.tol_pair,
        sign=settings.tol_sign,
        jump_fraction=settings.jump_fraction,
        exclusion_factor=settings.exclusion_factor,
    )


def _setup(
    args: argparse.Namespace, settings: Settings
) -> Tuple[Scenario, DomainGrid, FaceSet, MetricIntegrand]:
    scenario = get_scenario(args.scenario)
    grid, faces = rasterize_scenario(scenario, settings.n)
    anisotropy = args.anisotropy or (
        settings.anisotropy if args.config else scenario.anisotropy
    )
    m = scenario_integrand(scenario, grid, anisotropy)
    return scenario, grid, faces, m


def _print_lines(lines: Dict[str, object]) -> str:
    text = "\n".join(f"{key}={value}" for key, value in lines.items())
    print(text)
    return text


def _cmd_solve(args: argparse.Namespace, settings: Settings) -> int:
    scenario, grid, faces, m = _setup(args, settings)
    cfg = SolveConfig(
        max_iters=settings.max_iters,
        gap_tol=settings.gap_tol,
        theta=settings.theta,
        seed=settings.seed,
        init=args.init,
        log_every=settings.log_every,
    )
    report = solve(m, grid, faces, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_field(out / U_FILENAME, grid, report.u)
    save_vector_field(out / Z_STEM, grid, report.z)
    save_pgm(out / PGM_FILENAME, grid, report.u)
    text = _print_lines(
        {
            REPORT_SCENARIO: scenario.name,
            REPORT_N: settings.n,
            REPORT_ANISOTROPY: m.kind,
            REPORT_PRIMAL: repr(report.primal),
            REPORT_DUAL: repr(report.dual),
            REPORT_GAP: repr(report.gap),
            REPORT_RELATIVE_GAP: repr(report.relative_gap),
            REPORT_CONVERGED: "true" if report.converged else "false",
            REPORT_ITERS_USED: report.iters_used,
        }
    )
    (out / REPORT_FILENAME).write_text(text + "\n", encoding="utf-8")
    logger.info(f"Wrote results to {out}")
    return EXIT_OK if report.converged else EXIT_FAIL


def _load_pair(
    args: argparse.Namespace, grid: DomainGrid
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    return load_field(args.u, grid), load_vector_field(args.zx, args.zy, grid)


def _cmd_certify(args: argparse.Namespace, settings: Settings) -> int:
    scenario, grid, faces, m = _setup(args, settings)
    u, z = _load_pair(args, grid)
    report = verify_calibration(m, grid, faces, u, z, _tolerances(settings), scenario.singular)
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_levelsets(args: argparse.Namespace, settings: Settings) -> int:
    levels = _parse_levels(args.levels)
    _, grid, faces, m = _setup(args, settings)
    u = load_field(args.u, grid)
    if settings.skip_jump_levels:
        lo, hi = faces.f_range()
        flags = jump_levels(grid, u, levels, settings.hotspot_fraction * (hi - lo))
        skipped = [t for t, jump in zip(levels, flags) if jump]
        if skipped:
            logger.info(f"Skipping jump levels {skipped}")
        levels = [t for t, jump in zip(levels, flags) if not jump]
    curves = extract_levelsets(grid, u, levels)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_levelsets_csv(out / LEVELSETS_FILENAME, curves)
    isotropic = m.kind in ("euclidean", "p2")
    for curve in curves:
        line = f"t={curve.t:g} polylines={len(curve.polylines)}"
        if isotropic and curve.polylines:
            line += f" max_deviation={max(segment_check(curve, m)):.6g}"
        print(line)
    return EXIT_OK


def _cmd_scan(args: argparse.Namespace, settings: Settings) -> int:
    scenario, grid, faces, _ = _setup(args, settings)
    u = load_field(args.u, grid)
    lo, hi = faces.f_range()
    report = continuity_scan(
        grid,
        faces,
        u,
        exclusion_radius=settings.exclusion_factor * grid.h,
        hotspot_thresh=settings.hotspot_fraction * (hi - lo),
        extra_singular=scenario.singular,
    )
    print(report.to_text())
    return EXIT_OK


def _cmd_gap(args: argparse.Namespace, settings: Settings) -> int:
    _, grid, faces, m = _setup(args, settings)
    u, z = _load_pair(args, grid)
    op = GradientOperator(grid, faces)
    zz = np.where(op.active, z, 0.0)
    primal = op.primal(m, np.where(grid.inside, u, 0.0))
    dual = op.dual(zz)
    lo, hi = faces.f_range()
    _print_lines(
        {
            REPORT_PRIMAL: repr(primal),
            REPORT_DUAL: repr(dual),
            REPORT_GAP: repr(primal - dual),
            "dual_bound": repr(op.dual_bound(zz, lo, hi)),
        }
    )
    return EXIT_OK


def _cmd_list(args: argparse.Namespace, settings: Settings) -> int:
    for scenario in list_scenarios():
        print(f"{scenario.name}: {scenario.anchor}")
    return EXIT_OK


_COMMANDS = {
    "solve": _cmd_solve,
    "certify": _cmd_certify,
    "levelsets": _cmd_levelsets,
    "scan": _cmd_scan,
    "gap": _cmd_gap,
    "list": _cmd_list,
}


def _handle_command_error(command: str, error: Exception) -> int:
    """Log a library or input error and map it to the usage exit code."""
    logger.error(f"Error running {command}: {error}")
    return EXIT_USAGE


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    try:
        settings = _settings(args)
    except LeastGradientError as e:
        return _handle_command_error(args.command, e)
    setup_logging(APP_NAME, log_dir=settings.log_dir)

    try:
        return _COMMANDS[args.command](args, settings)
    except argparse.ArgumentTypeError as e:
        return _handle_command_error(args.command, e)
    except (LeastGradientError, OSError) as e:
        return _handle_command_error(args.command, e)
    except Exception as e:
        logger.exception(f"Unexpected error running {args.command}: {e}")
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
