"""
Command-line entry point: `sopspline fit|simulate|validate`.

Exit codes: 0 success, 1 input or configuration error, 2 fit written but not
converged (fit) or at least one failed check (validate).
"""

import argparse
import logging
import sys
from pathlib import Path

from app.config import get_settings
from app.exceptions import SopSplineError
from app.models import Family, ModelOptions
from app.services.fitting import build_report, fit_dataset, fitted_frame, lambda_frame, surface_frame
from app.services.simulation import simulate
from app.services.tabular import read_dataset, write_frame, write_report
from app.services.validation import CHECKS, run_checks

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


def _int_list(count: int):
    def parse(text: str) -> tuple[int, ...]:
        try:
            values = tuple(int(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {count} comma-separated integers, got '{text}'")
        if len(values) != count:
            raise argparse.ArgumentTypeError(f"expected {count} comma-separated integers, got '{text}'")
        return values

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sopspline", description="Adaptive P-spline smoothing fitted by SOP")
    parser.add_argument("--log-level", default=None, help="logging level (default from SOPSPLINE_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a CSV dataset and write plot-ready outputs")
    fit.add_argument("input", type=Path, help="CSV with header x[,x2],y[,weight]")
    fit.add_argument("outdir", type=Path, help="output directory (created if missing)")
    fit.add_argument("--family", choices=[f.value for f in Family], default=Family.GAUSSIAN.value)
    fit.add_argument("--nseg", type=int, default=20, help="basis segments (1D, or both axes in 2D)")
    fit.add_argument("--degree", type=int, default=3)
    fit.add_argument("--diff", type=int, default=2, help="difference penalty order")
    fit.add_argument("--adaptive-p", type=int, default=1, help="size of the smoothing-parameter basis (1D)")
    fit.add_argument("--adaptive-degree", type=int, default=3)
    fit.add_argument("--nseg2d", type=_int_list(2), default=None, help="segments per axis, e.g. 15,15")
    fit.add_argument("--adaptive-p2d", type=_int_list(4), default=None, help="p11,p12,p21,p22, e.g. 8,8,8,8")
    fit.add_argument("--max-iter", type=int, default=None)
    fit.add_argument("--tol", type=float, default=None)
    fit.add_argument("--grid", type=_int_list(2), default=(50, 50), help="2D surface evaluation grid")
    fit.add_argument("--log-level", default=argparse.SUPPRESS)

    sim = sub.add_parser("simulate", help="write a seeded synthetic dataset")
    sim.add_argument("scenario", help="hetero1d, poisson_peaks or surface2d")
    sim.add_argument("--n", type=int, default=None)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--sigma", type=float, default=None, help="noise sd (Gaussian scenarios)")
    sim.add_argument("--out", type=Path, default=None, help="output CSV (stdout when omitted)")

    val = sub.add_parser("validate", help="run the built-in agreement and identity checks")
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--list", action="store_true", help="print check names without running")
    val.add_argument("--only", nargs="+", default=None, help="run only these checks")
    return parser


def _options(args: argparse.Namespace) -> ModelOptions:
    return ModelOptions(
        family=Family(args.family),
        nseg=args.nseg,
        degree=args.degree,
        diff=args.diff,
        adaptive_p=args.adaptive_p,
        adaptive_degree=args.adaptive_degree,
        nseg2d=args.nseg2d,
        adaptive_p2d=args.adaptive_p2d,
        max_iter=args.max_iter,
        tol=args.tol,
        grid=args.grid,
    )


def cmd_fit(args: argparse.Namespace) -> int:
    settings = get_settings()
    try:
        options = _options(args)
        dataset = read_dataset(args.input)
        model = fit_dataset(dataset, options, settings)
    except (SopSplineError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT

    out: Path = args.outdir
    out.mkdir(parents=True, exist_ok=True)
    digits = settings.csv_digits
    write_frame(fitted_frame(model), out / "fitted.csv", digits)
    write_frame(lambda_frame(model), out / "lambda_field.csv", digits)
    if dataset.is_2d:
        write_frame(surface_frame(model), out / "surface_grid.csv", digits)
    report = build_report(model)
    write_report(report, out / "report.json")

    print(
        f"{report.family} {report.dimension}D fit: n={report.n_obs}, "
        f"{report.n_variance_components} variance components + sigma2, "
        f"ed={report.total_ed:.3f}, iterations={report.iterations}, converged={report.converged}"
    )
    if not report.converged:
        print("warning: fit did not converge; outputs written", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        frame = simulate(args.scenario, n=args.n, seed=args.seed, sigma=args.sigma)
    except SopSplineError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    digits = get_settings().csv_digits
    if args.out is None:
        frame.to_csv(sys.stdout, index=False, float_format=f"%.{digits}g")
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        write_frame(frame, args.out, digits)
        logger.info(f"Wrote {len(frame)} rows to {args.out}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    if args.list:
        for name in CHECKS:
            print(name)
        return EXIT_OK
    unknown = [n for n in args.only or [] if n not in CHECKS]
    if unknown:
        print(f"error: unknown check(s) {', '.join(unknown)}; valid checks: {', '.join(CHECKS)}", file=sys.stderr)
        return EXIT_INPUT

    results = run_checks(seed=args.seed, names=args.only)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.seconds:7.2f}s  {r.detail}")
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_NOT_CONVERGED


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = getattr(args, "log_level", None) or get_settings().log_level
    logging.basicConfig(level=level.upper(), format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
