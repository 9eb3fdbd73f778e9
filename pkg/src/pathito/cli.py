"""Command-line entry point.

Exit status is 0 when every check passes, 1 when a check fails or a run
aborts, and 2 for usage errors (bad flags, bad config, unknown names).
"""

from __future__ import annotations

import argparse
import sys

from .config import OUT_ENV, STOCHASTIC, build_config, read_config_file
from .errors import ConfigError, PathitoError
from .report import emit_report
from .runner import run_experiment


def _common(p: argparse.ArgumentParser, stochastic: bool):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./pathito-out)")
    p.add_argument("--segments", "-M", type=int, help="grid segments on the window")
    p.add_argument("--horizon", "-T", type=float, help="window length and terminal time")
    p.add_argument("--eps", help="eps schedule: dyadic:K or comma list of step multiples")
    p.add_argument("--seed", type=int, help="base seed" + (" (required)" if stochastic else ""))
    p.add_argument("--json", action="store_true", help="also print report.json to stdout")
    if stochastic:
        p.add_argument("--paths", "-P", type=int, help="Monte Carlo paths")
        p.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
        p.add_argument("--chunk", type=int, help="paths per work unit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathito", description="Functional Itô calculus by regularization.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("integrate", help="forward/backward regularized integrals")
    _common(p, False)
    p.add_argument("--mode", choices=["forward", "backward", "measure"])
    p.add_argument("--interval", help="a,b")
    p.add_argument("--g", help="integrand: const:c, poly:c0,c1,.., sin:a,w, exp:r, step:x0,j, brownian[:s]")
    p.add_argument("--f", help="integrator, same forms as --g")
    p.add_argument("--atoms", help="measure atoms loc:mass,loc:mass")
    p.add_argument("--expect", type=float, help="expected limit to check against")
    p.add_argument("--tol", type=float, help="tolerance for --expect (default 5 steps)")

    p = sub.add_parser("qv", help="regularized quadratic variation curve")
    _common(p, False)
    p.add_argument("--interval", help="a,b containing 0")
    p.add_argument("--f", help="path spec")

    p = sub.add_parser("deriv", help="horizontal and vertical derivatives of a functional")
    _common(p, False)
    p.add_argument("--functional", help="registry name")
    p.add_argument("--path", help="path CSV or built-in spec")
    p.add_argument("--t", type=float, help="time")
    p.add_argument("--which", choices=["h", "v", "vv", "all"])

    p = sub.add_parser("simulate", help="simulate the path-dependent SDE of a problem")
    _common(p, True)
    p.add_argument("--problem")
    p.add_argument("--path", help="initial window (CSV or spec)")
    p.add_argument("--t", type=float, help="start time")
    p.add_argument("--dump", type=int, help="write this many trajectories as CSV")

    p = sub.add_parser("solve-bsde", help="regression BSDE solver")
    _common(p, True)
    p.add_argument("--problem")
    p.add_argument("--path")
    p.add_argument("--t", type=float)
    p.add_argument("--basis-degree", dest="basis_degree", type=int)
    p.add_argument("--steps", dest="segments", type=int, help="time steps (same as --segments)")

    p = sub.add_parser("solve-kolmogorov", help="candidate solutions of a path-dependent PDE")
    _common(p, True)
    p.add_argument("--problem")
    p.add_argument("--method", choices=["closed-form", "feynman-kac", "bsde", "mc-residual"])
    p.add_argument("--path")
    p.add_argument("--t", type=float)
    p.add_argument("--basis-degree", dest="basis_degree", type=int)

    p = sub.add_parser("verify-ito", help="pathwise functional Itô residuals")
    _common(p, True)
    p.add_argument("--functional")
    p.add_argument("--problem")
    p.add_argument("--path")
    p.add_argument("--doublings", type=int)
    p.add_argument("--qv", choices=["realized", "bracket"])

    p = sub.add_parser("verify-bridge", help="Fréchet bridge checks")
    _common(p, False)
    p.add_argument("--functional")
    p.add_argument("--path")
    p.add_argument("--order", type=int, choices=[1, 2])

    p = sub.add_parser("selftest", help="fixed battery for determinism checks")
    _common(p, True)
    return parser


_META = ("config", "json", "command")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        overrides = {k: v for k, v in vars(args).items() if k not in _META}
        cfg = build_config(args.command, file_values, overrides)
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"pathito: usage error: {exc}", file=sys.stderr)
        return 2
    except (PathitoError, ValueError) as exc:
        print(f"pathito: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    try:
        files = emit_report(report, cfg.output_dir())
    except OSError as exc:
        print(f"pathito: {exc}", file=sys.stderr)
        return 1
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.6g} ({c.rule}, tolerance {c.tolerance:.6g})")
    print(f"report: {files[0]}")
    if args.json:
        sys.stdout.write(report.to_json())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
