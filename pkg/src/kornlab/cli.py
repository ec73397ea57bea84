"""Command line entry point ``kornlab``.

Exit codes: 0 success, 1 other library error, 2 config or parse error,
3 solver non-convergence, 4 geometry validation failure.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import lab
from .errors import ConfigError, CurveParseError, GeometryError, KornLabError, NonConvergence

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_SOLVER, EXIT_GEOMETRY = 0, 1, 2, 3, 4


def _formats(text):
    return ("csv", "svg") if text == "both" else (text,)


def _sweep(args, mode=None):
    overrides = {"threads": args.threads}
    if mode is not None:
        overrides["mode"] = mode
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.format is not None:
        overrides["formats"] = _formats(args.format)
    cfg = lab.load_config(args.config, overrides)
    result = lab.run_sweep(cfg)
    for r in result.rows:
        print(f"{r.mode:9s} h={r.h:.6g} n={r.n} value={r.value:.10g} iters={r.iters}")
    for m, fit in sorted(result.fits.items()):
        print(f"{m}: slope={fit.slope:.4f} r2={fit.r_squared:.4f}")
    for path in lab.emit_report(result, cfg.formats, cfg.out_dir, cfg.name):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_geometry_check(args):
    cfg = lab.load_config(args.config, {"h_list": (0.5,)}) if args.config else None
    s = lab.build_surface_from_config(cfg.surface)
    for k, v in lab.geometry_report(s).items():
        print(f"{k} = {v}")
    return EXIT_OK


def cmd_planar_check(args):
    from .planar import PlanarCoeffs, harmonic_gap, korn15_ratio, random_fields, separable_harmonics

    p = 2 * np.pi
    worst = np.inf
    count = 0
    for _, w in separable_harmonics(p):
        for k in range(7):
            worst = min(worst, harmonic_gap(w, 2.0**-k, p))
            count += 1
    print(f"harmonic gap: {count} instances, min gap = {worst:.3e}")
    maxima = []
    for h in (0.1, 0.05, 0.025, 0.0125):
        fields = random_fields(args.seed, 100, 1.0, "dirichlet")
        maxima.append(max(korn15_ratio(f, PlanarCoeffs(), h) for f in fields))
        print(f"h={h}: max first-and-a-half ratio = {maxima[-1]:.6f}")
    growth = max(maxima) / maxima[0] - 1.0
    print(f"growth over coarsest h: {100 * growth:.1f}% (seed={args.seed})")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="kornlab", description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    ap.add_argument("--format", choices=("csv", "svg", "both"), default=None)
    sub = ap.add_subparsers(dest="command", required=True)
    g = sub.add_parser("geometry-check", help="validate a surface and print its metric summary")
    g.add_argument("config")
    g.set_defaults(func=cmd_geometry_check)
    pc = sub.add_parser("planar-check", help="run the planar inequality checks")
    pc.add_argument("--seed", type=int, default=0)
    pc.set_defaults(func=cmd_planar_check)
    for name, mode in (("ansatz", "ansatz"), ("eig", "eig"), ("sweep", None)):
        sp_ = sub.add_parser(name, help=f"run a {name} sweep from a config file")
        sp_.add_argument("config")
        sp_.set_defaults(func=lambda a, mode=mode: _sweep(a, mode))
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CurveParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except GeometryError as exc:
        print(f"geometry validation failed: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except KornLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
