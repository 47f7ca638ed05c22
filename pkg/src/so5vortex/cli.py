"""Command-line interface.

Verbs: solve, threshold, branch, validate, limit, scan-g.  Exit codes:
0 success, 1 usage/parameter error, 2 non-convergence, 3 validation failure.
Flags override values from an optional flat key=value config file, and every
run's resolved configuration lands in the output's JSON sidecar, so a rerun
with the same config and rng seed reproduces outputs byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import continuation, diagnostics, io, model, solver, spectral
from .grid import build_grid
from .model import INF, ModelParams

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGENCE = 2
EXIT_VALIDATION = 3

DEFAULT_N = 4001
DEFAULT_RMAX = 40.0


class UsageError(ValueError):
    pass


def _parse_kappa(text: str) -> float:
    if str(text).lower() in ("inf", "infinity"):
        return INF
    try:
        kappa = float(text)
    except ValueError as exc:
        raise UsageError(f"bad --kappa {text!r}") from exc
    if not kappa > 0.0:
        raise UsageError(f"--kappa must be positive or 'inf', got {text}")
    return kappa


def _resolve_grid(args, kappa: float):
    grading = args.grading
    if grading == "auto":
        grading = "uniform" if math.isinf(kappa) else "graded"
    if grading == "uniform":
        return build_grid(args.n, args.rmax), "uniform"
    return build_grid(args.n, args.rmax, grading="graded", strength=2.0), "graded"


def _parse_seed(text: str) -> solver.Seed:
    if text == "normal_core":
        return solver.Seed.normal_core()
    if text.startswith("perturbed"):
        amp = float(text.split(":", 1)[1]) if ":" in text else 0.1
        return solver.Seed.perturbed(amp)
    if text.startswith("trial:"):
        return solver.Seed.trial(float(text.split(":", 1)[1]))
    raise UsageError(f"bad --seed {text!r} "
                     "(use normal_core, perturbed[:amp], trial:rho)")


def _apply_config_file(argv: list) -> list:
    """Prepend key=value pairs from --config as --key value flags."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    try:
        path = argv[i + 1]
    except IndexError:
        raise UsageError("--config needs a path")
    rest = argv[:i] + argv[i + 2:]
    injected = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line {line!r} (expected key=value)")
            key, value = (part.strip() for part in line.split("=", 1))
            injected += [f"--{key.replace('_', '-')}", value]
    # injected first so explicit flags win
    return rest[:1] + injected + rest[1:]


def _add_grid_flags(sub):
    sub.add_argument("--n", type=int, default=DEFAULT_N)
    sub.add_argument("--rmax", type=float, default=DEFAULT_RMAX)
    sub.add_argument("--grading", choices=("auto", "uniform", "graded"),
                     default="auto")


def _add_common(sub):
    sub.add_argument("--kappa", required=True)
    sub.add_argument("--d", type=int, required=True)
    _add_grid_flags(sub)
    sub.add_argument("--rng-seed", type=int, default=0)


def _resolved_config(args, extra: dict | None = None) -> dict:
    cfg = {k.replace("-", "_"): (io.kappa_to_json(v) if k == "kappa" and
                                 isinstance(v, float) else v)
           for k, v in vars(args).items() if k not in ("func", "out")}
    if extra:
        cfg.update(extra)
    return cfg


def cmd_solve(args) -> int:
    kappa = _parse_kappa(args.kappa)
    params = ModelParams(kappa=kappa, d=args.d, g=args.g)
    grid, grading = _resolve_grid(args, kappa)
    opts = solver.SolveOptions(seed=_parse_seed(args.seed))
    try:
        prof = solver.solve(params, grid, opts)
    except solver.NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    energy_total = solver.energy_total(params, prof)
    _, _, prel = model.pohozaev_residual(params, prof)
    print(f"energy={energy_total:.12g} m0={prof.m0:.12g} pohozaev_rel={prel:.3e}")
    if args.out:
        io.save_profile(args.out, params, prof, energy_total, prel,
                        extra={"config": _resolved_config(args)})
    return EXIT_OK


def cmd_threshold(args) -> int:
    kappa = _parse_kappa(args.kappa)
    grid, _ = _resolve_grid(args, kappa)
    try:
        detail = spectral.threshold_detail(kappa, args.d, grid)
    except (solver.NonConvergence, spectral.NonConvergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    payload = {
        "kappa": io.kappa_to_json(kappa),
        "d": args.d,
        "g_star": detail.g_star,
        "lambda0": detail.lambda0,
        "r_max": grid.r_max,
        "n": grid.n,
    }
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def cmd_branch(args) -> int:
    kappa = _parse_kappa(args.kappa)
    grid, _ = _resolve_grid(args, kappa)
    try:
        branch = continuation.trace_branch(kappa, args.d, grid,
                                           g_min=args.g_min, steps=args.steps)
    except solver.NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    if len(branch.points) < args.steps:
        print(f"warning: branch aborted after {len(branch.points)} of "
              f"{args.steps} points", file=sys.stderr)
    fit = {}
    try:
        exponent, r2 = continuation.transition_order(branch)
        fit = {"transition_exponent": exponent, "transition_fit_r2": r2}
    except continuation.InsufficientPoints:
        pass
    print(f"g_star={branch.g_star:.8g} points={len(branch.points)}"
          + (f" exponent={fit['transition_exponent']:.4f}" if fit else ""))
    io.save_branch(args.out, branch,
                   extra={**fit, "config": _resolved_config(args)})
    return EXIT_OK if len(branch.points) == args.steps else EXIT_NONCONVERGENCE


def cmd_validate(args) -> int:
    params, prof, meta = io.load_profile(args.profile)
    report = diagnostics.check_admissible(params, prof)
    _, _, prel = model.pohozaev_residual(params, prof)
    report.add("pohozaev_rel", prel < 1e-3, prel, 1e-3)
    rsup = model.residual(params, prof).sup_norm()
    report.add("residual_sup", rsup < 1e-6, rsup, 1e-6)
    if "energy_total" in meta:
        recomputed = solver.energy_total(params, prof)
        drift = abs(recomputed - float(meta["energy_total"]))
        report.add("energy_sidecar_roundtrip",
                   drift <= 1e-12 * max(1.0, abs(recomputed)), drift, 1e-12)
    payload = report.as_dict()
    payload["profile"] = args.profile
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK if report.overall else EXIT_VALIDATION


def cmd_limit(args) -> int:
    kappas = [float(k) for k in args.kappas.split(",") if k]
    if len(kappas) < 2:
        raise UsageError("--kappas needs at least two comma-separated values")
    grid, _ = _resolve_grid(args, INF)
    try:
        table = diagnostics.limit_check(kappas, args.d, args.g, grid)
    except solver.NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    print("kappa,sup_df,sup_dm,sup_s_over_r,dg_star")
    for row in table["rows"]:
        print(f"{row['kappa']:g},{row['sup_df']:.8e},{row['sup_dm']:.8e},"
              f"{row['sup_s_over_r']:.8e},{row['dg_star']:.8e}")
    print(json.dumps({"monotone": table["monotone"],
                      "g_star_inf": table["g_star_inf"]}, sort_keys=True))
    return EXIT_OK if table["all_monotone"] else EXIT_VALIDATION


def cmd_scan_g(args) -> int:
    kappa = _parse_kappa(args.kappa)
    if math.isinf(kappa):
        raise UsageError("scan-g targets the finite-kappa system")
    gs = [float(g) for g in args.gs.split(",") if g]
    grid, _ = _resolve_grid(args, kappa)
    try:
        table = diagnostics.g_to_zero_scan(kappa, args.d, grid, gs)
    except solver.NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    print("g,energy,m0,max_f_r5")
    for row in table["rows"]:
        print(f"{row['g']:g},{row['energy']:.10e},{row['m0']:.10e},"
              f"{row['max_f_r5']:.10e}")
    trends_ok = table["energy_decreasing"] and table["m0_increasing"] \
        and table["fmax_decreasing"]
    print(json.dumps({k: table[k] for k in
                      ("energy_decreasing", "m0_increasing", "fmax_decreasing")},
                     sort_keys=True))
    return EXIT_OK if trends_ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="so5vortex",
        description="SO(5) Ginzburg-Landau vortex cores: solve, continue, validate")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one (kappa, d, g) problem")
    _add_common(s)
    s.add_argument("--g", type=float, required=True)
    s.add_argument("--seed", default="perturbed:0.1")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("threshold", help="bifurcation threshold g*")
    _add_common(s)
    s.set_defaults(func=cmd_threshold)

    s = sub.add_parser("branch", help="trace the AF branch in g")
    _add_common(s)
    s.add_argument("--g-min", type=float, required=True)
    s.add_argument("--steps", type=int, default=40)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_branch)

    s = sub.add_parser("validate", help="check a stored profile")
    s.add_argument("profile")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("limit", help="kappa -> inf collapse table")
    s.add_argument("--kappas", required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--g", type=float, required=True)
    _add_grid_flags(s)
    s.add_argument("--rng-seed", type=int, default=0)
    s.set_defaults(func=cmd_limit)

    s = sub.add_parser("scan-g", help="g -> 0 degeneration table")
    _add_common(s)
    s.add_argument("--gs", required=True, help="comma-separated decreasing g values")
    s.set_defaults(func=cmd_scan_g)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(argv) if argv else argv
        args = parser.parse_args(argv)
        if getattr(args, "d", 1) < 1 and args.command != "validate":
            raise UsageError(f"--d must be a positive integer, got {args.d}")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
