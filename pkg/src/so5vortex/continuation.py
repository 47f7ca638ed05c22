"""Branch tracing in g, transition order, bifurcation direction, uniqueness.

The antiferromagnetic branch is traced by natural continuation: the threshold
g* is located spectrally, the first point is seeded by an eigenfunction
perturbation of the normal core, and each later point warm-starts from its
predecessor on a geometric schedule concentrated near g* (where the core
amplitude grows like sqrt(g* - g)).  Every accepted point must pass the
residual, Pohozaev, admissibility, and stability gates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import diagnostics, model, solver, spectral
from .grid import RadialGrid
from .model import ModelParams, Profile, TangentDirection


class InsufficientPoints(ValueError):
    pass


class SingularSystem(RuntimeError):
    pass


@dataclass(frozen=True)
class BranchPoint:
    g: float
    m0: float
    energy: float
    lambda_min: float
    pohozaev_rel: float
    newton_iters: int


@dataclass
class Branch:
    kappa: float
    d: int
    g_star: float
    points: list = field(default_factory=list)   # ordered by decreasing g
    profiles: list = field(default_factory=list)


def _gate(params: ModelParams, p: Profile, opts: solver.SolveOptions):
    """Residual / Pohozaev / admissibility / stability acceptance gate.
    Returns (ok, lambda_min, pohozaev_rel, why)."""
    rsup = model.residual(params, p).sup_norm()
    if not rsup < opts.tol_residual * 10.0:
        return False, np.nan, np.nan, f"residual {rsup:.2e}"
    _, _, prel = model.pohozaev_residual(params, p)
    if not prel < 1e-3:
        return False, np.nan, prel, f"pohozaev {prel:.2e}"
    report = diagnostics.check_admissible(params, p)
    if not report.overall:
        bad = [c.name for c in report.checks if not c.passed]
        return False, np.nan, prel, "admissibility: " + ",".join(bad)
    pair = spectral.hessian_min_eig(params, p)
    if not pair.lam > -1e-8:
        return False, pair.lam, prel, f"unstable lambda_min {pair.lam:.2e}"
    return True, pair.lam, prel, ""


def trace_branch(kappa: float, d: int, grid: RadialGrid, g_min: float,
                 steps: int, opts: solver.SolveOptions | None = None) -> Branch:
    """Trace m(0) vs g from just below the threshold down to g_min."""
    if not g_min > 0.0:
        raise ValueError("g_min must be positive")
    if steps < 2:
        raise InsufficientPoints("need at least 2 continuation steps")
    opts = opts or solver.SolveOptions()
    detail = spectral.threshold_detail(kappa, d, grid)
    g_star = detail.g_star
    if not g_min < g_star:
        raise ValueError(f"g_min={g_min} is not below the threshold {g_star:.4f}")

    delta0 = 1e-3 * g_star
    ratio = (g_star - g_min) / delta0
    q = ratio ** (1.0 / (steps - 1))
    g_schedule = [g_star - delta0 * q ** j for j in range(steps)]

    branch = Branch(kappa=kappa, d=d, g_star=g_star)
    # the branch opens with the bifurcation point itself (the normal core
    # at g*, zero core amplitude, marginal stability)
    params0 = ModelParams(kappa=kappa, d=d, g=g_star)
    core = detail.normal_core
    _, _, prel0 = model.pohozaev_residual(params0, core)
    pair0 = spectral.hessian_min_eig(params0, core)
    branch.points.append(BranchPoint(g=g_star, m0=core.m0,
                                     energy=solver.energy_total(params0, core),
                                     lambda_min=pair0.lam, pohozaev_rel=prel0,
                                     newton_iters=0))
    branch.profiles.append(core)
    prev: Profile | None = None
    j = 0
    g_resume = None
    while j < len(g_schedule):
        g = g_schedule[j] if g_resume is None else g_resume
        params = ModelParams(kappa=kappa, d=d, g=g)
        if prev is None:
            seed = detail.normal_core.copy()
            seed.m[:] = 0.1 * detail.eigenpair.vec
            seed.m[-1] = 0.0
        else:
            seed = prev.copy()
        run = replace(opts, seed=solver.Seed.custom(seed))
        history: list = []
        try:
            p, history = solver._solve_on_fields(params, grid, seed.copy(),
                                                 params.fields(), run)
            ok, lam, prel, why = _gate(params, p, opts)
            if ok and p.m0 < 1e-8 and prev is not None and prev.m0 > 1e-4:
                ok, why = False, "collapsed to the normal core"
        except solver.NonConvergence as exc:
            ok, lam, prel, why = False, np.nan, np.nan, str(exc)
            p = None
        if not ok:
            # retry halfway between the last accepted g and the target
            g_last = branch.points[-1].g if branch.points else g_star * (1.0 - 1e-4)
            g_half = 0.5 * (g_last + g)
            if g_resume is None and abs(g_half - g) > 1e-12:
                g_resume = g_half
                continue
            break   # abort with the partial branch
        energy = solver.energy_total(params, p)
        branch.points.append(BranchPoint(g=g, m0=p.m0, energy=energy,
                                         lambda_min=lam, pohozaev_rel=prel,
                                         newton_iters=max(0, len(history) - 1)))
        branch.profiles.append(p)
        prev = p
        if g_resume is not None:
            g_resume = None     # half-step accepted; go back to the schedule
        else:
            j += 1
    return branch


def transition_order(branch: Branch):
    """Log-log fit of m(0) against (g* - g) near the threshold.

    A supercritical pitchfork gives exponent 1/2; returns (exponent, r2).
    """
    g_star = branch.g_star
    pts = [p for p in branch.points
           if p.m0 > 0.0 and 0.8 * g_star <= p.g < g_star]
    if len(pts) < 10:
        raise InsufficientPoints(
            f"need >= 10 branch points with m0 > 0 in [0.8 g*, g*], have {len(pts)}")
    x = np.log(np.array([g_star - p.g for p in pts]))
    y = np.log(np.array([p.m0 for p in pts]))
    slope, intercept = np.polyfit(x, y, 1)
    yhat = slope * x + intercept
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


@dataclass(frozen=True)
class BifurcationDirection:
    gamma2: float                  # second derivative of g along the branch
    cross_integral: float          # int f u* w^2 r dr  (negative, proven)
    quartic_integral: float        # int w^4 r dr
    norm_integral: float           # int w^2 r dr


def bifurcation_direction(kappa: float, d: int, grid: RadialGrid,
                          opts=None) -> BifurcationDirection:
    """Direction of the branch leaving the normal core at g*_kappa.

    At the bifurcation the linearization block-decouples; the amplitude
    equation requires the (f, S) response u* to the forcing -2 k^2 f w^2 and
    gives  gamma''(0) = -2 [int f u* w^2 + int w^4] / int w^2.  Negative
    values mean the branch bends to g < g*.  Requires kappa^2 >= 2 d^2 so the
    (f, S) block is definite.
    """
    if not np.isfinite(kappa):
        raise ValueError("bifurcation direction is computed at finite kappa")
    if kappa ** 2 < 2.0 * d ** 2:
        raise ValueError(f"needs kappa^2 >= 2 d^2 (kappa={kappa}, d={d})")
    detail = spectral.threshold_detail(kappa, d, grid, opts)
    core, wk = detail.normal_core, detail.eigenpair.vec
    params = ModelParams(kappa=kappa, d=d, g=detail.g_star)
    k2 = kappa ** 2
    H = model.hessian(params, core, fields=("f", "S"))
    rhs = TangentDirection.zeros(grid)
    rhs.u[:] = -2.0 * k2 * core.f * wk ** 2
    try:
        sol = H.solve(rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(sol.u)):
        raise SingularSystem("(f,S)-block solve returned non-finite values")
    w = grid.w
    cross = float(np.sum(w * core.f * sol.u * wk ** 2))
    quartic = float(np.sum(w * wk ** 4))
    norm = float(np.sum(w * wk ** 2))
    gamma2 = -2.0 * (cross + quartic) / norm
    return BifurcationDirection(gamma2=gamma2, cross_integral=cross,
                                quartic_integral=quartic, norm_integral=norm)


def uniqueness_probe(kappa: float, d: int, g: float, grid: RadialGrid,
                     n_starts: int, rng_seed: int = 0,
                     opts: solver.SolveOptions | None = None):
    """Solve from randomized perturbation seeds; return (max pairwise sup
    distance among converged solutions, per-start outcomes)."""
    opts = opts or solver.SolveOptions()
    params = ModelParams(kappa=kappa, d=d, g=g)
    core = solver.solve_normal_core(params, grid, opts)
    rng = np.random.default_rng(rng_seed)
    solutions = []
    failures = []
    for k in range(n_starts):
        amp = rng.uniform(0.05, 0.4)
        width = rng.uniform(1.0, 6.0)
        seed = core.copy()
        seed.m[:] = amp * np.exp(-(grid.r / width) ** 2)
        seed.m[-1] = 0.0
        try:
            p, _ = solver._solve_on_fields(params, grid, seed,
                                           params.fields(), opts)
            solutions.append(p)
        except solver.NonConvergence as exc:
            failures.append((k, str(exc)))
    max_dist = 0.0
    for i in range(len(solutions)):
        for j in range(i + 1, len(solutions)):
            a, b = solutions[i], solutions[j]
            dist = max(float(np.max(np.abs(a.f - b.f))),
                       float(np.max(np.abs(a.S - b.S))),
                       float(np.max(np.abs(a.m - b.m))))
            max_dist = max(max_dist, dist)
    return max_dist, {"converged": len(solutions), "failures": failures,
                      "solutions": solutions}
