"""Quantitative pass/fail checks for every testable solution property.

These are the computable consequences of the theory: pointwise bounds and
monotonicity of admissible profiles, exponential/inverse-square tail laws,
discrete analogues of the X and H norms, the kappa -> infinity collapse onto
the rescaled limit system, the g -> 0 degeneration of minimizers, and the
log-kappa growth of the minimal energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import model, solver, spectral
from .grid import RadialGrid, build_grid
from .model import INF, ModelParams, Profile

BOUND_SLACK = 1e-8


class DegenerateTail(ValueError):
    pass


class InsufficientPoints(ValueError):
    pass


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float


@dataclass
class DiagnosticsReport:
    checks: list = field(default_factory=list)

    def add(self, name: str, passed: bool, measured: float, threshold: float):
        self.checks.append(CheckResult(name, bool(passed), float(measured),
                                       float(threshold)))

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "overall": self.overall,
            "checks": [
                {"name": c.name, "passed": c.passed, "measured": c.measured,
                 "threshold": c.threshold}
                for c in self.checks
            ],
        }


def check_admissible(params: ModelParams, p: Profile) -> DiagnosticsReport:
    """Bounds and monotonicity of a converged profile, slack 1e-8.

    0 < f < 1, 0 <= m < 1, f^2 + m^2 < 1 at interior nodes; f increasing;
    m decreasing wherever it is above noise; S in (0, d) and increasing at
    finite kappa; and the m dichotomy (identically small or positive core).
    Far-field increments sit at the solver noise floor, hence the slack.
    """
    rep = DiagnosticsReport()
    f, S, m = p.f, p.S, p.m
    fi, mi = f[1:-1], m[1:-1]
    rep.add("f_lower", np.min(fi) > -BOUND_SLACK, float(np.min(fi)), 0.0)
    rep.add("f_upper", np.max(fi) < 1.0 + BOUND_SLACK, float(np.max(fi)), 1.0)
    rep.add("m_lower", np.min(m) > -BOUND_SLACK, float(np.min(m)), 0.0)
    rep.add("m_upper", np.max(m) < 1.0 + BOUND_SLACK, float(np.max(m)), 1.0)
    rep.add("f2m2_upper", np.max(fi ** 2 + mi ** 2) < 1.0 + BOUND_SLACK,
            float(np.max(fi ** 2 + mi ** 2)), 1.0)
    df = np.diff(f)
    rep.add("f_increasing", np.min(df) > -BOUND_SLACK, float(np.min(df)), 0.0)
    core = m[:-1] > BOUND_SLACK
    dm = np.diff(m)[core[: m.size - 1]] if np.any(core) else np.array([0.0])
    rep.add("m_decreasing_in_core", np.max(dm) < BOUND_SLACK, float(np.max(dm)), 0.0)
    mmax = float(np.max(m))
    dichotomy = mmax < BOUND_SLACK or np.min(m[:-1]) > -BOUND_SLACK
    rep.add("m_dichotomy", dichotomy, float(np.min(m[:-1])), 0.0)
    if not params.is_infinite:
        Si = S[1:-1]
        rep.add("S_lower", np.min(Si) > -BOUND_SLACK, float(np.min(Si)), 0.0)
        rep.add("S_upper", np.max(Si) < params.d + BOUND_SLACK,
                float(np.max(Si)), float(params.d))
        dS = np.diff(S)
        rep.add("S_increasing", np.min(dS) > -BOUND_SLACK, float(np.min(dS)), 0.0)
    return rep


@dataclass(frozen=True)
class DecayFit:
    model: str                # "exponential" or "inverse_square"
    coeff: float              # C0 for exponential, leading coefficient else
    sigma: float              # decay rate (exponential only, else 0)
    window: tuple
    r2: float


def _tail_window(grid: RadialGrid):
    lo, hi = 0.5 * grid.r_max, 0.9 * grid.r_max
    sel = (grid.r >= lo) & (grid.r <= hi)
    return sel, (lo, hi)


def decay_fit(params: ModelParams, p: Profile, which: str) -> DecayFit:
    """Tail law fit on [0.5 R, 0.9 R].

    m and, at finite kappa, 1-f and d-S decay exponentially; at kappa = inf
    the amplitude deficit 1-f follows d^2/(2 r^2) and is fitted against
    1/r^2.  Raises DegenerateTail when the field is below 1e-14 throughout
    the window.
    """
    if which == "m":
        y = p.m.copy()
    elif which == "f_deficit":
        y = 1.0 - p.f
    elif which == "s_deficit":
        if params.is_infinite:
            raise ValueError("no S field at kappa = inf")
        y = params.d - p.S
    else:
        raise ValueError(f"unknown field {which!r}")
    sel, window = _tail_window(p.grid)
    r = p.grid.r[sel]
    y = y[sel]
    good = y > 1e-14
    if not np.any(good):
        raise DegenerateTail(f"{which} is below 1e-14 on the tail window")
    r, y = r[good], y[good]
    if which == "f_deficit" and params.is_infinite:
        basis = 1.0 / r ** 2
        coeff = float(np.sum(y * basis) / np.sum(basis * basis))
        yhat = coeff * basis
        fit_model, sigma = "inverse_square", 0.0
    else:
        slope, intercept = np.polyfit(r, np.log(y), 1)
        sigma = -float(slope)
        coeff = float(np.exp(intercept))
        yhat = np.exp(intercept + slope * r)
        fit_model = "exponential"
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(model=fit_model, coeff=coeff, sigma=sigma, window=window, r2=r2)


def x_norm(grid: RadialGrid, u: np.ndarray) -> float:
    """Discrete ||u||_X = sqrt(int [(u')^2 + u^2 + u^2/r^2] r dr); needs
    u(0) = 0, and the r = 0 node is excluded from the u^2/r^2 term."""
    u = np.asarray(u, dtype=float)
    du = np.diff(u)
    val = float(np.sum(du * du / grid.h * grid.rmid))
    val += float(np.sum(grid.w * u * u))
    val += float(np.sum(grid.w[1:] * (u[1:] / grid.r[1:]) ** 2))
    return math.sqrt(val)


def h_norm(grid: RadialGrid, u: np.ndarray) -> float:
    """Discrete ||u||_H = sqrt(int [(u')^2 + u^2] r dr)."""
    u = np.asarray(u, dtype=float)
    du = np.diff(u)
    val = float(np.sum(du * du / grid.h * grid.rmid))
    val += float(np.sum(grid.w * u * u))
    return math.sqrt(val)


def _solve_grid_for(kappa: float, n: int, r_max: float) -> RadialGrid:
    """Graded mesh for finite kappa (core scale 1/kappa), uniform otherwise."""
    if math.isinf(kappa):
        return build_grid(n, r_max)
    return build_grid(n, r_max, grading="graded", strength=2.0)


def limit_check(kappas, d: int, g: float, grid: RadialGrid,
                opts: solver.SolveOptions | None = None) -> dict:
    """Collapse of rescaled finite-kappa solutions onto the limit system.

    Solves each finite-kappa problem on its own (graded) mesh, rescales by
    the core length (profile at r/kappa, interpolated onto the comparison
    grid), and tabulates sup|f_hat - f_inf|, sup|m_hat - m_inf|,
    sup|S_hat/r|, and |g*_kappa - g*_inf|; every column should decrease as
    kappa grows.
    """
    opts = opts or solver.SolveOptions(seed=solver.Seed.perturbed(0.1))
    kappas = sorted(float(k) for k in kappas)
    params_inf = ModelParams(kappa=INF, d=d, g=g)
    p_inf = solver.solve(params_inf, grid, opts)
    gstar_inf = spectral.threshold_g(INF, d, grid)
    rows = []
    rhat = grid.r
    for kap in kappas:
        kgrid = _solve_grid_for(kap, grid.n, grid.r_max)
        params = ModelParams(kappa=kap, d=d, g=g)
        p = solver.solve(params, kgrid, opts)
        r_phys = rhat / kap
        f_hat = np.interp(r_phys, kgrid.r, p.f)
        m_hat = np.interp(r_phys, kgrid.r, p.m)
        s_hat = np.interp(r_phys, kgrid.r, p.S)
        s_over_r = np.zeros_like(rhat)
        s_over_r[1:] = s_hat[1:] / rhat[1:]
        gstar_k = spectral.threshold_g(kap, d, kgrid)
        rows.append({
            "kappa": kap,
            "sup_df": float(np.max(np.abs(f_hat - p_inf.f))),
            "sup_dm": float(np.max(np.abs(m_hat - p_inf.m))),
            "sup_s_over_r": float(np.max(np.abs(s_over_r))),
            "dg_star": abs(gstar_k - gstar_inf),
        })
    cols = ("sup_df", "sup_dm", "sup_s_over_r", "dg_star")
    monotone = {c: all(rows[i + 1][c] < rows[i][c] for i in range(len(rows) - 1))
                for c in cols}
    return {"g": g, "d": d, "g_star_inf": gstar_inf, "rows": rows,
            "monotone": monotone, "all_monotone": all(monotone.values())}


def g_to_zero_scan(kappa: float, d: int, grid: RadialGrid, g_list,
                   opts: solver.SolveOptions | None = None) -> dict:
    """Degeneration of minimizers as g -> 0: energy to zero, core amplitude
    to one, amplitude collapse on compact sets (tabulated on r <= 5)."""
    g_list = list(g_list)
    if any(g2 >= g1 for g1, g2 in zip(g_list, g_list[1:])) or g_list[0] <= 0:
        raise ValueError("g_list must be positive and strictly decreasing")
    opts = opts or solver.SolveOptions()
    rows = []
    prev = None
    window = grid.r <= 5.0
    for g in g_list:
        params = ModelParams(kappa=kappa, d=d, g=g)
        if prev is None:
            run = replace(opts, seed=solver.Seed.perturbed(0.1))
            p = solver.solve(params, grid, run)
        else:
            p, _ = solver._solve_on_fields(params, grid, prev.copy(),
                                           params.fields(), opts)
        rows.append({
            "g": g,
            "energy": solver.energy_total(params, p),
            "m0": p.m0,
            "max_f_r5": float(np.max(p.f[window])),
        })
        prev = p
    energies = [row["energy"] for row in rows]
    m0s = [row["m0"] for row in rows]
    fmax = [row["max_f_r5"] for row in rows]
    return {
        "rows": rows,
        "energy_decreasing": all(b < a - 1e-12 for a, b in zip(energies, energies[1:])),
        "m0_increasing": all(b > a + 1e-12 for a, b in zip(m0s, m0s[1:])),
        "fmax_decreasing": all(b < a - 1e-12 for a, b in zip(fmax, fmax[1:])),
    }


def energy_scaling(kappas, d: int, grid: RadialGrid,
                   opts: solver.SolveOptions | None = None):
    """Least-squares fit of the normal-core energy against ln kappa.

    The minimal energy grows like ln kappa; returns (slope, intercept, r2).
    """
    kappas = [float(k) for k in kappas]
    if len(kappas) < 2:
        raise InsufficientPoints("need at least two kappa values")
    opts = opts or solver.SolveOptions()
    es, lnk = [], []
    for kap in kappas:
        kgrid = _solve_grid_for(kap, grid.n, grid.r_max)
        params = ModelParams(kappa=kap, d=d, g=0.5)
        p = solver.solve_normal_core(params, kgrid, opts)
        es.append(model.energy(params, p).total)
        lnk.append(math.log(kap))
    x, y = np.array(lnk), np.array(es)
    slope, intercept = np.polyfit(x, y, 1)
    yhat = slope * x + intercept
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)
