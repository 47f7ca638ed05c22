"""Parameters, profiles, energies, and their discrete first/second variations.

The two systems are the full Ginzburg-Landau equations at finite kappa,

    -f'' - f'/r + (d-S)^2 f / r^2 = kappa^2 (1 - f^2 - m^2) f
    -S'' + S'/r                   = (d-S) f^2
    -m'' - m'/r + kappa^2 g m     = kappa^2 (1 - f^2 - m^2) m

with f(0)=S(0)=0, m'(0)=0 and f->1, S->d, m->0 at infinity, and the extreme
type-II (kappa = inf) reduction where S drops out and all kappa factors are 1.

Discretization: the energy is assembled as an exact function of the nodal
values (cell-midpoint quadrature for gradient terms, node quadrature for
local terms), and the residual/Hessian are its *exact* derivatives rescaled
by the quadrature weights.  The residual is therefore the gradient of the
discrete energy in the inner product <a,b> = sum_i w_i a_i b_i, and the
directional second difference of the energy matches <dir, H dir> to roundoff.
The scaled rows are second-order consistent with the strong-form equations,
with the S-row divided by r (the S-perturbation is parametrized as r*v).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._banded import BandedMatrix, smallest_eig
from .grid import RadialGrid

INF = math.inf

FIELD_SLOTS = {"f": "u", "S": "v", "m": "w"}


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Parameter state (kappa, d, g); kappa = INF selects the type-II limit.

    Negative degrees are normalized to |d| (the energy is invariant under
    conjugating the order parameter and flipping the vector potential).
    """

    kappa: float
    d: int
    g: float

    def __post_init__(self):
        if self.d == 0:
            raise ValueError("vortex degree d must be nonzero")
        if self.d < 0:
            object.__setattr__(self, "d", -self.d)
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be positive or inf, got {self.kappa}")
        if not self.g > 0.0:
            raise ValueError(f"g must be positive, got {self.g}")

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.kappa)

    @property
    def kappa_eff(self) -> float:
        """kappa factor entering the equations (1 in the rescaled limit)."""
        return 1.0 if self.is_infinite else self.kappa

    def fields(self) -> tuple:
        return ("f", "m") if self.is_infinite else ("f", "S", "m")


@dataclass
class Profile:
    """Sampled (f, S, m) on a grid; S is identically 0 and inert at kappa=inf."""

    grid: RadialGrid
    f: np.ndarray
    S: np.ndarray
    m: np.ndarray

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "Profile":
        n = grid.n
        return cls(grid, np.zeros(n), np.zeros(n), np.zeros(n))

    def copy(self) -> "Profile":
        return Profile(self.grid, self.f.copy(), self.S.copy(), self.m.copy())

    @property
    def m0(self) -> float:
        return float(self.m[0])


@dataclass
class TangentDirection:
    """Perturbation (u, v, w); v is the perturbation of S/r (delta_S = r v)."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "TangentDirection":
        n = grid.n
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    def slot(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def sup_norm(self) -> float:
        return max(float(np.max(np.abs(self.u))), float(np.max(np.abs(self.v))),
                   float(np.max(np.abs(self.w))))


@dataclass(frozen=True)
class EnergyBreakdown:
    """Term-wise energy; each field carries the overall 1/2 prefactor so that
    total = sum of terms.  All terms are >= 0 at finite kappa; the winding
    slot holds the subtracted d^2/r^2 (f^2 - fref^2) term at kappa = inf and
    may then be negative."""

    grad_f: float
    magnetic: float
    grad_m: float
    mass_m: float
    winding: float
    potential: float
    total: float


def _grad_term(grid: RadialGrid, u: np.ndarray, coef_cells: np.ndarray) -> float:
    """1/2 sum_c a_c (u_{i+1} - u_i)^2 with a_c the cell stiffness coefficient
    (rmid/h for the r dr measure, 1/(rmid h) for the dr/r measure)."""
    du = np.diff(u)
    return 0.5 * float(np.sum(du * du * coef_cells))


def _grad_term_gradient(grid: RadialGrid, u: np.ndarray, coef_cells: np.ndarray) -> np.ndarray:
    t = coef_cells * np.diff(u)
    g = np.zeros_like(u)
    g[:-1] -= t
    g[1:] += t
    return g


def _winding_coef(params: ModelParams, grid: RadialGrid, p: Profile) -> np.ndarray:
    """(d-S)^2/r^2 at nodes (d^2/r^2 at kappa=inf); the r=0 entry is dropped
    from all quadratures (f(0) = 0 keeps the continuum integrand finite)."""
    c = np.zeros(grid.n)
    if params.is_infinite:
        c[1:] = params.d ** 2 / grid.r[1:] ** 2
    else:
        c[1:] = (params.d - p.S[1:]) ** 2 / grid.r[1:] ** 2
    return c


def energy(params: ModelParams, p: Profile, f_ref: np.ndarray | None = None) -> EnergyBreakdown:
    """Discrete energy of either system.

    At kappa = inf the logarithmically divergent winding term is renormalized
    against a reference normal-core amplitude f_ref (must live on the same
    grid); the equations themselves never involve f_ref.
    """
    grid, w = p.grid, p.grid.w
    f, S, m = p.f, p.S, p.m
    stiff = grid.rmid / grid.h
    grad_f = _grad_term(grid, f, stiff)
    grad_m = _grad_term(grid, m, stiff)
    P = 1.0 - f * f - m * m

    if params.is_infinite:
        if f_ref is None:
            raise ValueError("kappa=inf energy needs the normal-core reference f_ref")
        if f_ref.shape != f.shape:
            raise GridMismatch("f_ref lives on a different grid")
        magnetic = 0.0
        rr = grid.r[1:]
        winding = 0.5 * params.d ** 2 * float(
            np.sum(w[1:] * (f[1:] ** 2 - f_ref[1:] ** 2) / rr ** 2))
        mass_m = 0.5 * params.g * float(np.sum(w * m * m))
        potential = 0.25 * float(np.sum(w * P * P))
    else:
        magnetic = _grad_term(grid, S, 1.0 / (grid.h * grid.rmid))
        wind_c = _winding_coef(params, grid, p)
        winding = 0.5 * float(np.sum(w * wind_c * f * f))
        k2 = params.kappa ** 2
        mass_m = 0.5 * k2 * params.g * float(np.sum(w * m * m))
        potential = 0.25 * k2 * float(np.sum(w * P * P))

    total = grad_f + magnetic + grad_m + mass_m + winding + potential
    return EnergyBreakdown(grad_f, magnetic, grad_m, mass_m, winding, potential, total)


def _gradient_fields(params: ModelParams, p: Profile):
    """Exact partial derivatives of the discrete energy w.r.t. nodal (f, S, m)."""
    grid, w = p.grid, p.grid.w
    f, S, m = p.f, p.S, p.m
    P = 1.0 - f * f - m * m
    k2 = params.kappa_eff ** 2
    wind_c = _winding_coef(params, grid, p)

    stiff = grid.rmid / grid.h
    gf = _grad_term_gradient(grid, f, stiff)
    gf += w * wind_c * f
    gf -= k2 * w * P * f

    gm = _grad_term_gradient(grid, m, stiff)
    gm += k2 * params.g * w * m
    gm -= k2 * w * P * m

    if params.is_infinite:
        gS = np.zeros_like(S)
    else:
        gS = _grad_term_gradient(grid, S, 1.0 / (grid.h * grid.rmid))
        sec = np.zeros_like(S)
        sec[1:] = -w[1:] * (params.d - S[1:]) * f[1:] ** 2 / grid.r[1:] ** 2
        gS += sec
    return gf, gS, gm


def residual_floor(params: ModelParams, p: Profile) -> float:
    """Roundoff floor of the scaled residual's sup norm.

    Nodal values are quantized at eps times their magnitude, the stencil
    amplifies that by the stiffness coefficients, and the residual divides
    by the quadrature weight, so no iteration can push the weighted residual
    below eps * sup_i [sum of |coefficient * value| feeding row i] / w_i.
    Convergence tests clip their tolerance at this value (it only binds on
    graded meshes, whose origin weights are tiny).
    """
    grid, w = p.grid, p.grid.w
    f, S, m = p.f, p.S, p.m
    Pabs = np.abs(1.0 - f * f - m * m)
    k2 = params.kappa_eff ** 2
    wind_c = _winding_coef(params, grid, p)
    stiff = grid.rmid / grid.h

    def acc_abs(u, coef):
        t = coef * (np.abs(u[:-1]) + np.abs(u[1:]))
        a = np.zeros_like(u)
        a[:-1] += t
        a[1:] += t
        return a

    af = acc_abs(f, stiff) + w * (wind_c * np.abs(f) + k2 * Pabs * np.abs(f))
    am = acc_abs(m, stiff) + w * k2 * (params.g * np.abs(m) + Pabs * np.abs(m))
    sup = max(float(np.max(af / w)), float(np.max(am / w)))
    if not params.is_infinite:
        aS = acc_abs(S, 1.0 / (grid.h * grid.rmid))
        sec = np.zeros_like(S)
        sec[1:] = w[1:] * (params.d + np.abs(S[1:])) * f[1:] ** 2 / grid.r[1:] ** 2
        sup = max(sup, float(np.max((aS + sec) * grid.r / w)))
    return float(np.finfo(float).eps) * sup


def residual(params: ModelParams, p: Profile) -> TangentDirection:
    """Strong-form residual of the discrete Euler-Lagrange system.

    Interior rows are the quadrature-scaled energy gradient, so that
    <residual, dir> equals the directional derivative of the energy exactly;
    they agree with the continuum equations (the S-row divided by r) to
    second order.  Boundary rows carry the clamp residuals f(0), f(R)-1,
    S(0), S(R)-d, m(R).
    """
    grid = p.grid
    gf, gS, gm = _gradient_fields(params, p)
    w = grid.w
    res_u = gf / w
    res_w = gm / w
    res_u[0] = p.f[0]
    res_u[-1] = p.f[-1] - 1.0
    res_w[-1] = p.m[-1]
    if params.is_infinite:
        res_v = np.zeros_like(gS)
    else:
        res_v = gS * grid.r / w
        res_v[0] = p.S[0]
        res_v[-1] = p.S[-1] - params.d
    return TangentDirection(res_u, res_v, res_w)


# ---------------------------------------------------------------------------
# Second variation
# ---------------------------------------------------------------------------

def _active_nodes(field: str, n: int) -> np.ndarray:
    keep = np.ones(n, dtype=bool)
    keep[-1] = False                      # far-field clamp for every field
    if field in ("f", "S"):
        keep[0] = False                   # f(0) = 0, S(0) = 0 (v slot inert)
    return keep


class DofMap:
    """Node-interleaved indexing of the active degrees of freedom."""

    def __init__(self, fields: tuple, n: int):
        self.fields = fields
        self.n = n
        nf = len(fields)
        active = np.zeros((nf, n), dtype=bool)
        for a, name in enumerate(fields):
            active[a] = _active_nodes(name, n)
        flat = active.T.reshape(-1)
        idx_flat = -np.ones(flat.size, dtype=np.int64)
        idx_flat[flat] = np.arange(int(flat.sum()))
        self.idx = idx_flat.reshape(n, nf).T
        self.size = int(flat.sum())
        p = 0
        for i in range(n - 1):
            vals = np.concatenate([self.idx[:, i], self.idx[:, i + 1]])
            vals = vals[vals >= 0]
            if vals.size:
                p = max(p, int(vals.max() - vals.min()))
        self.p = p

    def pack(self, arrays) -> np.ndarray:
        x = np.empty(self.size)
        for a in range(len(self.fields)):
            sel = self.idx[a] >= 0
            x[self.idx[a][sel]] = arrays[a][sel]
        return x

    def unpack(self, x: np.ndarray):
        out = []
        for a in range(len(self.fields)):
            arr = np.zeros(self.n)
            sel = self.idx[a] >= 0
            arr[sel] = x[self.idx[a][sel]]
            out.append(arr)
        return out

    def weights(self, w: np.ndarray) -> np.ndarray:
        out = np.empty(self.size)
        for a in range(len(self.fields)):
            sel = self.idx[a] >= 0
            out[self.idx[a][sel]] = w[sel]
        return out


class HessianOperator:
    """Discrete second variation as a symmetric operator on TangentDirection.

    Internally a banded matrix K (exact second derivative of the discrete
    energy, with the S block conjugated to the v = delta_S / r variables) on
    the active DOFs, together with the quadrature weights W.  The operator is
    H = W^{-1} K, symmetric in the W inner product; <dir, H dir> equals the
    second directional derivative of the energy.
    """

    def __init__(self, params: ModelParams, p: Profile, fields: tuple):
        self.params = params
        self.profile = p
        self.grid = p.grid
        self.fields = fields
        self.dof = DofMap(fields, p.grid.n)
        self.wdof = self.dof.weights(p.grid.w)
        self.K, self.lower_bound = _assemble_hessian(params, p, fields, self.dof)

    # -- TangentDirection interface ------------------------------------
    def _dir_arrays(self, dir: TangentDirection):
        return [dir.slot(FIELD_SLOTS[name]) for name in self.fields]

    def pack_dir(self, dir: TangentDirection) -> np.ndarray:
        return self.dof.pack(self._dir_arrays(dir))

    def unpack_dir(self, x: np.ndarray) -> TangentDirection:
        out = TangentDirection.zeros(self.grid)
        for name, arr in zip(self.fields, self.dof.unpack(x)):
            out.slot(FIELD_SLOTS[name])[:] = arr
        return out

    def matvec(self, dir: TangentDirection) -> TangentDirection:
        x = self.pack_dir(dir)
        return self.unpack_dir(self.K.matvec(x) / self.wdof)

    def quad_form(self, dir: TangentDirection) -> float:
        x = self.pack_dir(dir)
        return float(x @ self.K.matvec(x))

    def inner(self, a: TangentDirection, b: TangentDirection) -> float:
        """Quadrature inner product over the operator's active slots."""
        return float(self.pack_dir(a) * self.wdof @ self.pack_dir(b))

    def solve(self, rhs: TangentDirection) -> TangentDirection:
        """Solve H x = rhs, i.e. K x = W rhs."""
        return self.unpack_dir(self.solve_raw(self.pack_dir(rhs) * self.wdof))

    def solve_raw(self, b: np.ndarray, shift: float = 0.0) -> np.ndarray:
        """Solve (K - shift W) x = b through the W^{-1/2} conjugation (the
        symmetrized system has the pencil's condition number, not the one
        inflated by tiny origin weights), with two rounds of iterative
        refinement to pull the step error toward the evaluation floor."""
        s = 1.0 / np.sqrt(self.wdof)
        c = self.K.scaled(s)
        if shift:
            c = c.shifted(shift)
        bs = b * s
        y = c.solve(bs)
        for _ in range(2):
            r = bs - c.matvec(y)
            y = y + c.solve(r)
        return y * s

    def min_eig(self, tol: float = 1e-11):
        lam, y = smallest_eig(self.K, self.wdof, self.lower_bound, tol=tol)
        return lam, self.unpack_dir(y)


def _assemble_hessian(params: ModelParams, p: Profile, fields: tuple,
                      dof: DofMap):
    """Banded second derivative of the discrete energy in (u, v, w) variables
    plus a rigorous spectral lower bound for the pencil (K, W): the stiffness
    parts are positive semidefinite, so min over nodes of the smallest
    eigenvalue of the local coupling block bounds the spectrum from below."""
    grid = p.grid
    n, w, r = grid.n, grid.w, grid.r
    f, S, m = p.f, p.S, p.m
    K = BandedMatrix(dof.size, dof.p)
    nf = len(fields)
    pos = {name: a for a, name in enumerate(fields)}
    blocks = np.zeros((n, nf, nf))
    P = 1.0 - f * f - m * m
    k2 = params.kappa_eff ** 2
    wind_c = _winding_coef(params, grid, p)

    lo = np.arange(n - 1)
    hi = lo + 1

    def add_stiffness(a: int, cell_coef: np.ndarray):
        i0, i1 = dof.idx[a][lo], dof.idx[a][hi]
        K.add(i0, i0, cell_coef)
        K.add(i1, i1, cell_coef)
        K.add_sym(i0, i1, -cell_coef)

    def add_diag(a: int, b: int, b_nodes: np.ndarray):
        """Local coupling w_i * b_nodes[i] between fields a and b at node i."""
        ia, ib = dof.idx[a], dof.idx[b]
        if a == b:
            K.add(ia, ia, w * b_nodes)
            blocks[:, a, a] += b_nodes
        else:
            K.add_sym(ia, ib, w * b_nodes)
            blocks[:, a, b] += b_nodes
            blocks[:, b, a] += b_nodes

    if "f" in pos:
        add_stiffness(pos["f"], grid.rmid / grid.h)
        add_diag(pos["f"], pos["f"], wind_c + k2 * (2.0 * f * f - P))
    if "m" in pos:
        add_stiffness(pos["m"], grid.rmid / grid.h)
        add_diag(pos["m"], pos["m"], k2 * (params.g + 2.0 * m * m - P))
    if "f" in pos and "m" in pos:
        add_diag(pos["f"], pos["m"], k2 * 2.0 * f * m)
    if "S" in pos:
        # magnetic term in v variables: 1/2 sum (r_hi v_hi - r_lo v_lo)^2/(h rbar)
        a = pos["S"]
        coef = 1.0 / (grid.h * grid.rmid)
        iv0, iv1 = dof.idx[a][lo], dof.idx[a][hi]
        K.add(iv0, iv0, coef * r[lo] ** 2)
        K.add(iv1, iv1, coef * r[hi] ** 2)
        K.add_sym(iv0, iv1, -coef * r[lo] * r[hi])
        dvv = np.zeros(n)
        dvv[1:] = f[1:] ** 2
        add_diag(a, a, dvv)
        if "f" in pos:
            dfv = np.zeros(n)
            dfv[1:] = -2.0 * (params.d - S[1:]) * f[1:] / r[1:]
            add_diag(pos["f"], a, dfv)
    lower = float(np.min(np.linalg.eigvalsh(blocks)))
    return K, lower


def hessian(params: ModelParams, p: Profile, fields: tuple | None = None) -> HessianOperator:
    """Assemble the second variation at p (p need not solve the equations)."""
    if fields is None:
        fields = params.fields()
    return HessianOperator(params, p, fields)


# ---------------------------------------------------------------------------
# Exact identities
# ---------------------------------------------------------------------------

def quotient_form(params: ModelParams, p: Profile, dir: TangentDirection) -> float:
    """Ground-state representation of the kappa=inf second variation:

        int { f^2 [(u/f)']^2 + m^2 [(w/m)']^2 + 2 (f u + m w)^2 } r dr

    Requires f > 0 at interior nodes and m > 0 everywhere.  The quotients are
    differenced cell-wise; the r = 0 value of u/f is taken as the limit ratio
    at the first interior node (u and f both vanish like r^d there).
    """
    if not params.is_infinite:
        raise ValueError("quotient form is defined for the kappa=inf system")
    grid = p.grid
    f, m = p.f, p.m
    if np.any(f[1:-1] <= 0.0) or np.any(m[:-1] <= 0.0):
        raise ValueError("quotient form needs f > 0 at interior nodes and m > 0")
    qf = np.empty(grid.n)
    qf[1:] = dir.u[1:] / f[1:]
    qf[0] = dir.u[1] / f[1]
    qm = np.empty(grid.n)
    qm[:-1] = dir.w[:-1] / m[:-1]
    # m is clamped to 0 at the truncation radius; continue the quotient by
    # its last interior value (the dropped cell term is an exponential tail)
    qm[-1] = dir.w[-1] / m[-1] if m[-1] > 0.0 else qm[-2]
    fbar = 0.5 * (f[:-1] + f[1:])
    mbar = 0.5 * (m[:-1] + m[1:])
    t1 = float(np.sum((fbar * np.diff(qf) / grid.h) ** 2 * grid.rmid * grid.h))
    t2 = float(np.sum((mbar * np.diff(qm) / grid.h) ** 2 * grid.rmid * grid.h))
    t3 = 2.0 * float(np.sum(grid.w * (f * dir.u + m * dir.w) ** 2))
    return t1 + t2 + t3


def pohozaev_residual(params: ModelParams, p: Profile):
    """Pohozaev identity check for finite-energy solutions.

    Finite kappa:  g k^2 int m^2 + k^2/2 int (1-f^2-m^2)^2  =  int (S'/r)^2,
    kappa = inf:   the same left side with unit kappa factors  =  d^2/2.

    Returns (lhs, rhs, rel_err); meaningful only on converged solutions.
    """
    grid, w = p.grid, p.grid.w
    P = 1.0 - p.f ** 2 - p.m ** 2
    k2 = params.kappa_eff ** 2
    lhs = k2 * params.g * float(np.sum(w * p.m ** 2)) + 0.5 * k2 * float(np.sum(w * P * P))
    if params.is_infinite:
        rhs = 0.5 * params.d ** 2
    else:
        dS = np.diff(p.S)
        rhs = float(np.sum(dS * dS / (grid.h * grid.rmid)))
    rel = abs(lhs - rhs) / max(abs(rhs), 1e-30)
    return lhs, rhs, rel
