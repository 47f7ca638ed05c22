"""Symmetric banded assembly and eigen/linear solves for the 1-D stencils.

Degrees of freedom are interleaved node-by-node, so nearest-neighbor
couplings of up to three fields give half-bandwidth <= 5.  Matrices are kept
in the LAPACK diag-ordered form used by scipy.linalg.solve_banded: entry
(i, j) lives at ab[p + i - j, j] for |i - j| <= p.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded


class BandedMatrix:
    """Square banded matrix accumulated from scattered symmetric entries."""

    def __init__(self, size: int, halfband: int):
        self.size = size
        self.p = halfband
        self.ab = np.zeros((2 * halfband + 1, size))

    def add(self, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray):
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        keep = (rows >= 0) & (cols >= 0)
        if not np.all(keep):
            rows, cols, vals = rows[keep], cols[keep], np.asarray(vals)[keep]
        np.add.at(self.ab, (self.p + rows - cols, cols), vals)

    def add_sym(self, rows, cols, vals):
        """Add entries and their transposes (for off-diagonal couplings)."""
        self.add(rows, cols, vals)
        self.add(cols, rows, vals)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = np.zeros_like(x)
        p, ab = self.p, self.ab
        for k in range(-p, p + 1):
            diag = ab[p + k, :]
            if k >= 0:
                # entries (j + k, j)
                y[k:] += diag[: self.size - k] * x[: self.size - k]
            else:
                y[: self.size + k] += diag[-k:] * x[-k:]
        return y

    def solve(self, b: np.ndarray) -> np.ndarray:
        return solve_banded((self.p, self.p), self.ab, b)

    def scaled(self, s: np.ndarray) -> "BandedMatrix":
        """Return diag(s) @ A @ diag(s) in banded form."""
        out = BandedMatrix(self.size, self.p)
        p = self.p
        for k in range(-p, p + 1):
            row = self.ab[p + k, :].copy()
            if k >= 0:
                row[: self.size - k] *= s[k:] * s[: self.size - k]
                row[self.size - k:] = 0.0
            else:
                row[-k:] *= s[: self.size + k] * s[-k:]
                row[:-k] = 0.0
            out.ab[p + k, :] = row
        return out

    def shifted(self, sigma: float) -> "BandedMatrix":
        out = BandedMatrix(self.size, self.p)
        out.ab[:] = self.ab
        out.ab[self.p, :] -= sigma
        return out

    def dense(self) -> np.ndarray:
        a = np.zeros((self.size, self.size))
        p = self.p
        for k in range(-p, p + 1):
            d = self.ab[p + k, :]
            if k >= 0:
                a[np.arange(k, self.size), np.arange(self.size - k)] = d[: self.size - k]
            else:
                a[np.arange(self.size + k), np.arange(-k, self.size)] = d[-k:]
        return a

    def gershgorin_lower(self) -> float:
        p = self.p
        offdiag = np.zeros(self.size)
        for k in range(-p, p + 1):
            if k == 0:
                continue
            d = self.ab[p + k, :]
            if k >= 0:
                offdiag[k:] += np.abs(d[: self.size - k])
            else:
                offdiag[: self.size + k] += np.abs(d[-k:])
        return float(np.min(self.ab[p, :] - offdiag))


class CholeskyBanded:
    """Factored SPD banded matrix for repeated solves (flow stepping)."""

    def __init__(self, bm: BandedMatrix):
        self.cb = cholesky_banded(bm.ab[: bm.p + 1], lower=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self.cb, False), b)


class EigenFailure(RuntimeError):
    pass


def smallest_eig(kmat: BandedMatrix, weights: np.ndarray, lower_bound: float,
                 tol: float = 1e-11, max_iter: int = 400, rng_seed: int = 7):
    """Smallest eigenpair of the pencil K y = lambda W y (W diagonal SPD).

    lower_bound must satisfy x^T K x >= lower_bound * x^T W x (the assemblers
    supply the exact per-node coupling-block bound; the stiffness part is
    PSD).  Works on the symmetrized C = W^{-1/2} K W^{-1/2}: inverse
    iteration shifted just below the bound until the Rayleigh quotient
    settles, then Rayleigh-quotient shifts, which converge cubically near the
    simple ground state.  Returns (lambda, y) with sum(W y^2) = 1.
    """
    s = 1.0 / np.sqrt(weights)
    c = kmat.scaled(s)
    rng = np.random.default_rng(rng_seed)
    x = rng.standard_normal(kmat.size)
    x /= np.linalg.norm(x)

    sigma = lower_bound - 0.05 * (1.0 + abs(lower_bound))
    theta_prev = np.inf
    theta = float(x @ c.matvec(x))
    res = np.inf
    best_res, best = np.inf, (theta, x)
    stall = 0
    fixed_phase = True
    for it in range(max_iter):
        try:
            y = c.shifted(sigma).solve(x)
        except np.linalg.LinAlgError:
            sigma -= max(1.0, abs(sigma)) * 1e-8
            continue
        nrm = np.linalg.norm(y)
        if not np.isfinite(nrm) or nrm == 0.0:
            sigma -= max(1.0, abs(sigma)) * 1e-8
            continue
        x = y / nrm
        theta_prev, theta = theta, float(x @ c.matvec(x))
        res = np.linalg.norm(c.matvec(x) - theta * x)
        scale = max(1.0, abs(theta))
        if res < best_res * 0.9:
            best_res, best = res, (theta, x)
            stall = 0
        else:
            stall += 1
        if res < tol * scale:
            break
        if stall >= 6 and best_res < 1e-8 * scale:
            # roundoff floor of the shifted solves (graded meshes carry
            # stiffness ~ 1/h_min^2); the eigenvalue error is O(res^2/gap)
            theta, x = best
            break
        if fixed_phase and it >= 5 and abs(theta - theta_prev) < 1e-3 * scale:
            fixed_phase = False
        if not fixed_phase:
            sigma = theta
    else:
        raise EigenFailure(f"inverse iteration did not converge in {max_iter} steps "
                           f"(last residual {res:.2e})")

    # fix sign by the dominant component, return in the W-inner-product scale
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    y = x * s
    return theta, y
