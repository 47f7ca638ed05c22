"""Stable file formats: profile/branch CSV with JSON sidecars.

Profile CSV has header r,f,S,m, one row per node, 17 significant digits
(lossless float64 round trip); the sidecar (same stem, .json) carries the
parameters, grid metadata, energy, and Pohozaev residual.  Branch CSV has
header g,m0,energy,lambda_min,pohozaev_rel,newton_iters with a metadata
sidecar holding the threshold and the transition-order fit.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .continuation import Branch, BranchPoint
from .grid import RadialGrid, grid_from_nodes
from .model import INF, ModelParams, Profile

PROFILE_HEADER = "r,f,S,m"
BRANCH_HEADER = "g,m0,energy,lambda_min,pohozaev_rel,newton_iters"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def kappa_to_json(kappa: float):
    return "inf" if math.isinf(kappa) else kappa


def kappa_from_json(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return INF
        return float(value)
    return float(value)


def sidecar_path(csv_path: str) -> str:
    root, ext = os.path.splitext(csv_path)
    return (root if ext.lower() == ".csv" else csv_path) + ".json"


def save_profile(path: str, params: ModelParams, profile: Profile,
                 energy_total: float, pohozaev_rel_err: float,
                 extra: dict | None = None) -> str:
    lines = [PROFILE_HEADER]
    for r, f, S, m in zip(profile.grid.r, profile.f, profile.S, profile.m):
        lines.append(",".join((_fmt(r), _fmt(f), _fmt(S), _fmt(m))))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = {
        "kappa": kappa_to_json(params.kappa),
        "d": params.d,
        "g": params.g,
        "r_max": profile.grid.r_max,
        "n": profile.grid.n,
        "grading": profile.grid.grading,
        "energy_total": energy_total,
        "pohozaev_rel_err": pohozaev_rel_err,
    }
    if extra:
        meta.update(extra)
    spath = sidecar_path(path)
    with open(spath, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return spath


def load_profile(path: str):
    """Returns (params, profile, meta).  The grid is rebuilt from the stored
    nodes, so quadrature weights are bit-identical to the writer's."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim != 2 or data.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 columns ({PROFILE_HEADER})")
    with open(path) as fh:
        header = fh.readline().strip()
    if header != PROFILE_HEADER:
        raise ValueError(f"{path}: bad header {header!r}, expected {PROFILE_HEADER!r}")
    with open(sidecar_path(path)) as fh:
        meta = json.load(fh)
    grid = grid_from_nodes(data[:, 0], grading=meta.get("grading", "custom"))
    profile = Profile(grid, data[:, 1].copy(), data[:, 2].copy(), data[:, 3].copy())
    params = ModelParams(kappa=kappa_from_json(meta["kappa"]), d=int(meta["d"]),
                         g=float(meta["g"]))
    return params, profile, meta


def save_branch(path: str, branch: Branch, extra: dict | None = None) -> str:
    lines = [BRANCH_HEADER]
    for p in branch.points:
        lines.append(",".join((_fmt(p.g), _fmt(p.m0), _fmt(p.energy),
                               _fmt(p.lambda_min), _fmt(p.pohozaev_rel),
                               str(p.newton_iters))))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = {
        "kappa": kappa_to_json(branch.kappa),
        "d": branch.d,
        "g_star": branch.g_star,
        "n_points": len(branch.points),
    }
    if extra:
        meta.update(extra)
    spath = sidecar_path(path)
    with open(spath, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return spath


def load_branch(path: str):
    with open(path) as fh:
        header = fh.readline().strip()
    if header != BRANCH_HEADER:
        raise ValueError(f"{path}: bad header {header!r}, expected {BRANCH_HEADER!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta_path = sidecar_path(path)
    meta = None
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
    points = [BranchPoint(g=row[0], m0=row[1], energy=row[2], lambda_min=row[3],
                          pohozaev_rel=row[4], newton_iters=int(row[5]))
              for row in data]
    branch = Branch(kappa=kappa_from_json(meta["kappa"]) if meta else math.nan,
                    d=int(meta["d"]) if meta else 0,
                    g_star=float(meta["g_star"]) if meta else math.nan,
                    points=points)
    return branch, meta
