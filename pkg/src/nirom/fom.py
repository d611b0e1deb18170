"""Full-order reference solver, parameter designs and snapshot sets.

The solver here stands in for the black-box high-fidelity code: the
reduction pipeline only ever sees the snapshots it writes.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import qmc

from .errors import ConvergenceError, DimensionError, NiromError, ParameterError
from .fvm import assemble_diffusion
from .io import read_json, read_romb, write_json, write_romb
from .mesh import BOUNDARY
from .observables import scaled_expm1

__all__ = [
    "ParameterDesign",
    "SnapshotSet",
    "lhs_sample",
    "canonical_forcing",
    "solve_canonical",
    "generate_snapshots",
    "CANONICAL_RANGES",
]

log = logging.getLogger(__name__)

CANONICAL_RANGES = ((0.01, 2.0), (0.01, 2.0))


@dataclass(frozen=True, eq=False)
class ParameterDesign:
    ranges: np.ndarray
    points: np.ndarray
    roles: tuple = ()
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "ranges", np.asarray(self.ranges, dtype=float).reshape(-1, 2))
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if not self.roles:
            object.__setattr__(self, "roles", ("train",) * len(pts))
        if len(self.roles) != len(pts):
            raise DimensionError("one role tag per design point is required")

    def __len__(self):
        return self.points.shape[0]

    def subset(self, role):
        keep = [i for i, r in enumerate(self.roles) if r == role]
        return ParameterDesign(self.ranges, self.points[keep], tuple(role for _ in keep), self.seed)

    def to_dict(self):
        return {
            "ranges": self.ranges.tolist(),
            "points": self.points.tolist(),
            "roles": list(self.roles),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["ranges"], d["points"], tuple(d.get("roles", ())), d.get("seed"))


def lhs_sample(ranges, count, seed=0, role="train"):
    """Latin-hypercube design of ``count`` points in the box ``ranges``.

    Each coordinate has exactly one point in each of ``count`` equal-width
    strata, placed uniformly at random inside its stratum; coordinates are
    coupled through random permutations. Same seed, same design.
    """
    ranges = np.asarray(ranges, dtype=float).reshape(-1, 2)
    if count < 1:
        raise ValueError("a design needs at least one point")
    if ranges.shape[0] == 0 or np.any(ranges[:, 1] < ranges[:, 0]):
        raise ValueError(f"invalid parameter ranges {ranges.tolist()}")
    unit = qmc.LatinHypercube(d=ranges.shape[0], seed=np.random.default_rng(seed)).random(count)
    points = ranges[:, 0] + unit * (ranges[:, 1] - ranges[:, 0])
    return ParameterDesign(ranges, points, (role,) * count, seed)


def canonical_forcing(centroids):
    x, y = np.asarray(centroids).T
    return 100.0 * np.sin(2.0 * np.pi * x) * np.sin(2.0 * np.pi * y)


class _CanonicalOperator:
    """Linear part of the discrete canonical residual, reused across solves."""

    def __init__(self, geom):
        mesh = geom.mesh
        self.geom = geom
        self.areas = geom.cell_areas
        L = assemble_diffusion(geom).matrix
        bnd = np.flatnonzero(mesh.face_cells[:, 1] == BOUNDARY)
        owner = mesh.face_cells[bnd, 0]
        dist = np.hypot(*(geom.face_midpoints[bnd] - geom.cell_centroids[owner]).T)
        wall = np.bincount(owner, weights=geom.face_areas[bnd] / dist, minlength=mesh.n_cells)
        # -div grad with u = 0 ghost values on boundary faces
        self.K = (-L + sp.diags(wall)).tocsc()


def solve_canonical(
    geom,
    mu,
    tol=1e-10,
    max_iter=50,
    forcing=None,
    u0=None,
    return_history=False,
    _operator=None,
):
    """Newton solve of ``-lap u + (mu1/mu2)(exp(mu2 u) - 1) = f`` with ``u = 0`` on the boundary.

    The residual is the integral-form finite-volume balance per cell. A step
    is halved (up to 30 times) while it fails to reduce the residual norm.

    Parameters
    ----------
    geom : MeshGeometry
    mu : (float, float)
    tol : float
        Absolute tolerance on the residual 2-norm.
    forcing : array_like, optional
        Cell-centered forcing; defaults to ``100 sin(2 pi x) sin(2 pi y)``.

    Returns
    -------
    u : ndarray
        Cell-centered solution. With ``return_history`` also the list of
        residual norms, one per Newton iterate.
    """
    mu1, mu2 = (float(m) for m in mu)
    if mu1 <= 0 or mu2 <= 0:
        raise ParameterError(f"mu must be positive, got {(mu1, mu2)}")
    if not all(lo <= m <= hi for m, (lo, hi) in zip((mu1, mu2), CANONICAL_RANGES)):
        warnings.warn(f"mu={(mu1, mu2)} is outside the design box {CANONICAL_RANGES}", stacklevel=2)

    op = _operator or _CanonicalOperator(geom)
    V = op.areas
    f = canonical_forcing(geom.cell_centroids) if forcing is None else np.asarray(forcing, float)
    rhs = V * f

    def residual(u):
        return op.K @ u + V * mu1 * scaled_expm1(u, mu2) - rhs

    u = np.zeros(geom.n_cells) if u0 is None else np.array(u0, dtype=float)
    r = residual(u)
    norm = float(np.linalg.norm(r))
    history = [norm]
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"Newton did not converge in {max_iter} iterations (residual {norm:.3e})",
                residual=norm,
                iterations=it,
            )
        J = op.K + sp.diags(V * mu1 * np.exp(mu2 * u))
        try:
            du = spla.spsolve(J.tocsc(), -r)
        except RuntimeError as exc:
            raise ConvergenceError(f"singular Newton system: {exc}", residual=norm, iterations=it) from exc
        if not np.all(np.isfinite(du)):
            raise ConvergenceError("singular Newton system", residual=norm, iterations=it)
        step = 1.0
        for _ in range(31):
            trial = u + step * du
            with np.errstate(over="ignore", invalid="ignore"):
                r_trial = residual(trial)
            n_trial = float(np.linalg.norm(r_trial))
            if np.isfinite(n_trial) and n_trial < norm:
                break
            step *= 0.5
        else:
            raise ConvergenceError(
                f"line search failed at iteration {it} (residual {norm:.3e})",
                residual=norm,
                iterations=it,
            )
        u, r, norm = trial, r_trial, n_trial
        history.append(norm)
        it += 1
    log.debug("canonical solve mu=%s: %d iterations, residual %.3e", (mu1, mu2), it, norm)
    return (u, history) if return_history else u


@dataclass(eq=False)
class SnapshotSet:
    """Lifted snapshots as columns of ``matrix``, ordered like ``thetas``."""

    matrix: np.ndarray
    thetas: np.ndarray
    system: str
    n_cells: int
    mesh_id: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        if self.matrix.shape[1] != self.thetas.shape[0]:
            raise DimensionError("snapshot columns and parameter rows disagree")
        if not np.all(np.isfinite(self.matrix)):
            raise NiromError("snapshot matrix contains non-finite entries")

    @property
    def n_snapshots(self):
        return self.matrix.shape[1]

    @property
    def n_observables(self):
        return self.matrix.shape[0] // self.n_cells

    def block(self, i):
        """Rows of observable ``i`` (``n_cells x M``)."""
        return self.matrix[i * self.n_cells : (i + 1) * self.n_cells]

    def save(self, path):
        """Write ``<path>`` (ROMB) and ``<path>.json`` (manifest)."""
        path = Path(path)
        write_romb(path, self.matrix)
        write_json(
            path.with_name(path.name + ".json"),
            {
                "thetas": self.thetas.tolist(),
                "system": self.system,
                "n_cells": self.n_cells,
                "mesh": self.mesh_id,
                **self.extra,
            },
        )

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = read_json(path.with_name(path.name + ".json"))
        extra = {k: v for k, v in meta.items() if k not in ("thetas", "system", "n_cells", "mesh")}
        return cls(read_romb(path), meta["thetas"], meta["system"], meta["n_cells"], meta.get("mesh", ""), extra)


def generate_snapshots(design, system, geom, tol=1e-10, max_iter=50, mesh_id="", max_workers=1):
    """Solve the canonical full-order model at every design point and lift.

    Results are ordered by design index whatever the completion order.
    """
    points = design.points if isinstance(design, ParameterDesign) else np.atleast_2d(design)
    op = _CanonicalOperator(geom)

    def one(i):
        theta = points[i]
        try:
            u = solve_canonical(geom, theta, tol=tol, max_iter=max_iter, _operator=op)
        except NiromError as exc:
            raise type(exc)(f"snapshot {i} at theta={tuple(theta)}: {exc}") from exc
        return system.lift(u, theta)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            cols = list(pool.map(one, range(len(points))))
    else:
        cols = [one(i) for i in range(len(points))]
    extra = {"tol": tol, "max_iter": max_iter}
    if isinstance(design, ParameterDesign):
        extra["seed"] = design.seed
    return SnapshotSet(np.column_stack(cols), points, system.name, geom.n_cells, mesh_id, extra)
