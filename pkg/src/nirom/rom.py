"""Reduced systems: projection, the constrained reduced solve and storage.

The reduced model at a parameter point is::

    minimize   0.5 * ||B yr - f||^2
    subject to h(yr) = 0

with ``B = (A Phi)^T (A Phi)``, ``f = (A Phi)^T f_full`` and ``h`` the
DEIM-evaluated observable constraints.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .deim import DeimInterpolant, evaluate_constraint_reduced
from .errors import ConvergenceError, DimensionError, FormatError
from .fvm import (
    IDENTITY,
    BlockOperator,
    SparseOperator,
    assemble_diffusion,
    assemble_gradient,
)
from .io import read_indices, read_json, read_romb, write_indices, write_json, write_romb
from .pod import BlockBasis

__all__ = [
    "RomInstance",
    "RomDatabase",
    "RomSolution",
    "project",
    "solve_rom",
    "reconstruct",
    "predict",
    "canonical_block_operator",
    "euler_block_operator",
]

log = logging.getLogger(__name__)


def canonical_block_operator(geom, lumped="identity"):
    """``A = [-L  I]`` acting on ``[y1; y2]``.

    ``lumped="volume"`` replaces the identity with ``diag(cell areas)`` so that
    both blocks are in integral form.
    """
    L = assemble_diffusion(geom)
    neg = SparseOperator(-L.matrix, "generic")
    if lumped == "identity":
        second = IDENTITY
    elif lumped == "volume":
        second = geom.cell_areas.copy()
    else:
        raise ValueError(f"unknown lumping {lumped!r}")
    return BlockOperator([[neg, second]], geom.n_cells, ("y1", "y2"))


def euler_block_operator(geom):
    """The 4 x 8 gradient block layout acting on the lifted Euler observables."""
    gx = assemble_gradient(geom, "x")
    gy = assemble_gradient(geom, "y")
    z = None
    blocks = [
        [gx, gy, z, z, z, z, z, z],
        [z, z, gy, gx, gx, z, z, z],
        [z, z, gx, gy, z, gy, z, z],
        [z, z, z, z, z, z, gx, gy],
    ]
    return BlockOperator(blocks, geom.n_cells, tuple(f"y{i}" for i in range(1, 9)))


def _matrix(A):
    if isinstance(A, BlockOperator):
        return A.tocsr()
    if isinstance(A, SparseOperator):
        return A.matrix
    return A


@dataclass(frozen=True, eq=False)
class RomInstance:
    """Reduced normal-equation system at one parameter point."""

    B: np.ndarray
    f: np.ndarray
    theta: np.ndarray
    y0: np.ndarray | None = None
    stencil: object = None

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        f = np.asarray(self.f, dtype=float).ravel()
        if B.ndim != 2 or B.shape[0] != B.shape[1] or B.shape[0] != f.size:
            raise DimensionError(f"reduced matrix {B.shape} and vector ({f.size},) do not conform")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))

    @property
    def k(self):
        return self.f.size

    def objective(self, yr):
        r = self.B @ yr - self.f
        return 0.5 * float(r @ r)


def project(A, f, basis, theta=()):
    """Project ``A y = f`` onto the trial basis with test basis ``A Phi``.

    The tall product ``A Phi`` is formed first; ``A^T A`` never is.
    ``f`` may be a matrix of right-hand sides, in which case the reduced
    vectors come back as columns.
    """
    Phi = basis.matrix if isinstance(basis, BlockBasis) else np.asarray(basis, dtype=float)
    M = _matrix(A)
    if M.shape[1] != Phi.shape[0]:
        raise DimensionError(f"operator has {M.shape[1]} columns, basis has {Phi.shape[0]} rows")
    f = np.asarray(f, dtype=float)
    if f.shape[0] != M.shape[0]:
        raise DimensionError(f"operator has {M.shape[0]} rows, right-hand side has {f.shape[0]}")
    AP = M @ Phi
    AP = np.asarray(AP.toarray() if sp.issparse(AP) else AP)
    B = AP.T @ AP
    B = 0.5 * (B + B.T)
    ft = AP.T @ f
    if ft.ndim == 2:
        return B, ft
    return RomInstance(B, ft, theta)


def reconstruct(basis, yr):
    """Full observable vector ``Phi yr``."""
    Phi = basis.matrix if isinstance(basis, BlockBasis) else np.asarray(basis, dtype=float)
    yr = np.asarray(yr, dtype=float)
    if yr.shape[0] != Phi.shape[1]:
        raise DimensionError(f"basis has {Phi.shape[1]} columns, coordinates have {yr.shape[0]}")
    return Phi @ yr


@dataclass
class RomSolution:
    y: np.ndarray
    converged: bool
    iterations: int
    objective: float
    violation: float
    kkt: float
    merit_history: list = field(default_factory=list)
    """``(before, after)`` merit pairs of every accepted step, same penalty in both."""
    multipliers: np.ndarray | None = None


def _constraints(yr, interpolants, system, theta):
    if not interpolants:
        return np.zeros(0), np.zeros((0, yr.size))
    return evaluate_constraint_reduced(yr, interpolants, system, theta)


def solve_rom(
    instance,
    system=None,
    interpolants=(),
    y0=None,
    tol_kkt=1e-8,
    tol_feas=1e-8,
    max_iter=200,
):
    """Equality-constrained least squares by SQP.

    Each step solves the KKT system with Gauss-Newton Hessian ``B^T B`` plus
    a Levenberg shift (relative ``1e-10``, grown tenfold while the system is
    singular), then backtracks on the merit ``0.5 ||B y - f||^2 + pi ||h||_1``.
    Tolerances are relative to ``1 + ||B^T f||_inf`` (stationarity) and
    ``1 + ||C y||_inf`` (feasibility, ``C`` the linear part of ``h``).

    Returns
    -------
    RomSolution
        Non-converged runs return the best iterate with ``converged=False``
        and a warning.
    """
    B, fv = instance.B, instance.f
    theta = instance.theta
    k = instance.k
    if y0 is None:
        y0 = instance.y0 if instance.y0 is not None else np.zeros(k)
    y = np.array(y0, dtype=float)
    if y.shape != (k,) or not np.all(np.isfinite(y)):
        raise ValueError("initial guess must be a finite vector of the reduced size")

    H0 = B.T @ B
    Btf = B.T @ fv
    lam0 = 1e-10 * max(float(np.max(np.abs(np.diag(H0)))), 1e-300)
    kkt_scale = 1.0 + float(np.max(np.abs(Btf), initial=0.0))
    linear = [it.linear for it in interpolants]

    def feas_scale(yy):
        if not linear:
            return 1.0
        return 1.0 + max(float(np.max(np.abs(C @ yy), initial=0.0)) for C in linear)

    def objective(yy):
        r = B @ yy - fv
        return 0.5 * float(r @ r)

    pi = 0.0
    h, J = _constraints(y, interpolants, system, theta)
    hist = []
    best = None
    nu = None
    converged = False
    it = 0
    for it in range(max_iter + 1):
        g = H0 @ y - Btf
        if h.size:
            # multipliers from a full step are exact for the new point's
            # linearization; otherwise take the least-squares estimate
            if nu is None:
                nu = np.linalg.lstsq(J.T, -g, rcond=None)[0]
            stat = float(np.max(np.abs(g + J.T @ nu)))
            viol = float(np.max(np.abs(h)))
        else:
            stat, viol = float(np.max(np.abs(g), initial=0.0)), 0.0
        if best is None or (viol, objective(y)) < (best[1], best[2]):
            best = (y.copy(), viol, objective(y), stat)
        if stat <= tol_kkt * kkt_scale and viol <= tol_feas * feas_scale(y):
            converged = True
            break
        if it == max_iter:
            break

        p, nu_new = _kkt_step(H0, J, g, h, lam0)
        pi = max(pi, 1.1 * float(np.max(np.abs(nu_new), initial=0.0)))
        m0 = objective(y) + pi * float(np.sum(np.abs(h)))
        slope = float(g @ p) - pi * float(np.sum(np.abs(h)))
        alpha = 1.0
        for _ in range(40):
            trial = y + alpha * p
            with np.errstate(over="ignore", invalid="ignore"):
                h_t, J_t = _constraints(trial, interpolants, system, theta)
            m_t = objective(trial) + pi * float(np.sum(np.abs(h_t)))
            if np.isfinite(m_t) and m_t <= m0 + 1e-4 * alpha * min(slope, 0.0):
                break
            alpha *= 0.5
        else:
            log.debug("line search stalled at iteration %d", it)
            break
        hist.append((m0, m_t))
        y, h, J = trial, h_t, J_t
        nu = nu_new if alpha == 1.0 else None

    y_out, viol, obj, stat = (y, viol, objective(y), stat) if converged else best
    if not converged:
        warnings.warn(
            f"reduced solve did not converge in {it} iterations "
            f"(stationarity {stat:.2e}, violation {viol:.2e})",
            RuntimeWarning,
            stacklevel=2,
        )
    return RomSolution(y_out, converged, it, obj, viol, stat, hist, nu if converged else None)


def _kkt_step(H, J, g, h, lam0):
    """Solve the regularized KKT system for the step and new multipliers.

    The first attempt shifts only the Hessian block. If the system is still
    singular (rank-deficient constraint Jacobian) the multiplier block gets a
    matching relative shift, and both grow tenfold per retry.
    """
    k, m = H.shape[0], h.size
    h_scale = max(float(np.max(np.abs(np.diag(H)), initial=0.0)), 1e-300)
    j_scale = max(float(np.max(np.sum(J * J, axis=1), initial=0.0)), 1e-300)
    rhs = np.concatenate([-g, -h])
    lam = lam0
    for attempt in range(25):
        K = np.zeros((k + m, k + m))
        K[:k, :k] = H + lam * np.eye(k)
        K[:k, k:] = J.T
        K[k:, :k] = J
        if attempt:
            K[k:, k:] = -(lam / h_scale) * j_scale * np.eye(m)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", la.LinAlgWarning)
                sol = la.solve(K, rhs, assume_a="sym", check_finite=False)
        except (la.LinAlgError, la.LinAlgWarning, ValueError):
            sol = None
        if sol is not None and np.all(np.isfinite(sol)):
            return sol[:k], sol[k:]
        lam *= 10.0
    raise ConvergenceError("KKT system is singular even after regularization")


@dataclass(eq=False)
class RomDatabase:
    """Offline database: one reduced system per training point plus shared data.

    ``B_stack`` is ``(M, k, k)``, ``f_stack`` is ``(M, k)`` and
    ``reduced_snapshots`` holds ``Phi^T y`` per training snapshot.
    """

    thetas: np.ndarray
    B_stack: np.ndarray
    f_stack: np.ndarray
    basis: BlockBasis
    interpolants: list
    reduced_snapshots: np.ndarray | None = None
    ranges: np.ndarray | None = None
    degree: int = 2
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        self.B_stack = np.asarray(self.B_stack, dtype=float)
        self.f_stack = np.asarray(self.f_stack, dtype=float)
        m, k = self.f_stack.shape
        if self.B_stack.shape != (m, k, k) or self.thetas.shape[0] != m:
            raise DimensionError("database instances must share one reduced size")
        if self.ranges is not None:
            self.ranges = np.asarray(self.ranges, dtype=float).reshape(-1, 2)

    @property
    def k(self):
        return self.f_stack.shape[1]

    def __len__(self):
        return self.thetas.shape[0]

    def instance(self, i):
        y0 = None if self.reduced_snapshots is None else self.reduced_snapshots[i]
        return RomInstance(self.B_stack[i], self.f_stack[i], self.thetas[i], y0=y0)

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for i in range(len(self)):
            write_romb(d / f"Btilde_{i}.romb", self.B_stack[i])
            write_romb(d / f"ftilde_{i}.romb", self.f_stack[i])
        write_romb(d / "basis.romb", self.basis.matrix)
        if self.reduced_snapshots is not None:
            write_romb(d / "reduced_snapshots.romb", self.reduced_snapshots.T)
        deim = []
        for c, it in enumerate(self.interpolants):
            write_romb(d / f"deim_{c}_X.romb", it.X)
            write_romb(d / f"deim_{c}_left.romb", it.left)
            write_romb(d / f"deim_{c}_linear.romb", it.linear)
            write_indices(d / f"deim_{c}_rows.u32", it.indices)
            for j, S in enumerate(it.sampled):
                write_romb(d / f"deim_{c}_sampled_{j}.romb", S)
            deim.append({"constraint": it.constraint, "n_sampled": len(it.sampled), "condition": it.condition})
        meta = dict(self.manifest)
        meta.update(
            {
                "format": 1,
                "k": self.k,
                "n_instances": len(self),
                "thetas": self.thetas.tolist(),
                "ranges": None if self.ranges is None else self.ranges.tolist(),
                "degree": self.degree,
                "basis": {
                    "mode": self.basis.mode,
                    "block_sizes": list(self.basis.block_sizes),
                    "n_cells": self.basis.n_cells,
                },
                "deim": deim,
                "has_reduced_snapshots": self.reduced_snapshots is not None,
            }
        )
        write_json(d / "manifest.json", meta)

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        if not (d / "manifest.json").exists():
            raise FormatError(f"{d}: no manifest.json")
        meta = read_json(d / "manifest.json")
        m = meta["n_instances"]
        B = np.stack([read_romb(d / f"Btilde_{i}.romb") for i in range(m)])
        f = np.stack([read_romb(d / f"ftilde_{i}.romb")[:, 0] for i in range(m)])
        bm = meta["basis"]
        basis = BlockBasis(read_romb(d / "basis.romb"), tuple(bm["block_sizes"]), bm["n_cells"], (), bm["mode"])
        interps = []
        for c, info in enumerate(meta["deim"]):
            interps.append(
                DeimInterpolant(
                    read_romb(d / f"deim_{c}_X.romb"),
                    read_indices(d / f"deim_{c}_rows.u32"),
                    read_romb(d / f"deim_{c}_left.romb"),
                    tuple(read_romb(d / f"deim_{c}_sampled_{j}.romb") for j in range(info["n_sampled"])),
                    read_romb(d / f"deim_{c}_linear.romb"),
                    info["constraint"],
                    info["condition"],
                )
            )
        red = np.ascontiguousarray(read_romb(d / "reduced_snapshots.romb").T) if meta.get("has_reduced_snapshots") else None
        skip = {"format", "k", "n_instances", "thetas", "ranges", "degree", "basis", "deim", "has_reduced_snapshots"}
        return cls(
            meta["thetas"],
            B,
            f,
            basis,
            interps,
            red,
            meta.get("ranges"),
            meta.get("degree", 2),
            {key: v for key, v in meta.items() if key not in skip},
        )


def predict(db, theta, system, tol_kkt=1e-8, tol_feas=1e-8, max_iter=200, initial="nearest"):
    """Interpolate, solve and reconstruct at ``theta``.

    ``initial="nearest"`` starts from the reduced coordinates of the nearest
    training snapshot; ``"interpolated"`` uses the stencil-weighted blend.
    """
    from .interp import interpolate_rom

    inst = interpolate_rom(db, theta)
    y0 = None
    if db.reduced_snapshots is not None:
        if initial == "nearest":
            y0 = db.reduced_snapshots[inst.stencil.indices[0]]
        elif initial == "interpolated":
            y0 = inst.y0
        else:
            raise ValueError(f"unknown initial guess rule {initial!r}")
    sol = solve_rom(inst, system, db.interpolants, y0, tol_kkt, tol_feas, max_iter)
    return reconstruct(db.basis, sol.y), sol
