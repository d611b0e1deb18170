"""Proper orthogonal decomposition of snapshot blocks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DimensionError

__all__ = [
    "PodBasis",
    "BlockBasis",
    "compute_pod",
    "projection_error",
    "assemble_block_basis",
    "joint_basis",
    "RANK_TOL",
]

RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PodBasis:
    """Leading left singular vectors ``modes`` and all singular values ``sigma``."""

    modes: np.ndarray
    sigma: np.ndarray
    block: str = ""

    @property
    def k(self):
        return self.modes.shape[1]

    @property
    def n_rows(self):
        return self.modes.shape[0]

    def energy(self):
        """Fraction of the squared singular values retained."""
        total = float(np.sum(self.sigma**2))
        return 1.0 if total == 0 else float(np.sum(self.sigma[: self.k] ** 2) / total)


def _fix_signs(V):
    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def numerical_rank(sigma, tol=RANK_TOL):
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    return int(np.sum(sigma > tol * sigma[0]))


def compute_pod(snapshots, k=None, energy=None, method="svd", block=""):
    """Truncated POD basis of the columns of ``snapshots``.

    Give at most one of ``k`` (fixed size) or ``energy`` (smallest ``k`` with
    retained squared-singular-value fraction >= ``energy``). With neither,
    every numerically nonzero mode is kept. Requests beyond the numerical
    rank (``sigma_i > 1e-12 sigma_1``) are clamped with a warning.

    ``method="snapshots"`` uses the eigendecomposition of ``U^T U`` instead of
    a thin SVD, which is cheaper when rows greatly exceed columns.
    """
    U = np.asarray(snapshots, dtype=float)
    if U.ndim != 2 or U.size == 0:
        raise DimensionError("snapshot block must be a non-empty 2-D array")
    if not np.all(np.isfinite(U)):
        raise ValueError("snapshot block contains non-finite entries")
    if k is not None and energy is not None:
        raise ValueError("give either k or energy, not both")

    if method == "svd":
        V, sigma, _ = la.svd(U, full_matrices=False)
    elif method == "snapshots":
        evals, W = la.eigh(U.T @ U)
        order = np.argsort(evals)[::-1]
        evals, W = np.clip(evals[order], 0.0, None), W[:, order]
        sigma = np.sqrt(evals)
        r = numerical_rank(sigma)
        V = np.zeros((U.shape[0], len(sigma)))
        V[:, :r] = (U @ W[:, :r]) / sigma[:r]
    else:
        raise ValueError(f"unknown POD method {method!r}")

    rank = numerical_rank(sigma)
    if energy is not None:
        if not 0.0 < energy <= 1.0:
            raise ValueError("energy fraction must lie in (0, 1]")
        cum = np.cumsum(sigma**2)
        total = cum[-1]
        k = rank if total == 0 else int(np.searchsorted(cum / total, energy - 1e-15) + 1)
    elif k is None:
        k = rank
    if k < 0:
        raise ValueError("k must be non-negative")
    if k > rank:
        warnings.warn(f"requested {k} modes but numerical rank is {rank}; clamping", stacklevel=2)
        k = rank
    return PodBasis(_fix_signs(V[:, :k]), sigma, block)


def projection_error(snapshots, basis):
    """Sum over snapshots of ``||u - Phi Phi^T u||_2^2``."""
    U = np.asarray(snapshots, dtype=float)
    Phi = basis.modes if isinstance(basis, PodBasis) else np.asarray(basis, dtype=float)
    if Phi.shape[0] != U.shape[0]:
        raise DimensionError(f"basis has {Phi.shape[0]} rows, snapshots have {U.shape[0]}")
    R = U - Phi @ (Phi.T @ U)
    return float(np.sum(R * R))


def tail_energy(basis):
    return float(np.sum(basis.sigma[basis.k :] ** 2))


@dataclass(frozen=True, eq=False)
class BlockBasis:
    """Trial basis over stacked observables.

    ``matrix`` is ``(n_blocks * N) x k``. In per-block mode it is block
    diagonal with ``block_sizes[i]`` columns supported on block ``i``; in
    joint mode a single POD of the stacked snapshots fills every row.
    """

    matrix: np.ndarray
    block_sizes: tuple
    n_cells: int
    bases: tuple = ()
    mode: str = "block"

    @property
    def k(self):
        return self.matrix.shape[1]

    @property
    def n_blocks(self):
        return self.matrix.shape[0] // self.n_cells

    def rows(self, i):
        """Rows of block ``i`` of the trial matrix (``N x k``)."""
        return self.matrix[i * self.n_cells : (i + 1) * self.n_cells]

    def col_slice(self, i):
        """Reduced coordinates owned by block ``i`` (per-block mode only)."""
        if self.mode != "block":
            raise ValueError("joint bases do not own coordinate slices")
        start = int(np.sum(self.block_sizes[:i]))
        return slice(start, start + self.block_sizes[i])

    def project(self, y):
        return self.matrix.T @ y

    def reconstruct(self, yr):
        return self.matrix @ yr


def assemble_block_basis(bases, n_cells=None):
    """Block-diagonal trial basis from one :class:`PodBasis` per observable."""
    bases = tuple(bases)
    if not bases:
        raise ValueError("need at least one basis")
    n = bases[0].n_rows if n_cells is None else n_cells
    if any(b.n_rows != n for b in bases):
        raise DimensionError("all observable blocks must have the same number of cells")
    sizes = tuple(b.k for b in bases)
    mat = la.block_diag(*[b.modes for b in bases]) if sum(sizes) else np.zeros((n * len(bases), 0))
    return BlockBasis(mat, sizes, n, bases, "block")


def joint_basis(snapshots, n_cells, k=None, energy=None):
    """Single POD basis of the stacked snapshot matrix."""
    b = compute_pod(snapshots, k=k, energy=energy, block="joint")
    return BlockBasis(b.modes, (b.k,), n_cells, (b,), "joint")
