"""Finite-volume operator assembly on triangular meshes.

Operators are in integral form: row ``c`` approximates the surface integral
over cell ``c`` and is *not* divided by the cell area. Only interior faces
contribute; whatever crosses the boundary is left to the right-hand side
recovered from snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, FormatError, MeshError
from .mesh import MeshGeometry

__all__ = [
    "SparseOperator",
    "ScalarField",
    "BlockOperator",
    "IDENTITY",
    "NEG_IDENTITY",
    "assemble_diffusion",
    "assemble_gradient",
    "apply",
    "recover_rhs",
    "write_triplets",
    "read_triplets",
    "format_triplets",
]

KINDS = ("diffusion", "grad_x", "grad_y", "generic")


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """A compressed sparse operator whose rows are mesh cells."""

    matrix: sp.csr_matrix
    kind: str = "generic"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")

    @property
    def n_rows(self):
        return self.matrix.shape[0]

    @property
    def n_cols(self):
        return self.matrix.shape[1]

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self):
        return self.matrix.nnz

    def __matmul__(self, other):
        return apply(self, other)

    def toarray(self):
        return self.matrix.toarray()


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell-centered values on a mesh."""

    values: np.ndarray
    geometry: MeshGeometry | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise DimensionError("a scalar field is one value per cell")
        if self.geometry is not None and vals.size != self.geometry.n_cells:
            raise DimensionError(
                f"field has {vals.size} values but the mesh has {self.geometry.n_cells} cells"
            )
        object.__setattr__(self, "values", vals)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size


def _compress(rows, cols, vals, n, kind):
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return SparseOperator(mat, kind)


def _cell_values(gamma, n):
    g = np.asarray(getattr(gamma, "values", gamma), dtype=float)
    if g.ndim == 0:
        g = np.full(n, float(g))
    if g.shape != (n,):
        raise DimensionError(f"expected {n} cell values, got shape {g.shape}")
    return g


def assemble_diffusion(geom, gamma=1.0):
    """Assemble the integral-form diffusion operator ``div(gamma grad u)``.

    Each interior face ``f`` between owner ``0`` and neighbor ``1`` carries
    the flux::

        gamma_f A_f / delta_f * [(u_1 - u_0) - (u_hi - u_lo) / |t_f| * (t_f . l)]

    where ``u_hi``/``u_lo`` are node values at the face's higher/lower-index
    vertex, reconstructed from the surrounding cells with inverse-distance
    weights. The flux is added to the owner row and subtracted from the
    neighbor row.

    Parameters
    ----------
    geom : MeshGeometry
    gamma : float or array_like
        Strictly positive cell-centered diffusion coefficient.

    Returns
    -------
    SparseOperator
    """
    if not isinstance(geom, MeshGeometry):
        raise MeshError("assemble_diffusion needs a computed MeshGeometry")
    mesh = geom.mesh
    n = mesh.n_cells
    g = _cell_values(gamma, n)
    if not np.all(g > 0):
        raise ValueError("diffusion coefficient must be strictly positive")

    inner = np.flatnonzero(mesh.interior)
    o = mesh.face_cells[inner, 0]
    nb = mesh.face_cells[inner, 1]
    w = geom.face_weights[inner]
    gf = w * g[o] + (1.0 - w) * g[nb]
    coef = gf * geom.face_areas[inner] / geom.delta[inner]

    # normal (two-point) part
    rows = [o, o, nb, nb]
    cols = [nb, o, o, nb]
    vals = [coef, -coef, coef, -coef]

    # tangential correction through node values; one entry per (face, vertex-cell)
    tcoef = -coef * geom.tangent_dot[inner] / geom.face_areas[inner]
    ptr, idx, nw = mesh.vertex_cell_ptr, mesh.vertex_cell_idx, geom.node_weights
    for col, sign in ((1, 1.0), (0, -1.0)):
        verts = mesh.faces[inner, col]
        counts = ptr[verts + 1] - ptr[verts]
        face_rep = np.repeat(np.arange(inner.size), counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        slots = np.repeat(ptr[verts], counts) + offs
        c = sign * tcoef[face_rep] * nw[slots]
        rows += [o[face_rep], nb[face_rep]]
        cols += [idx[slots], idx[slots]]
        vals += [c, -c]

    return _compress(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n, "diffusion")


def assemble_gradient(geom, axis):
    """Assemble the integral-form directional derivative operator.

    Row ``c`` approximates the boundary integral of ``y n_axis`` over cell
    ``c`` using the inverse-distance face value
    ``y_f = w_f y_0 + (1 - w_f) y_1`` on interior faces.

    Parameters
    ----------
    axis : {"x", "y", 0, 1}
    """
    if not isinstance(geom, MeshGeometry):
        raise MeshError("assemble_gradient needs a computed MeshGeometry")
    ax = {"x": 0, "y": 1, 0: 0, 1: 1}.get(axis)
    if ax is None:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    mesh = geom.mesh
    inner = np.flatnonzero(mesh.interior)
    o = mesh.face_cells[inner, 0]
    nb = mesh.face_cells[inner, 1]
    w = geom.face_weights[inner]
    s = geom.face_normals[inner, ax] * geom.face_areas[inner]
    rows = np.concatenate([o, o, nb, nb])
    cols = np.concatenate([o, nb, o, nb])
    vals = np.concatenate([s * w, s * (1.0 - w), -s * w, -s * (1.0 - w)])
    return _compress(rows, cols, vals, mesh.n_cells, ("grad_x", "grad_y")[ax])


def _as_matrix(op):
    if isinstance(op, SparseOperator):
        return op.matrix
    if isinstance(op, BlockOperator):
        return op.tocsr()
    if sp.issparse(op):
        return op
    raise TypeError(f"not an operator: {type(op).__name__}")


def apply(op, field):
    """Sparse matrix-vector product ``op @ field``."""
    mat = _as_matrix(op)
    x = np.asarray(getattr(field, "values", field), dtype=float)
    if x.ndim not in (1, 2) or x.shape[0] != mat.shape[1]:
        raise DimensionError(
            f"operator has {mat.shape[1]} columns but the input has shape {x.shape}"
        )
    return np.asarray(mat @ x)


IDENTITY = "I"
NEG_IDENTITY = "-I"


class BlockOperator:
    """A row-major grid of operator blocks acting on stacked observables.

    Each entry is ``None`` (zero), a :class:`SparseOperator`, one of the
    markers :data:`IDENTITY` / :data:`NEG_IDENTITY`, or a 1-D array taken as
    a diagonal block. All blocks are ``n x n`` with ``n`` the cell count.

    Parameters
    ----------
    blocks : list of list
    n : int
        Cells per block.
    names : sequence of str, optional
        Observable stacking order (one name per block column).
    """

    def __init__(self, blocks, n, names=None):
        self.blocks = [list(row) for row in blocks]
        self.n = int(n)
        if not self.blocks or len({len(r) for r in self.blocks}) != 1:
            raise DimensionError("block rows must all have the same length")
        self.n_block_rows = len(self.blocks)
        self.n_block_cols = len(self.blocks[0])
        for row in self.blocks:
            for b in row:
                self._check(b)
        self.names = tuple(names) if names is not None else tuple(
            f"y{i + 1}" for i in range(self.n_block_cols)
        )
        if len(self.names) != self.n_block_cols:
            raise DimensionError("one observable name per block column is required")
        self._csr = None

    def _check(self, b):
        if b is None or (isinstance(b, str) and b in (IDENTITY, NEG_IDENTITY)):
            return
        if isinstance(b, SparseOperator):
            if b.shape != (self.n, self.n):
                raise DimensionError(f"block of shape {b.shape} in a {self.n}-cell grid")
            return
        arr = np.asarray(b)
        if arr.shape != (self.n,):
            raise DimensionError(f"diagonal block must have {self.n} entries")

    @property
    def shape(self):
        return (self.n_block_rows * self.n, self.n_block_cols * self.n)

    def _block_matrix(self, b):
        if b is None:
            return None
        if isinstance(b, SparseOperator):
            return b.matrix
        if isinstance(b, str):
            return sp.identity(self.n, format="csr") * (1.0 if b == IDENTITY else -1.0)
        return sp.diags(np.asarray(b, dtype=float), format="csr")

    def tocsr(self):
        if self._csr is None:
            grid = [[self._block_matrix(b) for b in row] for row in self.blocks]
            for j in range(self.n_block_cols):
                if all(grid[i][j] is None for i in range(self.n_block_rows)):
                    grid[0][j] = sp.csr_matrix((self.n, self.n))
            for i in range(self.n_block_rows):
                if all(g is None for g in grid[i]):
                    grid[i][0] = sp.csr_matrix((self.n, self.n))
            self._csr = sp.bmat(grid, format="csr")
        return self._csr

    def __matmul__(self, other):
        return apply(self, other)


def recover_rhs(block_operator, snapshot):
    """Right-hand side ``f = A y`` implied by an observable snapshot ``y``.

    ``snapshot`` may also be a matrix whose columns are snapshots.
    """
    return apply(block_operator, snapshot)


def format_triplets(op):
    mat = sp.coo_matrix(_as_matrix(op))
    order = np.lexsort((mat.col, mat.row))
    lines = [f"sparse {mat.shape[0]} {mat.shape[1]} {mat.nnz}"]
    lines += [
        f"{r} {c} {v!r}"
        for r, c, v in zip(mat.row[order].tolist(), mat.col[order].tolist(), mat.data[order].tolist())
    ]
    return "\n".join(lines) + "\n"


def write_triplets(op, path):
    """Write ``op`` as ``sparse <rows> <cols> <nnz>`` followed by ``row col value`` lines."""
    Path(path).write_text(format_triplets(op))


def read_triplets(path, kind="generic"):
    lines = [s for s in Path(path).read_text().splitlines() if s.strip()]
    head = lines[0].split() if lines else []
    if len(head) != 4 or head[0] != "sparse":
        raise FormatError("missing 'sparse <rows> <cols> <nnz>' header")
    n_rows, n_cols, nnz = (int(v) for v in head[1:])
    if len(lines) - 1 != nnz:
        raise FormatError(f"header declares {nnz} entries, found {len(lines) - 1}")
    data = np.array([s.split() for s in lines[1:]], dtype=object).reshape(-1, 3)
    rows = data[:, 0].astype(np.int64)
    cols = data[:, 1].astype(np.int64)
    vals = data[:, 2].astype(float)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n_rows, n_cols))
    return SparseOperator(mat, kind)
