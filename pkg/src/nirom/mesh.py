"""Unstructured 2D triangular meshes: ingestion, connectivity and FV geometry.

The text format read by :func:`load_mesh` is line oriented::

    mesh2d 1
    nodes <count>
    <x> <y>
    ...
    cells <count>
    <v0> <v1> <v2>
    ...
    boundary <count>        # optional
    <va> <vb> <tag>

Everything after ``#`` on a line is ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshError, MeshFormatError

__all__ = [
    "BOUNDARY",
    "RawMesh",
    "Mesh",
    "MeshGeometry",
    "load_mesh",
    "save_mesh",
    "parse_mesh",
    "format_mesh",
    "make_raw_mesh",
    "build_connectivity",
    "compute_geometry",
    "geometry_from_file",
]

BOUNDARY = -1
"""Neighbor index stored in ``Mesh.face_cells`` for boundary faces."""

DEGENERATE_AREA_FRACTION = 1e-14
DELTA_TOL = 1e-14


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RawMesh:
    """Nodes and counter-clockwise triangles, as read from disk.

    Build through :func:`make_raw_mesh`, which validates and normalizes
    orientation.
    """

    nodes: np.ndarray
    cells: np.ndarray
    boundary_tags: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]


def make_raw_mesh(nodes, cells, boundary_tags=None):
    """Validate ``nodes``/``cells`` and return a CCW-normalized :class:`RawMesh`.

    Raises
    ------
    MeshError
        On out-of-range or repeated vertex indices, duplicate cells, or
        cells whose area is below ``1e-14`` times the bounding-box area.
    """
    nodes = np.asarray(nodes, dtype=float)
    cells = np.asarray(cells)
    if nodes.ndim != 2 or nodes.shape[1] != 2 or nodes.shape[0] == 0:
        raise MeshError("nodes must be a non-empty (n, 2) array")
    if cells.ndim != 2 or cells.shape[1] != 3 or cells.shape[0] == 0:
        raise MeshError("cells must be a non-empty (m, 3) array of vertex indices")
    if not np.issubdtype(cells.dtype, np.integer):
        raise MeshError("cell vertex indices must be integers")
    cells = cells.astype(np.int64)
    if not np.all(np.isfinite(nodes)):
        raise MeshError("node coordinates must be finite")

    bad = np.flatnonzero((cells < 0).any(axis=1) | (cells >= len(nodes)).any(axis=1))
    if bad.size:
        raise MeshError(f"cell {bad[0]} references an out-of-range vertex index")
    repeated = (
        (cells[:, 0] == cells[:, 1])
        | (cells[:, 1] == cells[:, 2])
        | (cells[:, 0] == cells[:, 2])
    )
    if repeated.any():
        raise MeshError(f"cell {np.flatnonzero(repeated)[0]} repeats a vertex")

    key = np.sort(cells, axis=1)
    _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    if (counts > 1).any():
        dup = np.sort(first[counts > 1])[0]
        raise MeshError(f"cell {dup} is duplicated")

    p0, p1, p2 = nodes[cells[:, 0]], nodes[cells[:, 1]], nodes[cells[:, 2]]
    area2 = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (
        p1[:, 1] - p0[:, 1]
    ) * (p2[:, 0] - p0[:, 0])
    extent = nodes.max(axis=0) - nodes.min(axis=0)
    bbox_area = float(extent[0] * extent[1])
    if bbox_area <= 0.0:
        raise MeshError("mesh nodes are collinear")
    tiny = np.abs(0.5 * area2) < DEGENERATE_AREA_FRACTION * bbox_area
    if tiny.any():
        raise MeshError(f"cell {np.flatnonzero(tiny)[0]} is degenerate (zero area)")

    cw = area2 < 0
    cells = cells.copy()
    cells[cw, 1], cells[cw, 2] = cells[cw, 2], cells[cw, 1].copy()

    tags = {}
    for (va, vb), tag in (boundary_tags or {}).items():
        va, vb = int(va), int(vb)
        if not (0 <= va < len(nodes) and 0 <= vb < len(nodes)):
            raise MeshError(f"boundary face ({va}, {vb}) references an out-of-range vertex")
        tags[(min(va, vb), max(va, vb))] = str(tag)

    return RawMesh(_frozen(nodes, float), _frozen(cells, np.int64), tags)


def _strip(line):
    return line.split("#", 1)[0].strip()


def parse_mesh(text):
    """Parse mesh text (see module docstring) into a :class:`RawMesh`."""
    lines = [(i + 1, _strip(s)) for i, s in enumerate(text.splitlines())]
    lines = [(n, s) for n, s in lines if s]
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 0
            raise MeshFormatError(f"unexpected end of file, expected {what}", last + 1)
        item = lines[pos]
        pos += 1
        return item

    def section(name):
        lineno, s = take(f"'{name} <count>'")
        parts = s.split()
        if len(parts) != 2 or parts[0] != name:
            raise MeshFormatError(f"expected '{name} <count>', got {s!r}", lineno)
        try:
            count = int(parts[1])
        except ValueError:
            raise MeshFormatError(f"invalid count {parts[1]!r}", lineno) from None
        if count < 0:
            raise MeshFormatError("negative count", lineno)
        return count

    lineno, header = take("header 'mesh2d 1'")
    if header.split() != ["mesh2d", "1"]:
        raise MeshFormatError(f"bad header {header!r}, expected 'mesh2d 1'", lineno)

    n_nodes = section("nodes")
    nodes = np.empty((n_nodes, 2))
    for i in range(n_nodes):
        lineno, s = take("node coordinates")
        parts = s.split()
        if len(parts) != 2:
            raise MeshFormatError(f"expected '<x> <y>', got {s!r}", lineno)
        try:
            nodes[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshFormatError(f"invalid coordinate in {s!r}", lineno) from None

    n_cells = section("cells")
    cells = np.empty((n_cells, 3), dtype=np.int64)
    cell_lines = np.empty(n_cells, dtype=np.int64)
    for i in range(n_cells):
        lineno, s = take("cell vertex indices")
        parts = s.split()
        if len(parts) != 3:
            raise MeshFormatError(f"expected '<v0> <v1> <v2>', got {s!r}", lineno)
        try:
            cells[i] = [int(p) for p in parts]
        except ValueError:
            raise MeshFormatError(f"invalid vertex index in {s!r}", lineno) from None
        cell_lines[i] = lineno
        if ((cells[i] < 0) | (cells[i] >= n_nodes)).any():
            raise MeshFormatError(f"vertex index out of range in {s!r}", lineno)

    tags = {}
    if pos < len(lines):
        n_b = section("boundary")
        for _ in range(n_b):
            lineno, s = take("boundary face")
            parts = s.split()
            if len(parts) != 3:
                raise MeshFormatError(f"expected '<va> <vb> <tag>', got {s!r}", lineno)
            try:
                va, vb = int(parts[0]), int(parts[1])
            except ValueError:
                raise MeshFormatError(f"invalid vertex index in {s!r}", lineno) from None
            if not (0 <= va < n_nodes and 0 <= vb < n_nodes):
                raise MeshFormatError(f"vertex index out of range in {s!r}", lineno)
            tags[(min(va, vb), max(va, vb))] = parts[2]
    if pos < len(lines):
        lineno, s = lines[pos]
        raise MeshFormatError(f"unexpected content {s!r}", lineno)

    try:
        return make_raw_mesh(nodes, cells, tags)
    except MeshFormatError:
        raise
    except MeshError as exc:
        # point at the offending cell line when we can
        msg = str(exc)
        if msg.startswith("cell "):
            idx = int(msg.split()[1])
            raise MeshFormatError(msg, int(cell_lines[idx])) from None
        raise


def load_mesh(path):
    """Read a mesh file and return a validated, CCW-oriented :class:`RawMesh`."""
    return parse_mesh(Path(path).read_text())


def format_mesh(raw):
    """Serialize ``raw`` to the text format (round-trip exact decimals)."""
    out = ["mesh2d 1", f"nodes {raw.n_nodes}"]
    out += [f"{x!r} {y!r}" for x, y in raw.nodes.tolist()]
    out.append(f"cells {raw.n_cells}")
    out += [f"{a} {b} {c}" for a, b, c in raw.cells.tolist()]
    if raw.boundary_tags:
        out.append(f"boundary {len(raw.boundary_tags)}")
        out += [f"{a} {b} {t}" for (a, b), t in sorted(raw.boundary_tags.items())]
    return "\n".join(out) + "\n"


def save_mesh(raw, path):
    Path(path).write_text(format_mesh(raw))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Mesh topology.

    Faces are the sorted vertex pairs in lexicographic order. ``face_cells[f]``
    holds ``(owner, neighbor)`` with ``owner < neighbor``; the neighbor is
    :data:`BOUNDARY` on boundary faces. Vertex-to-cell adjacency is stored in
    compressed form: the cells around vertex ``v`` are
    ``vertex_cell_idx[vertex_cell_ptr[v]:vertex_cell_ptr[v + 1]]``.
    """

    raw: RawMesh
    faces: np.ndarray
    face_cells: np.ndarray
    cell_faces: np.ndarray
    vertex_cell_ptr: np.ndarray
    vertex_cell_idx: np.ndarray

    @property
    def n_cells(self):
        return self.raw.n_cells

    @property
    def n_nodes(self):
        return self.raw.n_nodes

    @property
    def n_faces(self):
        return self.faces.shape[0]

    @property
    def interior(self):
        """Boolean mask of interior faces."""
        return self.face_cells[:, 1] != BOUNDARY

    @property
    def n_interior_faces(self):
        return int(self.interior.sum())

    @property
    def n_boundary_faces(self):
        return self.n_faces - self.n_interior_faces

    def vertex_cells(self, v):
        return self.vertex_cell_idx[self.vertex_cell_ptr[v] : self.vertex_cell_ptr[v + 1]]

    def boundary_tag(self, face):
        return self.raw.boundary_tags.get(tuple(int(v) for v in self.faces[face]))


def build_connectivity(raw):
    """Derive face, face-cell, cell-face and vertex-cell connectivity."""
    cells = raw.cells
    n_cells = raw.n_cells
    edges = np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]])
    edges.sort(axis=1)
    faces, inverse, counts = np.unique(
        edges, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    if (counts > 2).any():
        f = int(np.flatnonzero(counts > 2)[0])
        raise MeshError(
            f"non-manifold face {f} ({faces[f, 0]}, {faces[f, 1]}) is shared by "
            f"{counts[f]} cells"
        )
    edge_cell = np.tile(np.arange(n_cells), 3)
    # stable sort by face, then by cell so the owner is the lower cell index
    order = np.lexsort((edge_cell, inverse))
    sorted_cells = edge_cell[order]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    face_cells = np.full((len(faces), 2), BOUNDARY, dtype=np.int64)
    face_cells[:, 0] = sorted_cells[starts]
    two = counts == 2
    face_cells[two, 1] = sorted_cells[starts[two] + 1]
    cell_faces = inverse.reshape(3, n_cells).T.copy()

    vert = cells.reshape(-1)
    vcell = np.repeat(np.arange(n_cells), 3)
    order = np.lexsort((vcell, vert))
    ptr = np.zeros(raw.n_nodes + 1, dtype=np.int64)
    np.add.at(ptr, vert + 1, 1)
    ptr = np.cumsum(ptr)

    return Mesh(
        raw,
        _frozen(faces, np.int64),
        _frozen(face_cells, np.int64),
        _frozen(cell_faces, np.int64),
        _frozen(ptr, np.int64),
        _frozen(vcell[order], np.int64),
    )


@dataclass(frozen=True, eq=False)
class MeshGeometry:
    """Finite-volume geometric quantities of a :class:`Mesh`.

    Per face ``f`` with vertices ``lo < hi``:

    * ``face_tangents`` point from ``lo`` to ``hi``;
    * ``face_normals`` point out of the owner cell (towards the neighbor);
    * ``intercell_vectors`` join owner to neighbor centroid; on boundary
      faces they join the owner centroid to the face midpoint;
    * ``delta = l . n`` and ``tangent_dot = t . l``;
    * ``face_weights`` give ``phi_f = w phi_owner + (1 - w) phi_neighbor``
      (1 on boundary faces).

    ``node_weights`` is aligned with ``mesh.vertex_cell_idx``.
    """

    mesh: Mesh
    cell_centroids: np.ndarray
    cell_areas: np.ndarray
    face_midpoints: np.ndarray
    face_areas: np.ndarray
    face_normals: np.ndarray
    face_tangents: np.ndarray
    intercell_vectors: np.ndarray
    delta: np.ndarray
    tangent_dot: np.ndarray
    face_weights: np.ndarray
    node_weights: np.ndarray

    @property
    def n_cells(self):
        return self.mesh.n_cells

    def cell_perimeters(self):
        return self.face_areas[self.mesh.cell_faces].sum(axis=1)

    def outward_normals(self):
        """``(n_cells, 3, 2)`` outward unit normals per cell face."""
        cf = self.mesh.cell_faces
        sign = np.where(self.mesh.face_cells[cf, 0] == np.arange(self.n_cells)[:, None], 1.0, -1.0)
        return self.face_normals[cf] * sign[..., None]


def compute_geometry(mesh):
    """Compute every geometric quantity the FV assemblers need.

    Raises
    ------
    MeshError
        If an interior face has ``delta`` at or below tolerance.
    """
    nodes = mesh.raw.nodes
    cells = mesh.raw.cells
    p0, p1, p2 = nodes[cells[:, 0]], nodes[cells[:, 1]], nodes[cells[:, 2]]
    centroids = (p0 + p1 + p2) / 3.0
    areas = 0.5 * (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    )

    lo, hi = nodes[mesh.faces[:, 0]], nodes[mesh.faces[:, 1]]
    tvec = hi - lo
    length = np.hypot(tvec[:, 0], tvec[:, 1])
    that = tvec / length[:, None]
    mid = 0.5 * (lo + hi)

    owner = mesh.face_cells[:, 0]
    nbr = mesh.face_cells[:, 1]
    interior = nbr != BOUNDARY
    normal = np.column_stack([that[:, 1], -that[:, 0]])
    flip = np.einsum("ij,ij->i", normal, mid - centroids[owner]) < 0
    normal[flip] *= -1.0

    other = np.where(interior[:, None], centroids[np.where(interior, nbr, 0)], mid)
    lvec = other - centroids[owner]
    delta = np.einsum("ij,ij->i", lvec, normal)
    tdot = np.einsum("ij,ij->i", that, lvec)

    scale = np.sqrt(np.abs(areas).mean())
    bad = interior & (delta <= DELTA_TOL * scale)
    if bad.any():
        f = int(np.flatnonzero(bad)[0])
        raise MeshError(f"face {f}: centroid offset delta={delta[f]:.3e} is not positive")

    d0 = np.hypot(*(mid - centroids[owner]).T)
    d1 = np.where(interior, np.hypot(*(mid - other).T), 0.0)
    weights = np.where(interior, d1 / (d0 + d1), 1.0)

    v_of = np.repeat(np.arange(mesh.n_nodes), np.diff(mesh.vertex_cell_ptr))
    dist = np.hypot(*(centroids[mesh.vertex_cell_idx] - nodes[v_of]).T)
    inv = 1.0 / dist
    total = np.bincount(v_of, weights=inv, minlength=mesh.n_nodes)
    node_w = inv / total[v_of]

    return MeshGeometry(
        mesh,
        _frozen(centroids, float),
        _frozen(areas, float),
        _frozen(mid, float),
        _frozen(length, float),
        _frozen(normal, float),
        _frozen(that, float),
        _frozen(lvec, float),
        _frozen(delta, float),
        _frozen(tdot, float),
        _frozen(weights, float),
        _frozen(node_w, float),
    )


def geometry_from_file(path):
    """Shortcut: load, connect and measure a mesh file."""
    return compute_geometry(build_connectivity(load_mesh(path)))
