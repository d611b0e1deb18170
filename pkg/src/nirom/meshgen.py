"""Small structured triangulations used as fixtures and default meshes.

These are not a general mesh generator; they produce the quasi-uniform
triangulations of rectangles that the canonical experiment and the
convergence studies need.
"""

import numpy as np

from .mesh import make_raw_mesh

__all__ = ["crisscross_mesh", "diagonal_mesh", "equilateral_mesh", "jitter_interior"]


def crisscross_mesh(n, lower=(0.0, 0.0), upper=(1.0, 1.0)):
    """``n x n`` grid, each square split into four triangles about its center.

    ``n = 16`` gives 1024 cells, 545 nodes and 1568 faces on the unit square.
    """
    (x0, y0), (x1, y1) = lower, upper
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    corners = np.column_stack([gx.ravel(), gy.ravel()])
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    mx, my = np.meshgrid(cx, cy, indexing="ij")
    centers = np.column_stack([mx.ravel(), my.ravel()])
    nodes = np.vstack([corners, centers])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    sw = i * (n + 1) + j
    se = (i + 1) * (n + 1) + j
    ne = (i + 1) * (n + 1) + j + 1
    nw = i * (n + 1) + j + 1
    c = (n + 1) ** 2 + i * n + j
    cells = np.stack(
        [
            np.column_stack([sw, se, c]),
            np.column_stack([se, ne, c]),
            np.column_stack([ne, nw, c]),
            np.column_stack([nw, sw, c]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return make_raw_mesh(nodes, cells, _rectangle_tags(nodes, cells, lower, upper))


def diagonal_mesh(n, lower=(0.0, 0.0), upper=(1.0, 1.0)):
    """``n x n`` grid, each square cut along its SW-NE diagonal."""
    (x0, y0), (x1, y1) = lower, upper
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    sw = i * (n + 1) + j
    se = (i + 1) * (n + 1) + j
    ne = (i + 1) * (n + 1) + j + 1
    nw = i * (n + 1) + j + 1
    cells = np.stack(
        [np.column_stack([sw, se, ne]), np.column_stack([sw, ne, nw])], axis=1
    ).reshape(-1, 3)
    return make_raw_mesh(nodes, cells, _rectangle_tags(nodes, cells, lower, upper))


def equilateral_mesh(nx, ny, side=None, origin=(0.0, 0.0)):
    """Strip of equilateral triangles, ``ny`` rows of ``2 nx + 1`` cells each.

    Rows alternate their offset by half a side; the ragged ends are closed
    with half-width triangles so the outline is a rectangle of width
    ``nx * side``.
    """
    side = 1.0 / nx if side is None else side
    h = side * np.sqrt(3.0) / 2.0
    ox, oy = origin
    rows = []
    nodes = []
    for r in range(ny + 1):
        shift = 0.5 * side if r % 2 else 0.0
        xs = ox + shift + side * np.arange(nx + 1)
        if shift:
            xs = np.concatenate([[ox], xs[:-1], [ox + nx * side]])
        rows.append(np.arange(len(nodes), len(nodes) + len(xs)))
        nodes.extend((x, oy + r * h) for x in xs)
    cells = []
    for r in range(ny):
        lo, up = rows[r], rows[r + 1]
        if r % 2 == 0:  # lower row unshifted (nx + 1 nodes), upper shifted (nx + 2)
            cells.append((lo[0], up[1], up[0]))
            cells += [(lo[k], lo[k + 1], up[k + 1]) for k in range(nx)]
            cells += [(lo[k + 1], up[k + 2], up[k + 1]) for k in range(nx - 1)]
            cells.append((lo[nx], up[nx + 1], up[nx]))
        else:
            cells.append((lo[0], lo[1], up[0]))
            cells += [(lo[k + 1], up[k + 1], up[k]) for k in range(nx)]
            cells += [(lo[k + 1], lo[k + 2], up[k + 1]) for k in range(nx - 1)]
            cells.append((lo[nx], lo[nx + 1], up[nx]))
    return make_raw_mesh(np.array(nodes), np.array(cells))


def jitter_interior(raw, amplitude, seed=0):
    """Randomly displace interior nodes by up to ``amplitude`` in each coordinate."""
    nodes = raw.nodes.copy()
    lo, hi = nodes.min(axis=0), nodes.max(axis=0)
    on_edge = (np.isclose(nodes, lo) | np.isclose(nodes, hi)).any(axis=1)
    rng = np.random.default_rng(seed)
    move = rng.uniform(-amplitude, amplitude, size=nodes.shape)
    nodes[~on_edge] += move[~on_edge]
    return make_raw_mesh(nodes, raw.cells, raw.boundary_tags)


def _rectangle_tags(nodes, cells, lower, upper):
    (x0, y0), (_, y1) = lower, upper
    edges = np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    tags = {}
    for a, b in uniq[counts == 1]:
        pa, pb = nodes[a], nodes[b]
        if np.isclose(pa[1], y0) and np.isclose(pb[1], y0):
            tag = "bottom"
        elif np.isclose(pa[1], y1) and np.isclose(pb[1], y1):
            tag = "top"
        elif np.isclose(pa[0], x0) and np.isclose(pb[0], x0):
            tag = "left"
        else:
            tag = "right"
        tags[(int(a), int(b))] = tag
    return tags
