import numpy as np
import pytest
import scipy.sparse as sp

from nirom.errors import DimensionError, MeshError
from nirom.fvm import (
    IDENTITY,
    NEG_IDENTITY,
    BlockOperator,
    ScalarField,
    SparseOperator,
    apply,
    assemble_diffusion,
    assemble_gradient,
    read_triplets,
    recover_rhs,
    write_triplets,
)
from nirom.mesh import build_connectivity, compute_geometry
from nirom.meshgen import crisscross_mesh, diagonal_mesh, equilateral_mesh, jitter_interior

from .conftest import geometry


def _interior_cells(geom):
    bnd = np.zeros(geom.n_cells, bool)
    bnd[geom.mesh.face_cells[~geom.mesh.interior, 0]] = True
    return ~bnd


def test_unit_square_pair_hand_value(unit_square_pair):
    # face length sqrt(2), centroid offset sqrt(2)/3 along the normal, no tangential part
    A = assemble_diffusion(unit_square_pair).toarray()
    assert np.allclose(A, [[-3.0, 3.0], [3.0, -3.0]], rtol=0, atol=1e-13)


def test_skew_pair_matches_brute_force_oracle(skew_pair):
    # frozen from a per-face scalar evaluation of the flux formula, including
    # the tangential node-difference term with inverse-distance node values
    expected = 2.25660286567941
    A = assemble_diffusion(skew_pair).toarray()
    assert np.allclose(A, [[-expected, expected], [expected, -expected]], rtol=0, atol=1e-13)
    f = int(np.flatnonzero(skew_pair.mesh.interior)[0])
    assert skew_pair.tangent_dot[f] == pytest.approx(0.01561737618886061, abs=1e-15)


def test_symmetric_faces_reduce_to_central_differences(crisscross8):
    # mirrored triangle pairs: the centroid segment is normal to the face
    g = crisscross8
    A = assemble_diffusion(g).matrix
    inner = np.flatnonzero(g.mesh.interior)
    assert np.max(np.abs(g.tangent_dot)) < 1e-14
    o, nb = g.mesh.face_cells[inner].T
    coupling = np.asarray(A[o, nb]).ravel()
    assert np.allclose(coupling, g.face_areas[inner] / g.delta[inner], rtol=1e-12)


@pytest.mark.parametrize(
    "raw",
    [crisscross_mesh(6), diagonal_mesh(6), equilateral_mesh(5, 4), jitter_interior(crisscross_mesh(8), 0.015, seed=1)],
    ids=["crisscross", "diagonal", "equilateral", "jittered"],
)
def test_constant_annihilation(raw):
    geom = compute_geometry(build_connectivity(raw))
    A = assemble_diffusion(geom)
    row_scale = np.abs(A.matrix).sum(axis=1).A.ravel()
    for c in (1.0, -3.5, 1e3):
        r = A @ np.full(geom.n_cells, c)
        assert np.all(np.abs(r) <= 8 * np.finfo(float).eps * abs(c) * row_scale)


def test_locality_and_row_sparsity(crisscross8):
    A = assemble_diffusion(crisscross8).matrix.tocoo()
    mesh = crisscross8.mesh
    vsets = [set(mesh.raw.cells[c]) for c in range(mesh.n_cells)]
    for r, c in zip(A.row, A.col):
        assert r == c or vsets[r] & vsets[c]
    nnz = np.diff(crisscross8.mesh.vertex_cell_ptr).max()
    assert np.diff(assemble_diffusion(crisscross8).matrix.indptr).max() <= 3 + 3 * nnz


def test_variable_gamma_uses_face_interpolation(unit_square_pair):
    A = assemble_diffusion(unit_square_pair, gamma=[1.0, 3.0]).toarray()
    # equal centroid distances, so gamma_f = 2
    assert np.allclose(A, [[-6.0, 6.0], [6.0, -6.0]], atol=1e-13)
    with pytest.raises(ValueError):
        assemble_diffusion(unit_square_pair, gamma=[1.0, 0.0])
    with pytest.raises(MeshError):
        assemble_diffusion("not a geometry")


def _mms_error(raw):
    geom = compute_geometry(build_connectivity(raw))
    x, y = geom.cell_centroids.T
    u = np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    e = assemble_diffusion(geom) @ u / geom.cell_areas + 8 * np.pi**2 * u
    m = (x > 0.2) & (x < 0.8) & (y > 0.2) & (y < 0.8)
    return np.sqrt(np.sum(geom.cell_areas[m] * e[m] ** 2) / np.sum(geom.cell_areas[m]))


def test_manufactured_convergence_first_order():
    errs = [_mms_error(diagonal_mesh(n)) for n in (8, 16, 32, 64)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.0)


def test_manufactured_convergence_crisscross_near_first_order():
    errs = [_mms_error(crisscross_mesh(n)) for n in (16, 32, 64)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 0.95)


def test_gradient_constant_annihilation_on_closed_cells(crisscross8):
    inner = _interior_cells(crisscross8)
    for axis in "xy":
        G = assemble_gradient(crisscross8, axis)
        r = G @ np.full(crisscross8.n_cells, 2.5)
        assert np.max(np.abs(r[inner])) < 1e-14


def test_gradient_divergence_oracle_equilateral():
    # on equilateral pairs the centroid segment bisects the shared face, so the
    # two-point face value of a linear field is exact and the closed-cell
    # integral of x n_x equals the cell area
    geom = compute_geometry(build_connectivity(equilateral_mesh(6, 5)))
    full = np.isclose(geom.cell_areas, geom.cell_areas.max())
    inner = _interior_cells(geom)
    for c in np.flatnonzero(inner):
        nbrs = geom.mesh.face_cells[geom.mesh.cell_faces[c]].ravel()
        inner[c] = full[nbrs].all()
    assert inner.sum() > 10
    x, y = geom.cell_centroids.T
    gx = assemble_gradient(geom, "x")
    gy = assemble_gradient(geom, "y")
    area = geom.cell_areas[inner]
    assert np.allclose((gx @ x)[inner], area, rtol=1e-12, atol=0)
    assert np.allclose((gy @ y)[inner], area, rtol=1e-12, atol=0)
    assert np.max(np.abs((gx @ y)[inner])) < 1e-12 * area.max()
    assert np.max(np.abs((gy @ x)[inner])) < 1e-12 * area.max()


def test_gradient_oracle_crisscross_bounded_by_face_offset(crisscross8):
    # off equilateral meshes the face value sits at the centroid-line crossing
    # instead of the face midpoint; the error is bounded by that offset
    g = crisscross8
    inner = _interior_cells(g)
    gx = assemble_gradient(g, "x")
    x = g.cell_centroids[:, 0]
    mesh = g.mesh
    cross = g.cell_centroids[mesh.face_cells[:, 0]] + (1 - g.face_weights)[:, None] * g.intercell_vectors
    offset = np.abs(cross - g.face_midpoints)[:, 0] * g.face_areas
    bound = np.array([offset[mesh.cell_faces[c]].sum() for c in range(g.n_cells)])
    err = np.abs(gx @ x - g.cell_areas)
    assert np.all(err[inner] <= bound[inner] + 1e-15)


def test_gradient_kinds(crisscross8):
    assert assemble_gradient(crisscross8, "x").kind == "grad_x"
    assert assemble_gradient(crisscross8, 1).kind == "grad_y"
    with pytest.raises(ValueError):
        assemble_gradient(crisscross8, "z")


def test_apply_dense_oracle(rng):
    M = sp.random(5, 5, density=0.6, random_state=3, format="csr")
    op = SparseOperator(M)
    v = rng.standard_normal(5)
    assert np.allclose(apply(op, v), M.toarray() @ v, atol=1e-14, rtol=0)
    assert np.array_equal(apply(op, np.zeros(5)), np.zeros(5))
    one = SparseOperator(sp.csr_matrix(([7.0], ([2], [4])), shape=(5, 5)))
    assert apply(one, np.eye(5)[4])[2] == 7.0
    with pytest.raises(DimensionError):
        apply(op, np.ones(4))


def test_scalar_field_length_check(crisscross8):
    f = ScalarField(np.ones(crisscross8.n_cells), crisscross8)
    assert len(f) == crisscross8.n_cells
    with pytest.raises(DimensionError):
        ScalarField(np.ones(3), crisscross8)


def test_block_operator_layout(unit_square_pair, rng):
    L = assemble_diffusion(unit_square_pair)
    neg = SparseOperator(-L.matrix)
    A = BlockOperator([[neg, IDENTITY]], 2)
    dense = np.hstack([-L.toarray(), np.eye(2)])
    assert np.allclose(A.tocsr().toarray(), dense)
    y = rng.standard_normal(4)
    assert np.allclose(recover_rhs(A, y), dense @ y, atol=1e-14)
    assert np.array_equal(recover_rhs(A, np.zeros(4)), np.zeros(2))
    B = BlockOperator([[None, NEG_IDENTITY], [np.array([2.0, 3.0]), None]], 2)
    assert np.allclose(B.tocsr().toarray(), [[0, 0, -1, 0], [0, 0, 0, -1], [2, 0, 0, 0], [0, 3, 0, 0]])
    with pytest.raises(DimensionError):
        BlockOperator([[neg, np.ones(3)]], 2)
    with pytest.raises(DimensionError):
        recover_rhs(A, np.ones(3))


def test_triplet_roundtrip(tmp_path, crisscross8):
    L = assemble_diffusion(crisscross8)
    path = tmp_path / "L.txt"
    write_triplets(L, path)
    head = path.read_text().splitlines()[0]
    assert head == f"sparse {L.n_rows} {L.n_cols} {L.nnz}"
    again = read_triplets(path)
    assert (again.matrix != L.matrix).nnz == 0


def test_no_duplicate_entries(crisscross8):
    coo = assemble_diffusion(crisscross8).matrix.tocoo()
    pairs = set(zip(coo.row.tolist(), coo.col.tolist()))
    assert len(pairs) == coo.nnz


def test_boundary_faces_contribute_nothing():
    # a single triangle has only boundary faces
    geom = geometry([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    assert assemble_diffusion(geom).nnz == 0
    assert assemble_gradient(geom, "x").nnz == 0
