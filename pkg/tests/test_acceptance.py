"""Acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured values
(visible in a plain ``pytest`` run) before asserting. Informational lines
start with ``INFO``. Run just this module with::

    pytest tests/test_acceptance.py -v
"""

import time
import warnings

import numpy as np
import pytest

from nirom.deim import build_constraint_interpolants, deim_approximation, evaluate_constraint_reduced, select_points
from nirom.fom import generate_snapshots, lhs_sample, solve_canonical
from nirom.fvm import assemble_diffusion, assemble_gradient
from nirom.interp import interpolate_rom, lagrange_fit_eval
from nirom.mesh import build_connectivity, compute_geometry
from nirom.meshgen import crisscross_mesh, diagonal_mesh, equilateral_mesh
from nirom.observables import CanonicalSystem, EulerSystem
from nirom.pipeline import PipelineConfig, compute_basis, run_pipeline
from nirom.pod import compute_pod, projection_error, tail_energy
from nirom.rom import RomDatabase, predict

from .conftest import geometry


@pytest.fixture
def say(capsys):
    def emit(line):
        with capsys.disabled():
            print(f"\n    {line}")

    return emit


def verdict(say, label, ok, detail):
    say(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
    return ok


@pytest.fixture(scope="module")
def canonical_run():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return run_pipeline(PipelineConfig())


# 1. canonical end-to-end accuracy


def test_criterion_1_canonical_accuracy(canonical_run, say):
    report, db = canonical_run
    for row in report.rows:
        say(f"INFO  theta=({row.theta[0]:.2f}, {row.theta[1]:.2f})  R.E.={row.error:.4f}%  iterations={row.iterations}")
    ok = report.max_error < 5.0 and report.median_error < 1.5 and all(r.converged for r in report.rows)
    verdict(
        say,
        "1 canonical accuracy",
        ok,
        f"per-block POD k={db.k}, max {report.max_error:.3f}% (< 5), median {report.median_error:.3f}% (< 1.5)",
    )
    assert ok


def test_criterion_1_joint_mode_report(say):
    # informational: the stacked joint basis, with and without a truncated
    # nonlinear basis for the constraint interpolation
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for q in (None, 15):
            report, db = run_pipeline(PipelineConfig(pod_mode="joint", deim_q=q))
            say(
                f"INFO  joint POD k={db.k}, constraint rows q={q or db.k}: "
                f"max {report.max_error:.3f}%, median {report.median_error:.3f}%"
            )


def test_criterion_1_seed_sweep(say):
    # informational: sensitivity of the default config to the training design
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for seed in range(1, 5):
            report, _ = run_pipeline(PipelineConfig(seed=seed))
            flag = "within" if report.passes() else "outside"
            say(f"INFO  seed {seed}: max {report.max_error:.3f}%, median {report.median_error:.3f}% ({flag} the band)")


# 2. POD identity


def test_criterion_2_pod_identity(say):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(30, 501))
        n = int(rng.integers(2, 31))
        U = rng.standard_normal((m, n)) @ np.diag(rng.uniform(0.1, 10.0, n))
        k = int(rng.integers(0, n))
        b = compute_pod(U, k=k)
        direct = projection_error(U, b)
        worst = max(worst, abs(direct - tail_energy(b)) / direct)
    ok = worst <= 1e-8
    verdict(say, "2 POD identity", ok, f"worst relative mismatch {worst:.2e} over 20 matrices (<= 1e-8)")
    assert ok


# 3. DEIM exactness


def test_criterion_3_deim(canonical_geom, say):
    rng = np.random.default_rng(3)
    worst_span = 0.0
    for n, q in [(30, 4), (200, 12), (1024, 20)]:
        X = np.linalg.qr(rng.standard_normal((n, q)))[0]
        rho = select_points(X)
        for _ in range(5):
            v = X @ rng.standard_normal(q)
            worst_span = max(worst_span, np.linalg.norm(deim_approximation(X, rho, v) - v) / np.linalg.norm(v))

    system = CanonicalSystem()
    snaps = generate_snapshots(lhs_sample([(0.01, 2.0), (0.01, 2.0)], 20, seed=0), system, canonical_geom)
    worst_red = 0.0
    for mode in ("block", "joint"):
        basis = compute_basis(snaps, system, mode)
        interps = build_constraint_interpolants(system, basis, snaps)
        T = basis.rows(1)[:, basis.col_slice(1)] if mode == "block" else interps[0].X
        for j, theta in enumerate(snaps.thetas):
            yr = basis.project(snaps.matrix[:, j])
            h_red, _ = evaluate_constraint_reduced(yr, interps, system, theta)
            ref = T.T @ system.constraint_residual(basis.reconstruct(yr), theta)
            scale = np.linalg.norm(T.T @ snaps.block(1)[:, j])
            worst_red = max(worst_red, np.linalg.norm(h_red - ref) / scale)
    ok = worst_span <= 1e-12 and worst_red <= 1e-8
    verdict(
        say,
        "3 DEIM exactness",
        ok,
        f"span reconstruction {worst_span:.2e} (<= 1e-12), reduced vs full constraint {worst_red:.2e} (<= 1e-8)",
    )
    assert ok


# 4. finite-volume operator correctness


def _mms_error(raw):
    geom = compute_geometry(build_connectivity(raw))
    x, y = geom.cell_centroids.T
    u = np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    e = assemble_diffusion(geom) @ u / geom.cell_areas + 8 * np.pi**2 * u
    m = (x > 0.2) & (x < 0.8) & (y > 0.2) & (y < 0.8)
    return np.sqrt(np.sum(geom.cell_areas[m] * e[m] ** 2) / np.sum(geom.cell_areas[m]))


def test_criterion_4_fv_operator(say):
    # (a) constants are annihilated up to summation round-off
    worst_const = 0.0
    for raw in (crisscross_mesh(16), diagonal_mesh(16), equilateral_mesh(8, 7)):
        geom = compute_geometry(build_connectivity(raw))
        A = assemble_diffusion(geom)
        scale = np.abs(A.matrix).sum(axis=1).A.ravel()
        worst_const = max(worst_const, float(np.max(np.abs(A @ np.ones(geom.n_cells)) / scale)))
    ok_a = worst_const <= 8 * np.finfo(float).eps

    # (b) two right triangles sharing a diagonal: -3/3 by hand
    pair = geometry([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 1, 2), (0, 2, 3)])
    dev = float(np.max(np.abs(assemble_diffusion(pair).toarray() - [[-3.0, 3.0], [3.0, -3.0]])))
    ok_b = dev <= 1e-13

    # (c) manufactured solution, 4 levels
    errs = [_mms_error(diagonal_mesh(n)) for n in (8, 16, 32, 64)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    ok_c = bool(np.all(orders >= 1.0))
    cc = [_mms_error(crisscross_mesh(n)) for n in (8, 16, 32, 64)]
    cc_orders = np.log2(np.array(cc[:-1]) / cc[1:])
    say(f"INFO  crisscross family orders {np.array2string(cc_orders, precision=3)} (pre-asymptotic first pair)")

    ok = ok_a and ok_b and ok_c
    verdict(
        say,
        "4 FV operator",
        ok,
        f"(a) |A 1|/row-sum {worst_const:.1e}; (b) hand oracle dev {dev:.1e} (<= 1e-13); "
        f"(c) orders {np.array2string(orders, precision=3)} (>= 1)",
    )
    assert ok


# 5. interpolation exactness


def test_criterion_5_interpolation(say):
    rng = np.random.default_rng(5)

    def poly(t, c):
        t1, t2 = np.atleast_2d(t).T
        return c[0] + c[1] * t1 + c[2] * t2 + c[3] * t1 * t2 + c[4] * t1**2 + c[5] * t2**2

    worst_poly = 0.0
    for _ in range(20):
        c = rng.standard_normal(6)
        pts = rng.uniform(0.01, 2.0, (6, 2))
        theta = rng.uniform(0.01, 2.0, 2)
        got = lagrange_fit_eval(pts, poly(pts, c), theta, ranges=[(0.01, 2.0)] * 2)
        worst_poly = max(worst_poly, abs(got - poly(theta, c)[0]))

    thetas = rng.uniform(0.01, 2.0, (20, 2))
    B = rng.standard_normal((20, 6, 6))
    B = B + B.transpose(0, 2, 1)
    f = rng.standard_normal((20, 6))
    db = RomDatabase(thetas, B, f, None, [], None, [(0.01, 2.0)] * 2)
    worst_node = 0.0
    for i in range(20):
        inst = interpolate_rom(db, thetas[i])
        worst_node = max(worst_node, np.abs(inst.B - B[i]).max(), np.abs(inst.f - f[i]).max())
    ok = worst_poly <= 1e-10 and worst_node <= 1e-12
    verdict(say, "5 interpolation", ok, f"quadratic off-node {worst_poly:.1e} (<= 1e-10), node reproduction {worst_node:.1e} (<= 1e-12)")
    assert ok


# 6. offline scaling


def _best_time(fun, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fun()
        best = min(best, time.perf_counter() - t0)
    return best


def test_criterion_6_offline_scaling(say):
    sizes, times = [], []
    for n in (32, 45, 64):
        geom = compute_geometry(build_connectivity(crisscross_mesh(n)))
        sizes.append(geom.n_cells)
        times.append(_best_time(lambda: assemble_diffusion(geom), 7))
    sizes, times = np.array(sizes), np.array(times)
    # rescale each step to an exact doubling of N
    per_doubling = (times[1:] / times[:-1]) ** (np.log(2) / np.log(sizes[1:] / sizes[:-1]))
    ok = bool(np.all((per_doubling >= 1.5) & (per_doubling <= 3.0)))
    detail = ", ".join(f"N={n}: {t * 1e3:.2f} ms" for n, t in zip(sizes, times))
    verdict(say, "6 offline scaling (soft)", ok, f"{detail}; growth per doubling {np.array2string(per_doubling, precision=2)} (in [1.5, 3.0])")
    assert ok


# 7. online speedup


def test_criterion_7_online_speedup(canonical_run, canonical_geom, say):
    _, db = canonical_run
    system = CanonicalSystem()
    fom_total = rom_total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for theta in PipelineConfig().validation_points:
            fom_total += _best_time(lambda: solve_canonical(canonical_geom, theta), 3)
            rom_total += _best_time(lambda: predict(db, theta, system), 3)
    ratio = fom_total / rom_total
    ok = ratio >= 10.0
    verdict(
        say,
        "7 online speedup (soft)",
        ok,
        f"FOM {fom_total * 1e3:.1f} ms vs ROM {rom_total * 1e3:.1f} ms over 12 points, ratio {ratio:.1f}x (>= 10)",
    )
    assert ok


# 8. Euler machinery


def _euler_state(rng, n):
    rho = rng.uniform(0.5, 2.0, n)
    u = rng.uniform(0.2, 1.5, n) * rng.choice([-1, 1], n)
    v = rng.uniform(0.2, 1.5, n) * rng.choice([-1, 1], n)
    p = rng.uniform(0.5, 3.0, n)
    return rho, u, v, p


def test_criterion_8_euler_machinery(say):
    rng = np.random.default_rng(8)

    # gradient operators: constants vanish on closed cells, linear fields
    # integrate to the cell area on equilateral interiors
    geom = compute_geometry(build_connectivity(equilateral_mesh(6, 5)))
    bnd = np.zeros(geom.n_cells, bool)
    bnd[geom.mesh.face_cells[~geom.mesh.interior, 0]] = True
    full = np.isclose(geom.cell_areas, geom.cell_areas.max())
    inner = ~bnd
    for c in np.flatnonzero(inner):
        inner[c] = full[geom.mesh.face_cells[geom.mesh.cell_faces[c]].ravel()].all()
    gx, gy = assemble_gradient(geom, "x"), assemble_gradient(geom, "y")
    const = max(np.abs((g @ np.full(geom.n_cells, 2.5))[~bnd]).max() for g in (gx, gy))
    x, y = geom.cell_centroids.T
    area = geom.cell_areas[inner]
    div = max(np.abs((gx @ x)[inner] - area).max(), np.abs((gy @ y)[inner] - area).max()) / area.max()
    ok_grad = const < 1e-13 and div < 1e-12

    euler = EulerSystem()
    worst_h = 0.0
    for gamma in (1.4, 1.1, 5.0 / 3.0):
        ys = euler.lift(_euler_state(rng, 50), gamma)
        worst_h = max(worst_h, np.abs(euler.constraint_residual(ys, gamma)).max() / np.abs(ys).max())
    ok_h = worst_h <= 1e-12

    ys = euler.lift(_euler_state(rng, 5), 1.4) * (1 + 0.05 * rng.standard_normal(40))
    J = euler.constraint_jacobian(ys, 1.4).toarray()
    fd = np.empty_like(J)
    for j in range(ys.size):
        e = np.zeros_like(ys)
        e[j] = 1e-6 * max(1.0, abs(ys[j]))
        fd[:, j] = (euler.constraint_residual(ys + e, 1.4) - euler.constraint_residual(ys - e, 1.4)) / (2 * e[j])
    jac = float(np.max(np.abs(J - fd) / (np.abs(J) + 1.0)))
    ok_j = jac <= 1e-6

    ok = ok_grad and ok_h and ok_j
    verdict(
        say,
        "8 Euler machinery",
        ok,
        f"gradient constants {const:.1e}, divergence oracle {div:.1e}; "
        f"constraints on lifted states {worst_h:.1e} (<= 1e-12); Jacobian vs FD {jac:.1e} (<= 1e-6)",
    )
    assert ok
