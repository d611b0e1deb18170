"""End-to-end offline/online pipeline, validation metrics and field export."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .deim import build_constraint_interpolants
from .errors import DimensionError, NiromError
from .fom import (
    CANONICAL_RANGES,
    ParameterDesign,
    generate_snapshots,
    lhs_sample,
    solve_canonical,
)
from .fvm import recover_rhs
from .io import write_json
from .mesh import geometry_from_file
from .observables import get_system
from .pod import assemble_block_basis, compute_pod, joint_basis
from .rom import RomDatabase, canonical_block_operator, predict, project

__all__ = [
    "PipelineConfig",
    "ValidationReport",
    "ValidationRow",
    "relative_error",
    "default_mesh_path",
    "build_database",
    "compute_basis",
    "run_pipeline",
    "validate",
    "export_field",
    "VALIDATION_POINTS",
]

log = logging.getLogger(__name__)

# Validation parameters (mu1, mu2) used for the canonical report.
VALIDATION_POINTS = (
    (0.94, 1.90),
    (0.45, 0.54),
    (0.70, 0.86),
    (1.61, 1.40),
    (1.53, 0.69),
    (1.69, 0.86),
    (1.65, 1.26),
    (0.30, 0.17),
    (0.91, 0.91),
    (0.96, 0.95),
    (1.61, 0.81),
    (1.81, 0.08),
)


def default_mesh_path():
    return Path(str(resources.files("nirom") / "data" / "canonical_1024.mesh"))


@dataclass
class PipelineConfig:
    """Everything that determines a pipeline run.

    ``validation_points`` takes precedence over ``m_validate``; with neither,
    the canonical defaults are used. ``pod_energy`` and ``pod_k`` are mutually
    exclusive; with neither the POD is untruncated.
    """

    mesh: str | None = None
    system: str = "canonical"
    ranges: list = field(default_factory=lambda: [list(r) for r in CANONICAL_RANGES])
    m_train: int = 20
    m_validate: int = 0
    validation_points: list | None = field(default_factory=lambda: [list(p) for p in VALIDATION_POINTS])
    seed: int = 0
    pod_mode: str = "block"
    pod_energy: float | None = None
    pod_k: int | None = None
    deim_q: int | None = None
    degree: int = 2
    lumping: str = "identity"
    initial_guess: str = "nearest"
    fom_tol: float = 1e-10
    tol_kkt: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 200
    max_error: float = 5.0
    max_median_error: float = 1.5
    out: str | None = None

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=float)
        if r.ndim != 2 or r.shape[1] != 2 or r.shape[0] == 0 or np.any(r[:, 1] < r[:, 0]):
            raise ValueError(f"invalid parameter ranges {self.ranges}")
        if self.pod_energy is not None and not 0.0 < self.pod_energy <= 1.0:
            raise ValueError("pod_energy must lie in (0, 1]")
        if self.pod_energy is not None and self.pod_k is not None:
            raise ValueError("give pod_energy or pod_k, not both")
        if self.pod_mode not in ("block", "joint"):
            raise ValueError(f"pod_mode must be 'block' or 'joint', got {self.pod_mode!r}")
        if self.m_train < 1:
            raise ValueError("m_train must be positive")

    @property
    def mesh_path(self):
        return Path(self.mesh) if self.mesh else default_mesh_path()

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        import json

        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        write_json(path, self.to_dict())

    def validation_design(self):
        if self.validation_points:
            pts = np.asarray(self.validation_points, dtype=float)
            return ParameterDesign(self.ranges, pts, ("validate",) * len(pts), None)
        if self.m_validate > 0:
            return lhs_sample(self.ranges, self.m_validate, seed=self.seed + 1, role="validate")
        return ParameterDesign(self.ranges, np.zeros((0, len(self.ranges))), (), None)


def relative_error(reference, approx):
    """``100 ||reference - approx||_2 / ||reference||_2`` (percent)."""
    a = np.asarray(reference, dtype=float).ravel()
    b = np.asarray(approx, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"vectors of length {a.size} and {b.size}")
    den = float(np.linalg.norm(a))
    if den == 0.0:
        raise ZeroDivisionError("reference vector has zero norm")
    return 100.0 * float(np.linalg.norm(a - b)) / den


@dataclass
class ValidationRow:
    theta: tuple
    error: float
    converged: bool
    iterations: int
    violation: float
    fom_time: float
    rom_time: float


@dataclass
class ValidationReport:
    rows: list
    pod_mode: str = "block"
    k: int = 0

    @property
    def errors(self):
        return np.array([r.error for r in self.rows])

    @property
    def max_error(self):
        return float(self.errors.max()) if self.rows else float("nan")

    @property
    def median_error(self):
        return float(np.median(self.errors)) if self.rows else float("nan")

    @property
    def fom_time(self):
        return float(sum(r.fom_time for r in self.rows))

    @property
    def rom_time(self):
        return float(sum(r.rom_time for r in self.rows))

    @property
    def speedup(self):
        return self.fom_time / self.rom_time if self.rom_time > 0 else float("inf")

    def passes(self, max_error=5.0, max_median=1.5):
        return self.max_error < max_error and self.median_error < max_median

    def summary(self):
        return {
            "pod_mode": self.pod_mode,
            "k": self.k,
            "max_error": self.max_error,
            "median_error": self.median_error,
            "fom_time": self.fom_time,
            "rom_time": self.rom_time,
            "speedup": self.speedup,
        }

    def to_dict(self):
        return {"summary": self.summary(), "rows": [dataclasses.asdict(r) for r in self.rows]}

    def format_table(self):
        names = [f"theta{i + 1}" for i in range(len(self.rows[0].theta))] if self.rows else []
        lines = ["  ".join(f"{n:>8}" for n in names) + "   R.E.(%)  iters  converged"]
        for r in self.rows:
            th = "  ".join(f"{t:8.4f}" for t in r.theta)
            lines.append(f"{th}  {r.error:8.4f}  {r.iterations:5d}  {r.converged}")
        lines.append(f"max {self.max_error:.4f}%  median {self.median_error:.4f}%  speedup {self.speedup:.1f}x")
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            dim = len(self.rows[0].theta) if self.rows else 0
            w.writerow([f"theta{i + 1}" for i in range(dim)] + ["relative_error_pct", "converged", "iterations", "violation", "fom_time_s", "rom_time_s"])
            for r in self.rows:
                w.writerow([repr(float(t)) for t in r.theta] + [repr(r.error), int(r.converged), r.iterations, repr(r.violation), repr(r.fom_time), repr(r.rom_time)])


def compute_basis(snapshots, system, mode="block", k=None, energy=None):
    """Per-block or joint trial basis of a snapshot set."""
    if mode == "joint":
        return joint_basis(snapshots.matrix, snapshots.n_cells, k=k, energy=energy)
    bases = [
        compute_pod(snapshots.block(i), k=k, energy=energy, block=name)
        for i, name in enumerate(system.observable_names)
    ]
    return assemble_block_basis(bases, snapshots.n_cells)


def build_database(
    snapshots,
    operator,
    system,
    pod_mode="block",
    pod_k=None,
    pod_energy=None,
    deim_q=None,
    ranges=None,
    degree=2,
    manifest=None,
    basis=None,
):
    """Offline stage: POD (unless ``basis`` is given), RHS recovery, projection and DEIM factors."""
    if basis is None:
        basis = compute_basis(snapshots, system, pod_mode, pod_k, pod_energy)
    F = recover_rhs(operator, snapshots.matrix)
    B, Ft = project(operator, F, basis)
    m = snapshots.n_snapshots
    B_stack = np.repeat(B[None], m, axis=0)
    energy = pod_energy if deim_q is None else None
    interps = build_constraint_interpolants(system, basis, snapshots, q=deim_q, energy=energy)
    reduced = np.ascontiguousarray((basis.matrix.T @ snapshots.matrix).T)
    meta = {"system": system.name, "n_cells": snapshots.n_cells, "mesh": snapshots.mesh_id}
    meta.update(manifest or {})
    return RomDatabase(snapshots.thetas, B_stack, Ft.T, basis, interps, reduced, ranges, degree, meta)


def validate(db, system, geom, design, config, on_point=None):
    """Predict at every point of ``design`` and compare with a fresh FOM solve.

    The FOM time covers a complete black-box solve (operator set-up included);
    the ROM time covers interpolation, the reduced solve and reconstruction.
    """
    rows = []
    for theta in design.points:
        t0 = time.perf_counter()
        u = solve_canonical(geom, theta, tol=config.fom_tol)
        fom_time = time.perf_counter() - t0
        y_fom = system.lift(u, theta)
        t0 = time.perf_counter()
        y_rom, sol = predict(db, theta, system, config.tol_kkt, config.tol_feas, config.max_iter, config.initial_guess)
        rom_time = time.perf_counter() - t0
        row = ValidationRow(tuple(float(t) for t in theta), relative_error(y_fom, y_rom), bool(sol.converged), sol.iterations, sol.violation, fom_time, rom_time)
        rows.append(row)
        if on_point:
            on_point(row)
    return ValidationReport(rows, db.basis.mode, db.k)


def run_pipeline(config, out=None):
    """Sample, solve, reduce, persist, then validate.

    Returns the :class:`ValidationReport` and the :class:`RomDatabase`. With
    an output directory the design, snapshots, database and report are
    written there.
    """
    out = Path(out or config.out) if (out or config.out) else None
    stage = "setup"
    try:
        system = get_system(config.system)
        if system.name != "canonical":
            raise NiromError(f"no full-order solver is bundled for system {config.system!r}")
        stage = "mesh"
        geom = geometry_from_file(config.mesh_path)
        stage = "sample"
        design = lhs_sample(config.ranges, config.m_train, seed=config.seed)
        stage = "snapshots"
        snaps = generate_snapshots(design, system, geom, tol=config.fom_tol, mesh_id=config.mesh_path.name)
        stage = "build"
        operator = canonical_block_operator(geom, config.lumping)
        db = build_database(
            snaps,
            operator,
            system,
            config.pod_mode,
            config.pod_k,
            config.pod_energy,
            config.deim_q,
            config.ranges,
            config.degree,
            {"seed": config.seed, "lumping": config.lumping},
        )
        if out:
            out.mkdir(parents=True, exist_ok=True)
            config.save(out / "config.json")
            write_json(out / "design.json", design.to_dict())
            snaps.save(out / "snapshots.romb")
            db.save(out / "database")
        stage = "validate"
        report = validate(db, system, geom, config.validation_design(), config)
        if out:
            report.write_csv(out / "report.csv")
            write_json(out / "report.json", report.to_dict())
    except NiromError as exc:
        raise NiromError(f"stage '{stage}' failed: {exc}") from exc
    return report, db


def _mesh_of(mesh):
    return mesh.mesh.raw if hasattr(mesh, "mesh") else getattr(mesh, "raw", mesh)


def export_field(values, mesh, path, fmt=None, name="value"):
    """Write cell values as CSV (``cell_id,cx,cy,value``) or legacy VTK.

    ``mesh`` is a :class:`~nirom.mesh.MeshGeometry`, ``Mesh`` or ``RawMesh``.
    ``values`` may be a stacked observable vector, whose blocks are written
    as separate columns (CSV) or scalar arrays (VTK).
    """
    raw = _mesh_of(mesh)
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    v = np.asarray(values, dtype=float).ravel()
    n = raw.n_cells
    if v.size == 0 or v.size % n:
        raise DimensionError(f"{v.size} values do not match {n} cells")
    cols = v.reshape(-1, n)
    names = [name] if cols.shape[0] == 1 else [f"{name}{i + 1}" for i in range(cols.shape[0])]
    cent = raw.nodes[raw.cells].mean(axis=1)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell_id", "cx", "cy", *names])
            for i in range(n):
                w.writerow([i, repr(float(cent[i, 0])), repr(float(cent[i, 1])), *(repr(float(c[i])) for c in cols)])
    elif fmt == "vtk":
        lines = [
            "# vtk DataFile Version 2.0",
            "nirom cell field",
            "ASCII",
            "DATASET UNSTRUCTURED_GRID",
            f"POINTS {raw.n_nodes} double",
        ]
        lines += [f"{x!r} {y!r} 0.0" for x, y in raw.nodes.tolist()]
        lines.append(f"CELLS {n} {4 * n}")
        lines += [f"3 {a} {b} {c}" for a, b, c in raw.cells.tolist()]
        lines.append(f"CELL_TYPES {n}")
        lines += ["5"] * n
        lines.append(f"CELL_DATA {n}")
        for nm, c in zip(names, cols):
            lines += [f"SCALARS {nm} double 1", "LOOKUP_TABLE default"]
            lines += [repr(float(x)) for x in c]
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return path
