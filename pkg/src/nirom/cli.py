"""Command-line interface.

Exit codes: 0 success, 1 validation thresholds missed, 2 errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .fom import ParameterDesign, SnapshotSet, generate_snapshots, lhs_sample
from .fvm import assemble_diffusion, assemble_gradient, write_triplets
from .io import read_json, read_romb, write_json, write_romb
from .mesh import geometry_from_file
from .observables import get_system
from .pipeline import (
    PipelineConfig,
    build_database,
    compute_basis,
    export_field,
    run_pipeline,
    validate,
)
from .pod import BlockBasis, PodBasis
from .rom import RomDatabase, canonical_block_operator, predict

log = logging.getLogger("nirom")

EXIT_OK, EXIT_THRESHOLD, EXIT_ERROR = 0, 1, 2


def _config(args):
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.mesh is not None:
        cfg.mesh = str(args.mesh)
    if args.out is not None:
        cfg.out = str(args.out)
    return cfg


def _out(args, default):
    return Path(args.out) if args.out else Path(default)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_mesh_info(args, cfg):
    geom = geometry_from_file(cfg.mesh_path)
    mesh = geom.mesh
    _emit(
        {
            "mesh": str(cfg.mesh_path),
            "cells": mesh.raw.n_cells,
            "nodes": mesh.raw.n_nodes,
            "faces": mesh.n_faces,
            "interior_faces": mesh.n_interior_faces,
            "boundary_faces": mesh.n_boundary_faces,
            "total_area": float(geom.cell_areas.sum()),
            "min_cell_area": float(geom.cell_areas.min()),
            "max_cell_area": float(geom.cell_areas.max()),
        }
    )
    return EXIT_OK


def cmd_sample(args, cfg):
    count = args.count if args.count is not None else cfg.m_train
    design = lhs_sample(cfg.ranges, count, seed=cfg.seed)
    path = _out(args, "design.json")
    write_json(path, design.to_dict())
    print(f"wrote {count} design points to {path}")
    return EXIT_OK


def cmd_snapshots(args, cfg):
    design = ParameterDesign.from_dict(read_json(args.design)) if args.design else lhs_sample(cfg.ranges, cfg.m_train, cfg.seed)
    geom = geometry_from_file(cfg.mesh_path)
    system = get_system(cfg.system)
    snaps = generate_snapshots(design, system, geom, tol=cfg.fom_tol, mesh_id=cfg.mesh_path.name)
    path = _out(args, "snapshots.romb")
    snaps.save(path)
    print(f"wrote {snaps.n_snapshots} snapshots ({snaps.matrix.shape[0]} rows) to {path}")
    return EXIT_OK


def _save_basis(basis, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_romb(d / "basis.romb", basis.matrix)
    meta = {"mode": basis.mode, "block_sizes": list(basis.block_sizes), "n_cells": basis.n_cells}
    meta["sigma"] = {b.block: b.sigma.tolist() for b in basis.bases}
    meta["energy"] = {b.block: b.energy() for b in basis.bases}
    write_json(d / "basis.json", meta)


def _load_basis(directory):
    d = Path(directory)
    meta = read_json(d / "basis.json")
    mat = read_romb(d / "basis.romb")
    bases = tuple(PodBasis(np.zeros((0, 0)), np.asarray(s), name) for name, s in meta["sigma"].items())
    return BlockBasis(mat, tuple(meta["block_sizes"]), meta["n_cells"], bases, meta["mode"])


def cmd_pod(args, cfg):
    snaps = SnapshotSet.load(args.snapshots)
    system = get_system(snaps.system)
    basis = compute_basis(snaps, system, cfg.pod_mode, cfg.pod_k, cfg.pod_energy)
    path = _out(args, "pod")
    _save_basis(basis, path)
    print(f"{basis.mode} basis with block sizes {list(basis.block_sizes)} written to {path}")
    return EXIT_OK


def cmd_build(args, cfg):
    snaps = SnapshotSet.load(args.snapshots)
    system = get_system(snaps.system)
    geom = geometry_from_file(cfg.mesh_path)
    if geom.n_cells != snaps.n_cells:
        raise ValueError(f"mesh has {geom.n_cells} cells, snapshots have {snaps.n_cells}")
    basis = _load_basis(args.basis) if args.basis else None
    db = build_database(
        snaps,
        canonical_block_operator(geom, cfg.lumping),
        system,
        cfg.pod_mode,
        cfg.pod_k,
        cfg.pod_energy,
        cfg.deim_q,
        cfg.ranges,
        cfg.degree,
        {"seed": snaps.extra.get("seed", cfg.seed), "lumping": cfg.lumping},
        basis=basis,
    )
    path = _out(args, "database")
    db.save(path)
    print(f"database with {len(db)} instances (k={db.k}) written to {path}")
    return EXIT_OK


def cmd_predict(args, cfg):
    db = RomDatabase.load(args.db)
    system = get_system(db.manifest.get("system", cfg.system))
    y, sol = predict(db, args.theta, system, cfg.tol_kkt, cfg.tol_feas, cfg.max_iter, cfg.initial_guess)
    if args.out:
        path = Path(args.out)
        if path.suffix.lower() in (".csv", ".vtk"):
            geom = geometry_from_file(cfg.mesh_path)
            export_field(y, geom, path)
        else:
            write_romb(path, y)
    _emit(
        {
            "theta": list(args.theta),
            "converged": sol.converged,
            "iterations": sol.iterations,
            "objective": sol.objective,
            "violation": sol.violation,
            "reduced": sol.y.tolist(),
        }
    )
    return EXIT_OK


def _finish_report(report, cfg, out):
    print(report.format_table())
    if out:
        out.mkdir(parents=True, exist_ok=True)
        report.write_csv(out / "report.csv")
        write_json(out / "report.json", report.to_dict())
    return EXIT_OK if report.passes(cfg.max_error, cfg.max_median_error) else EXIT_THRESHOLD


def cmd_validate(args, cfg):
    db = RomDatabase.load(args.db)
    system = get_system(db.manifest.get("system", cfg.system))
    geom = geometry_from_file(cfg.mesh_path)
    report = validate(db, system, geom, cfg.validation_design(), cfg)
    return _finish_report(report, cfg, Path(args.out) if args.out else None)


def cmd_export(args, cfg):
    geom = geometry_from_file(cfg.mesh_path)
    path = Path(args.out) if args.out else None
    if args.operator:
        op = assemble_diffusion(geom) if args.operator == "diffusion" else assemble_gradient(geom, args.operator[-1])
        path = path or Path(f"{args.operator}.txt")
        write_triplets(op, path)
    else:
        if args.theta is None or args.db is None:
            raise ValueError("export needs --operator, or --db with --theta")
        db = RomDatabase.load(args.db)
        system = get_system(db.manifest.get("system", cfg.system))
        y, _ = predict(db, args.theta, system, cfg.tol_kkt, cfg.tol_feas, cfg.max_iter, cfg.initial_guess)
        if args.restrict:
            y = system.restrict(y, args.theta)
        path = path or Path("field.vtk")
        export_field(y, geom, path, args.format)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_run(args, cfg):
    report, db = run_pipeline(cfg)
    print(f"database: k={db.k}, mode={db.basis.mode}")
    # run_pipeline already persisted the report when an output dir is set
    return _finish_report(report, cfg, None)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON pipeline configuration")
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("--out", type=Path, help="output file or directory")
    common.add_argument("--mesh", type=Path, help="mesh file (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="nirom", description="Non-intrusive reduced-order modelling pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("mesh-info", parents=[common], help="mesh statistics").set_defaults(func=cmd_mesh_info)

    s = sub.add_parser("sample", parents=[common], help="Latin-hypercube training design")
    s.add_argument("--count", type=int)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("snapshots", parents=[common], help="full-order snapshots")
    s.add_argument("--design", type=Path)
    s.set_defaults(func=cmd_snapshots)

    s = sub.add_parser("pod", parents=[common], help="trial basis from snapshots")
    s.add_argument("--snapshots", type=Path, required=True)
    s.set_defaults(func=cmd_pod)

    s = sub.add_parser("build", parents=[common], help="reduced database")
    s.add_argument("--snapshots", type=Path, required=True)
    s.add_argument("--basis", type=Path, help="directory written by 'pod'")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("predict", parents=[common], help="reduced prediction at one parameter point")
    s.add_argument("theta", type=float, nargs="+")
    s.add_argument("--db", type=Path, required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("validate", parents=[common], help="compare predictions with full-order solves")
    s.add_argument("--db", type=Path, required=True)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("export", parents=[common], help="write an operator or a predicted field")
    s.add_argument("--operator", choices=["diffusion", "grad_x", "grad_y"])
    s.add_argument("--db", type=Path)
    s.add_argument("--theta", type=float, nargs="+")
    s.add_argument("--format", choices=["csv", "vtk"])
    s.add_argument("--restrict", action="store_true", help="export the state instead of the observables")
    s.set_defaults(func=cmd_export)

    sub.add_parser("run", parents=[common], help="full pipeline").set_defaults(func=cmd_run)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except (Exception, KeyboardInterrupt) as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
