"""Command line entry point: ``platevem run|mesh|sweep``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from typing import Iterator, Optional, Sequence

from .adapt import StudyError, StudyHistory, adaptive_loop, mesh_sequence_study
from .assembly import SolverError, build_dof_map
from .io import (ConfigError, RunConfig, confined_path, ensure_dir, eval_number, export_snapshot,
                 format_config, load_config, write_history_csv)
from .mesh import Mesh, MeshError, generate_structured, generate_voronoi, load_mesh, refine, save_mesh

log = logging.getLogger("platevem")


def initial_mesh(cfg: RunConfig) -> Mesh:
    if cfg.mesh_file is not None:
        return load_mesh(cfg.mesh_file)
    if cfg.geometry == "voronoi":
        return generate_voronoi(cfg.n, lloyd_iters=cfg.lloyd_iters, rng_seed=cfg.rng_seed)
    return generate_structured(cfg.geometry, cfg.n)


def uniform_meshes(cfg: RunConfig) -> Iterator[Mesh]:
    """Level j: structured meshes with ``n * 2**j`` cells per side, Voronoi
    meshes with ``n * 4**j`` seeds, file meshes refined j times (all elements)."""
    mesh = initial_mesh(cfg)
    for j in range(cfg.max_steps):
        if j > 0:
            if cfg.mesh_file is not None:
                mesh = refine(mesh, range(mesh.num_polygons))
            elif cfg.geometry == "voronoi":
                mesh = generate_voronoi(cfg.n * 4**j, lloyd_iters=cfg.lloyd_iters,
                                        rng_seed=cfg.rng_seed)
            else:
                mesh = generate_structured(cfg.geometry, cfg.n * 2**j)
        if build_dof_map(mesh, cfg.problem).num_free > cfg.max_dofs:
            if j == 0:
                raise StudyError(f"initial mesh exceeds max_dofs={cfg.max_dofs}")
            return
        yield mesh


def run_study(cfg: RunConfig, keep_meshes: bool = True) -> StudyHistory:
    exact = cfg.exact_eigenvalues
    common = dict(bc=cfg.problem, k=cfg.num_eigs, alpha_delta=cfg.alpha_delta,
                  alpha_0=cfg.alpha_0, exact=exact, target=cfg.target, keep_meshes=keep_meshes)
    if cfg.mode == "uniform":
        try:
            return mesh_sequence_study(uniform_meshes(cfg), **common)
        except (SolverError, MeshError) as exc:
            raise StudyError(str(exc)) from exc
    return adaptive_loop(initial_mesh(cfg), delta=cfg.dorfler_delta,
                         max_steps=max(cfg.max_steps - 1, 0), max_dofs=cfg.max_dofs, **common)


def write_artifacts(cfg: RunConfig, history: StudyHistory) -> None:
    root = ensure_dir(cfg.output_dir)
    confined_path(root, "config.txt").write_text(format_config(cfg))
    write_history_csv(history, confined_path(root, "history.csv"))
    ensure_dir(confined_path(root, "meshes"))
    ensure_dir(confined_path(root, "snapshots"))
    for rec in history:
        if rec.mesh is None:
            continue
        save_mesh(rec.mesh, confined_path(root, f"meshes/mesh_{rec.step:03d}.txt"))
        export_snapshot(rec.mesh, rec.u_full, confined_path(root, f"snapshots/u_{rec.step:03d}.vtk"),
                        title=f"step {rec.step} lambda {rec.lam:.17g}")


def run(cfg: RunConfig) -> StudyHistory:
    cfg.validate()
    history = run_study(cfg)
    write_artifacts(cfg, history)
    return history


def alpha_label(alpha: float) -> str:
    return f"{alpha:.17g}".replace("+", "")


def sweep(cfg: RunConfig, alphas: Sequence[float]) -> dict[float, StudyHistory]:
    """The configured study once per ``alpha = alpha_delta = alpha_0``; one CSV each."""
    cfg.validate()
    root = ensure_dir(cfg.output_dir)
    out = {}
    for alpha in alphas:
        sub = replace(cfg, alpha_delta=float(alpha), alpha_0=float(alpha)).validate()
        history = run_study(sub, keep_meshes=False)
        write_history_csv(history, confined_path(root, f"history_alpha_{alpha_label(alpha)}.csv"))
        out[alpha] = history
    return out


def parse_alphas(text: str) -> list[float]:
    return [eval_number(t) for t in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="platevem",
                                description="C1 virtual elements for plate vibration eigenproblems")
    p.add_argument("-v", "--verbose", action="store_true", help="log every step")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a uniform or adaptive study from a config file")
    r.add_argument("config")

    m = sub.add_parser("mesh", help="generate a mesh file")
    m.add_argument("kind", choices=["square", "crossed", "lshape", "voronoi"])
    m.add_argument("n", type=int, help="cells per side, or seed count for voronoi")
    m.add_argument("-o", "--output", required=True)
    m.add_argument("--lloyd", type=int, default=0, help="Lloyd iterations (voronoi)")
    m.add_argument("--seed", type=int, default=0, help="seed RNG (voronoi)")

    s = sub.add_parser("sweep", help="repeat a study over stabilization multipliers")
    s.add_argument("config")
    s.add_argument("--alphas", required=True, type=parse_alphas,
                   help="comma separated list, e.g. 1/256,1/64,1/4,1,4,64,256")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "mesh":
            if args.kind == "voronoi":
                mesh = generate_voronoi(args.n, lloyd_iters=args.lloyd, rng_seed=args.seed)
            else:
                mesh = generate_structured(args.kind, args.n)
            save_mesh(mesh, args.output)
            print(f"wrote {args.output}: {mesh.num_vertices} vertices, {mesh.num_polygons} polygons")
        elif args.command == "run":
            history = run(load_config(args.config))
            last = history[-1]
            print(f"{len(history)} steps, ndofs={last.ndofs}, lambda={last.lam:.12g}, "
                  f"eta2={last.eta2:.6g}")
        else:
            cfg = load_config(args.config)
            for alpha, history in sweep(cfg, args.alphas).items():
                print(f"alpha={alpha:.6g}: {len(history)} steps, lambda={history[-1].lam:.12g}")
    except ConfigError as exc:
        print(f"platevem: {exc}", file=sys.stderr)
        return 2
    except (StudyError, SolverError, MeshError, ValueError, OSError) as exc:
        print(f"platevem: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
