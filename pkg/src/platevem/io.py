"""Run configuration, convergence tables and snapshot export."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .adapt import StudyHistory
from .mesh import Mesh

NA = "NA"
PROBLEMS = ("CP", "SSP")
MODES = ("uniform", "adaptive")
GEOMETRIES = ("square", "crossed", "lshape", "voronoi")


class ConfigError(ValueError):
    """Invalid run configuration; ``problems`` lists every offending field."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class RunConfig:
    problem: str = "CP"
    geometry: str = "square"
    n: int = 4
    mode: str = "uniform"
    num_eigs: int = 1
    dorfler_delta: float = 0.5
    alpha_delta: float = 1.0
    alpha_0: float = 1.0
    max_steps: int = 4
    max_dofs: int = 30000
    exact_eigenvalues: Optional[list] = None
    output_dir: str = "output"
    rng_seed: int = 0
    lloyd_iters: int = 0
    target: int = 0

    @property
    def mesh_file(self) -> Optional[str]:
        return self.geometry[5:] if self.geometry.startswith("file:") else None

    def validate(self) -> "RunConfig":
        bad = []
        if self.problem not in PROBLEMS:
            bad.append(f"problem: {self.problem!r} not in {PROBLEMS}")
        if self.mode not in MODES:
            bad.append(f"mode: {self.mode!r} not in {MODES}")
        if self.mesh_file is None and self.geometry not in GEOMETRIES:
            bad.append(f"geometry: {self.geometry!r} not in {GEOMETRIES} or file:<path>")
        elif self.mesh_file == "":
            bad.append("geometry: empty mesh file path")
        for name in ("n", "num_eigs", "max_dofs", "max_steps"):
            if getattr(self, name) < 1:
                bad.append(f"{name}: must be positive, got {getattr(self, name)}")
        for name in ("rng_seed", "lloyd_iters", "target"):
            if getattr(self, name) < 0:
                bad.append(f"{name}: must be non-negative, got {getattr(self, name)}")
        if self.target >= self.num_eigs:
            bad.append(f"target: index {self.target} must be below num_eigs={self.num_eigs}")
        if self.geometry == "lshape" and self.n % 2:
            bad.append(f"n: lshape needs an even subdivision, got {self.n}")
        if not 0.0 <= self.dorfler_delta <= 1.0:
            bad.append(f"dorfler_delta: must lie in [0, 1], got {self.dorfler_delta}")
        for name in ("alpha_delta", "alpha_0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                bad.append(f"{name}: must be positive and finite, got {v}")
        if self.exact_eigenvalues is not None and any(
                not (math.isfinite(v) and v > 0) for v in self.exact_eigenvalues):
            bad.append(f"exact_eigenvalues: must be positive, got {self.exact_eigenvalues}")
        if not self.output_dir:
            bad.append("output_dir: must be non-empty")
        if bad:
            raise ConfigError(bad)
        return self


def _convert(name: str, kind: str, raw: str):
    if name == "exact_eigenvalues":
        if raw.strip().lower() in ("", "none", "na"):
            return None
        return [float(eval_number(t)) for t in raw.replace(",", " ").split()]
    if kind == "float":
        return float(eval_number(raw))
    if kind == "int":
        return int(raw)
    return raw


_SAFE_NAMES = {"pi": math.pi}


def eval_number(text: str) -> float:
    """Parse a float, also accepting simple expressions such as ``4*pi**4`` or ``1/64``."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    import ast
    import operator as op

    ops = {ast.Add: op.add, ast.Sub: op.sub, ast.Mult: op.mul, ast.Div: op.truediv,
           ast.Pow: op.pow, ast.USub: op.neg, ast.UAdd: op.pos}

    def ev(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id in _SAFE_NAMES:
            return _SAFE_NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in ops:
            return ops[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in ops:
            return ops[type(node.op)](ev(node.operand))
        raise ValueError(f"not a number: {text!r}")

    try:
        return float(ev(ast.parse(text, mode="eval").body))
    except SyntaxError:
        raise ValueError(f"not a number: {text!r}") from None


def parse_config_text(text: str) -> RunConfig:
    """Parse flat ``key = value`` lines (``#`` starts a comment)."""
    kinds = {f.name: type(f.default).__name__ for f in fields(RunConfig)}
    values, bad = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            bad.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            bad.append(f"{key}: unknown field")
            continue
        try:
            values[key] = _convert(key, kinds[key], raw)
        except ValueError:
            bad.append(f"{key}: cannot parse {raw!r}")
    cfg = RunConfig(**values)
    try:
        cfg.validate()
    except ConfigError as exc:
        bad += exc.problems
    if bad:
        raise ConfigError(bad)
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            v = "none"
        elif isinstance(v, list):
            v = " ".join(_fmt(x) for x in v)
        elif isinstance(v, float):
            v = _fmt(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


# -- confined paths ---------------------------------------------------------------

def confined_path(output_dir, name) -> Path:
    """``output_dir / name``, refusing anything that resolves outside ``output_dir``."""
    root = Path(output_dir).resolve()
    path = (root / name).resolve()
    if path != root and root not in path.parents:
        raise ValueError(f"artifact path {name!r} escapes output directory {str(root)!r}")
    return path


# -- history table ----------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return NA
    x = float(x)
    if not math.isfinite(x):
        return NA
    return f"{x:.17g}"


def history_header(k: int) -> list[str]:
    cols = ["step", "ndofs", "hmax"]
    cols += [f"lambda_{i}" for i in range(1, k + 1)]
    cols += [f"err_{i}" for i in range(1, k + 1)]
    cols += ["eta2", "xi2", "j2", "s2"]
    cols += [f"eff_{i}" for i in range(1, k + 1)]
    cols += ["rate_err", "rate_eta2"]
    return cols


def history_rows(history: StudyHistory) -> list[list[str]]:
    k = history.num_eigs
    has_exact = history.exact is not None
    rate_eta = history.eta2_rates() if len(history) > 1 else np.full(len(history), np.nan)
    rate_err = rate_eta
    if has_exact and len(history) > 1:
        errs = history.errors
        if np.all(np.isfinite(errs)) and np.all(errs > 0):
            rate_err = history.error_rates()
        else:
            rate_err = np.full(len(history), np.nan)
    rows = []
    for j, s in enumerate(history.steps):
        lam = list(s.eigenvalues[:k]) + [None] * (k - min(k, len(s.eigenvalues)))
        errs = [None] * k
        if s.errors is not None:
            errs = [s.errors[i] if i < len(s.errors) else None for i in range(k)]
        effs = (s.effectivities() + [None] * k)[:k]
        eta2, xi2, j2, s2 = s.totals()
        row = [str(s.step), str(s.ndofs), _fmt(s.hmax)]
        row += [_fmt(v) for v in lam] + [_fmt(v) for v in errs]
        row += [_fmt(eta2), _fmt(xi2), _fmt(j2), _fmt(s2)]
        row += [_fmt(v) for v in effs]
        row += [_fmt(rate_err[j]), _fmt(rate_eta[j])]
        rows.append(row)
    return rows


def write_history_csv(history: StudyHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(history_header(history.num_eigs))
        w.writerows(history_rows(history))


def read_history_csv(path) -> tuple[list[str], list[dict]]:
    """Header and rows with NA mapped to ``None`` and numbers to float/int."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for raw in reader:
            row = {}
            for key, cell in zip(header, raw):
                if cell == NA:
                    row[key] = None
                elif key in ("step", "ndofs"):
                    row[key] = int(cell)
                else:
                    row[key] = float(cell)
            rows.append(row)
    return header, rows


# -- snapshots --------------------------------------------------------------------

def export_snapshot(mesh: Mesh, u_full, path, title: str = "platevem eigenfunction") -> None:
    """Legacy VTK POLYDATA: z = value DoF, faces = polygons, point scalars = value DoF."""
    nv = mesh.num_vertices
    if u_full is None:
        values = np.zeros(nv)
    else:
        u = np.asarray(u_full, dtype=float).ravel()
        if u.size != 3 * nv:
            raise ValueError(f"expected {3 * nv} DoFs, got {u.size}")
        values = u[0::3]
    polys = mesh.polygons
    size = sum(len(p) + 1 for p in polys)
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
           "DATASET POLYDATA", f"POINTS {nv} double"]
    out += [f"{x:.17g} {y:.17g} {z:.17g}" for (x, y), z in zip(mesh.vertices, values)]
    out.append(f"POLYGONS {len(polys)} {size}")
    out += [" ".join(map(str, (len(p),) + tuple(p))) for p in polys]
    out += [f"POINT_DATA {nv}", "SCALARS u double 1", "LOOKUP_TABLE default"]
    out += [f"{z:.17g}" for z in values]
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def read_snapshot(path) -> tuple[np.ndarray, list[tuple[int, ...]], np.ndarray]:
    """Points (nv x 3), polygons and point scalars of a file written by ``export_snapshot``."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    i = next(j for j, ln in enumerate(lines) if ln.startswith("POINTS"))
    nv = int(lines[i].split()[1])
    pts = np.array([[float(t) for t in ln.split()] for ln in lines[i + 1:i + 1 + nv]])
    i += 1 + nv
    npoly = int(lines[i].split()[1])
    polys = [tuple(int(t) for t in ln.split()[1:]) for ln in lines[i + 1:i + 1 + npoly]]
    i += 1 + npoly + 3
    scalars = np.array([float(t) for t in lines[i:i + nv]])
    return pts, polys, scalars


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
