"""SOLVE -> ESTIMATE -> MARK -> REFINE loop and refinement studies."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .assembly import assemble, build_dof_map, cluster_eigenvalues, solve_eigen
from .backend import element_batch
from .estimator import EstimatorBreakdown, convergence_rate, dorfler_mark, effectivity, estimate
from .mesh import Mesh, refine

log = logging.getLogger(__name__)


class StudyError(RuntimeError):
    """A solve or estimate failed inside a refinement study."""


@dataclass
class StepRecord:
    step: int
    ndofs: int
    hmax: float
    num_elements: int
    eigenvalues: np.ndarray
    tracked: int
    eta2_modes: np.ndarray
    breakdown: EstimatorBreakdown = field(repr=False)
    errors: Optional[np.ndarray] = None
    mesh: Optional[Mesh] = field(default=None, repr=False)
    u_full: Optional[np.ndarray] = field(default=None, repr=False)
    marked: Optional[set] = field(default=None, repr=False)

    @property
    def lam(self) -> float:
        return float(self.eigenvalues[self.tracked])

    @property
    def eta2(self) -> float:
        return self.breakdown.totals()[0]

    @property
    def error(self) -> Optional[float]:
        if self.errors is None or self.tracked >= len(self.errors):
            return None
        return float(self.errors[self.tracked])

    def totals(self):
        return self.breakdown.totals()

    def effectivities(self) -> list:
        if self.errors is None:
            return [None] * len(self.eigenvalues)
        out = []
        for i, err in enumerate(self.errors):
            out.append(None if not np.isfinite(err) or err < 1e-14 * self.eigenvalues[i]
                       else self.eta2_modes[i] / err)
        return out


@dataclass
class StudyHistory:
    steps: list = field(default_factory=list)
    exact: Optional[np.ndarray] = None
    num_eigs: int = 1

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, j):
        return self.steps[j]

    @property
    def ndofs(self) -> np.ndarray:
        return np.array([s.ndofs for s in self.steps])

    @property
    def lam(self) -> np.ndarray:
        return np.array([s.lam for s in self.steps])

    @property
    def eta2(self) -> np.ndarray:
        return np.array([s.eta2 for s in self.steps])

    @property
    def errors(self) -> np.ndarray:
        return np.array([np.nan if s.error is None else s.error for s in self.steps])

    @property
    def effectivity(self) -> np.ndarray:
        return np.array([np.nan if (e := s.error) is None or e == 0 else s.eta2 / e
                         for s in self.steps])

    def rates(self, values) -> np.ndarray:
        """Rates ``r_{j+1}`` (NaN for j = 0), aligned with the steps."""
        out = np.full(len(self.steps), np.nan)
        if len(self.steps) > 1:
            out[1:] = convergence_rate(values, self.ndofs)
        return out

    def error_rates(self) -> np.ndarray:
        return self.rates(self.errors)

    def eta2_rates(self) -> np.ndarray:
        return self.rates(self.eta2)


def _errors(values, exact):
    if exact is None:
        return None
    exact = np.asarray(exact, dtype=float)
    reps = np.array(values, dtype=float)
    for group in cluster_eigenvalues(values):
        reps[group] = np.mean(np.asarray(values)[group])
    errs = np.full(len(values), np.nan)
    m = min(len(values), len(exact))
    errs[:m] = np.abs(reps[:m] - exact[:m])
    return errs


def solve_and_estimate(mesh: Mesh, bc: str, k: int, alpha_delta: float, alpha_0: float,
                       step: int, tracked_value: Optional[float], target: int = 0,
                       exact=None, keep: bool = False) -> StepRecord:
    dof_map = build_dof_map(mesh, bc)
    batch = element_batch(mesh, alpha_delta, alpha_0)
    A, B = assemble(mesh, dof_map, batch=batch)
    sol = solve_eigen(A, B, min(max(k, target + 1), dof_map.num_free))
    if tracked_value is None:
        tracked = target
    else:
        tracked = int(np.argmin(np.abs(sol.values - tracked_value)))
    eta_modes = np.empty(len(sol.values))
    tracked_breakdown = None
    tracked_u = None
    for i, lam in enumerate(sol.values):
        u = dof_map.expand(sol.vectors[:, i])
        br = estimate(mesh, batch, lam, u)
        eta_modes[i] = br.total
        if i == tracked:
            tracked_breakdown, tracked_u = br, u
    return StepRecord(step=step, ndofs=dof_map.num_free, hmax=mesh.h,
                      num_elements=mesh.num_polygons, eigenvalues=sol.values,
                      tracked=tracked, eta2_modes=eta_modes, breakdown=tracked_breakdown,
                      errors=_errors(sol.values, exact), mesh=mesh if keep else None,
                      u_full=tracked_u if keep else None)


def adaptive_loop(mesh0: Mesh, bc: str = "CP", k: int = 1, delta: float = 0.5,
                  alpha_delta: float = 1.0, alpha_0: float = 1.0, max_steps: int = 10,
                  max_dofs: int = 30000, exact=None, target: int = 0,
                  keep_meshes: bool = False,
                  callback: Callable[[StepRecord], None] | None = None) -> StudyHistory:
    """Adaptive refinement driven by the estimator of the tracked eigenpair.

    ``max_steps`` counts refinements; the loop also stops before solving on
    a mesh with more than ``max_dofs`` free DoFs.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    history = StudyHistory(exact=None if exact is None else np.asarray(exact, float), num_eigs=k)
    mesh = mesh0
    tracked_value = None
    for step in range(max_steps + 1):
        try:
            rec = solve_and_estimate(mesh, bc, k, alpha_delta, alpha_0, step, tracked_value,
                                     target, exact, keep=keep_meshes)
        except Exception as exc:
            raise StudyError(f"step {step}: {exc}") from exc
        tracked_value = rec.lam
        log.info("step %d: ndofs=%d lambda=%.10g eta2=%.4e", step, rec.ndofs, rec.lam, rec.eta2)
        if step == max_steps:
            history.steps.append(rec)
            if callback:
                callback(rec)
            break
        marked = dorfler_mark(rec.breakdown.eta2, delta)
        rec.marked = marked
        history.steps.append(rec)
        if callback:
            callback(rec)
        if not marked:
            break
        new_mesh = refine(mesh, marked)
        if 3 * new_mesh.num_vertices > max_dofs and build_dof_map(new_mesh, bc).num_free > max_dofs:
            break
        mesh = new_mesh
    return history


def mesh_sequence_study(meshes: Iterable[Mesh], bc: str = "CP", k: int = 1,
                        alpha_delta: float = 1.0, alpha_0: float = 1.0, exact=None,
                        target: int = 0, keep_meshes: bool = False) -> StudyHistory:
    """Solve and estimate on a given sequence of meshes (uniform studies)."""
    history = StudyHistory(exact=None if exact is None else np.asarray(exact, float), num_eigs=k)
    tracked_value = None
    for step, mesh in enumerate(meshes):
        try:
            rec = solve_and_estimate(mesh, bc, k, alpha_delta, alpha_0, step, tracked_value,
                                     target, exact, keep=keep_meshes)
        except Exception as exc:
            raise StudyError(f"step {step}: {exc}") from exc
        tracked_value = rec.lam
        history.steps.append(rec)
    return history
