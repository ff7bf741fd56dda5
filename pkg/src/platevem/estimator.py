"""Residual a posteriori estimator, Doerfler marking and convergence metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import ElementBatch, element_batch
from .mesh import Mesh

UNDEFINED = None


@dataclass(frozen=True)
class EstimatorBreakdown:
    """Per-element squared indicators; ``eta2 = xi2 + j2 + s2`` elementwise."""

    xi2: np.ndarray
    j2: np.ndarray
    s2: np.ndarray

    @property
    def eta2(self) -> np.ndarray:
        return self.xi2 + self.j2 + self.s2

    def totals(self) -> tuple[float, float, float, float]:
        """Global ``(eta^2, Xi^2, J^2, S^2)``."""
        return global_estimator(np.column_stack([self.xi2, self.j2, self.s2, self.eta2]))

    @property
    def total(self) -> float:
        return self.totals()[0]


def projected_hessians(coeffs: np.ndarray, h: np.ndarray) -> np.ndarray:
    """(ne, 2, 2) constant Hessians of the element projections."""
    H = np.empty((len(coeffs), 2, 2))
    H[:, 0, 0] = 2.0 * coeffs[:, 3]
    H[:, 0, 1] = H[:, 1, 0] = coeffs[:, 4]
    H[:, 1, 1] = 2.0 * coeffs[:, 5]
    return H / (h**2)[:, None, None]


def edge_jumps(mesh: Mesh, hessians: np.ndarray) -> np.ndarray:
    """``J_l^2 = h_l^2 |[[H n]]|^2`` for every interior edge (zero on the boundary)."""
    edges = mesh.edges
    inc = mesh.edge_polygons
    interior = inc[:, 1] >= 0
    d = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    length = np.sqrt((d**2).sum(1))
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    jumps = np.zeros(len(edges))
    ia, ib = inc[interior, 0], inc[interior, 1]
    g = np.einsum("eij,ej->ei", hessians[ia] - hessians[ib], normal[interior])
    jumps[interior] = length[interior] ** 2 * (g**2).sum(1)
    return jumps


def estimate(mesh: Mesh, batch: ElementBatch, lam: float, u_full) -> EstimatorBreakdown:
    """Volume, jump and stabilization indicators of the eigenpair ``(lam, u_full)``.

    ``u_full`` is the full DoF vector (constrained entries zero), normalized
    in the discrete mass norm by the caller.
    """
    coeffs, sa, sm, l2 = batch.residuals(u_full)
    xi2 = batch.h**4 * lam**2 * np.maximum(l2, 0.0)
    s2 = batch.alpha_delta * np.maximum(sa, 0.0) + batch.alpha_0 * np.maximum(sm, 0.0)
    jumps = edge_jumps(mesh, projected_hessians(coeffs, batch.h))
    inc = mesh.edge_polygons
    j2 = np.bincount(inc[:, 0], weights=jumps, minlength=len(mesh))
    interior = inc[:, 1] >= 0
    j2 += np.bincount(inc[interior, 1], weights=jumps[interior], minlength=len(mesh))
    return EstimatorBreakdown(xi2, j2, s2)


def element_estimator(mesh: Mesh, element: int, lam: float, u_full,
                      batch: ElementBatch | None = None,
                      alpha_delta: float = 1.0, alpha_0: float = 1.0):
    """``(Xi_K^2, J_K^2, S_K^2, eta_K^2)`` of a single element."""
    if batch is None:
        batch = element_batch(mesh, alpha_delta, alpha_0)
    br = estimate(mesh, batch, lam, u_full)
    k = int(element)
    return float(br.xi2[k]), float(br.j2[k]), float(br.s2[k]), float(br.eta2[k])


def global_estimator(per_element) -> tuple[float, float, float, float]:
    """Sum rows ``(Xi^2, J^2, S^2, eta^2)`` into ``(eta^2, Xi^2, J^2, S^2)``."""
    arr = np.asarray(per_element, dtype=float).reshape(-1, 4)
    xi, j, s, eta = np.sum(arr, axis=0)  # numpy sums pairwise
    return float(eta), float(xi), float(j), float(s)


def dorfler_mark(eta2, delta: float = 0.5) -> set[int]:
    """Smallest prefix of the indicators sorted descending (ties by lower
    index) whose sum reaches ``delta`` times the total."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    eta2 = np.asarray(eta2, dtype=float)
    if np.any(eta2 < 0):
        raise ValueError("indicators must be non-negative")
    order = np.lexsort((np.arange(len(eta2)), -eta2))
    csum = np.cumsum(eta2[order])
    if len(csum) == 0 or delta * csum[-1] <= 0.0:
        return set()
    count = int(np.searchsorted(csum, delta * csum[-1], side="left")) + 1
    return {int(k) for k in order[:min(count, len(eta2))]}


def effectivity(eta2: float, lam_h: float, lam: float):
    """``eta^2 / |lam_h - lam|``; ``UNDEFINED`` when the error vanishes."""
    err = abs(lam_h - lam)
    if err < 1e-14 * abs(lam):
        return UNDEFINED
    return eta2 / err


def convergence_rate(values, dofs, d: int = 2) -> np.ndarray:
    """Experimental orders ``-d log(v_{j+1}/v_j) / log(N_{j+1}/N_j)``."""
    v = np.asarray(values, dtype=float)
    n = np.asarray(dofs, dtype=float)
    if len(v) != len(n):
        raise ValueError("values and dofs differ in length")
    if np.any(v <= 0) or np.any(n <= 0):
        raise ValueError("convergence_rate needs positive values and DoF counts")
    if np.any(np.diff(n) <= 0):
        raise ValueError("DoF counts must increase strictly")
    return -d * np.log(v[1:] / v[:-1]) / np.log(n[1:] / n[:-1])
