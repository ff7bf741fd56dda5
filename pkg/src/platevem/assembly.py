"""Global DoF numbering, boundary conditions, assembly and the eigensolve."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .backend import ElementBatch, element_batch
from .mesh import Mesh

BOUNDARY_CONDITIONS = ("CP", "SSP", "none")
DENSE_LIMIT = 3000


class SolverError(RuntimeError):
    pass


@dataclass
class DofMap:
    """Global numbering ``3*v + {0: value, 1: d/dx, 2: d/dy}`` and the
    elimination of the essential boundary conditions.

    ``prolongation`` maps free coefficients to the full DoF vector. Under SSP
    the gradient of a vertex on a straight boundary run keeps only its normal
    component, so the corresponding column carries the unit normal.
    """

    bc: str
    num_vertices: int
    prolongation: sp.csr_matrix
    value_constrained: np.ndarray
    gradient_constraints: dict = field(default_factory=dict)

    @property
    def total_dofs(self) -> int:
        return 3 * self.num_vertices

    @property
    def num_free(self) -> int:
        return self.prolongation.shape[1]

    @property
    def num_constrained(self) -> int:
        return self.total_dofs - self.num_free

    def vertex_dofs(self, v: int) -> tuple[int, int, int]:
        return (3 * v, 3 * v + 1, 3 * v + 2)

    def expand(self, u_free) -> np.ndarray:
        """Full DoF vector (constrained entries re-expanded) from free values."""
        return self.prolongation @ np.asarray(u_free)


def _unit_normal(t):
    n = np.array([-t[1], t[0]])
    return n if n[np.argmax(np.abs(n))] > 0 else -n


def build_dof_map(mesh: Mesh, bc: str = "CP") -> DofMap:
    if bc not in BOUNDARY_CONDITIONS:
        raise ValueError(f"unknown boundary condition {bc!r}; expected one of {BOUNDARY_CONDITIONS}")
    nv = mesh.num_vertices
    bflags = mesh.boundary_vertex_flags if bc != "none" else np.zeros(nv, dtype=bool)
    if bc != "none" and not bflags.any():
        raise ValueError("mesh has no boundary vertices; cannot impose boundary conditions")

    tangents = {v: [] for v in np.flatnonzero(bflags)}
    if bc == "SSP":
        for a, b in mesh.edges[mesh.boundary_edge_mask]:
            t = mesh.vertices[b] - mesh.vertices[a]
            t = t / np.linalg.norm(t)
            tangents[a].append(t)
            tangents[b].append(t)

    rows, cols, vals = [], [], []
    grad_constraints = {}
    col = 0

    def add(entries):
        nonlocal col
        for r, v in entries:
            rows.append(r)
            cols.append(col)
            vals.append(v)
        col += 1

    for v in range(nv):
        if not bflags[v]:
            add([(3 * v, 1.0)])
            add([(3 * v + 1, 1.0)])
            add([(3 * v + 2, 1.0)])
            continue
        if bc == "CP":
            grad_constraints[v] = np.eye(2)
            continue
        # SSP: value fixed, tangential derivative(s) fixed
        ts = []
        for t in tangents[v]:
            if all(abs(s[0] * t[1] - s[1] * t[0]) > 1e-10 for s in ts):
                ts.append(t)
        grad_constraints[v] = np.array(ts)
        if len(ts) == 1:
            n = _unit_normal(ts[0])
            add([(3 * v + 1, n[0]), (3 * v + 2, n[1])])
    P = sp.csr_matrix((vals, (rows, cols)), shape=(3 * nv, col))
    P.eliminate_zeros()
    return DofMap(bc, nv, P, bflags.copy(), grad_constraints)


def assemble_full(mesh: Mesh, batch: ElementBatch):
    """Unconstrained global stiffness and mass matrices (3V x 3V, CSR)."""
    rows, cols = batch.coo_indices()
    n = 3 * mesh.num_vertices
    A = sp.csr_matrix((batch.A, (rows, cols)), shape=(n, n))
    B = sp.csr_matrix((batch.M, (rows, cols)), shape=(n, n))
    return A, B


def assemble(mesh: Mesh, dof_map: DofMap, alpha_delta: float = 1.0, alpha_0: float = 1.0,
             batch: ElementBatch | None = None):
    """Stiffness ``A`` and mass ``B`` restricted to the free DoFs."""
    if batch is None:
        batch = element_batch(mesh, alpha_delta, alpha_0)
    A, B = assemble_full(mesh, batch)
    P = dof_map.prolongation
    A = (P.T @ A @ P).tocsr()
    B = (P.T @ B @ P).tocsr()
    return ((A + A.T) * 0.5).tocsr(), ((B + B.T) * 0.5).tocsr()


@dataclass
class EigenSolution:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    method: str

    def __len__(self):
        return len(self.values)

    def clusters(self, rtol: float = 1e-6) -> list[list[int]]:
        return cluster_eigenvalues(self.values, rtol)


def cluster_eigenvalues(values, rtol: float = 1e-6) -> list[list[int]]:
    """Group sorted eigenvalues whose consecutive relative gap is below ``rtol``."""
    groups = []
    for i, lam in enumerate(values):
        if groups and abs(lam - values[groups[-1][-1]]) <= rtol * abs(lam):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def cluster_representatives(values, rtol: float = 1e-6) -> np.ndarray:
    values = np.asarray(values)
    return np.array([values[g].mean() for g in cluster_eigenvalues(values, rtol)])


def _rayleigh_ritz(A, B, V):
    Ar = V.T @ (A @ V)
    Br = V.T @ (B @ V)
    w, y = sla.eigh(0.5 * (Ar + Ar.T), 0.5 * (Br + Br.T))
    return w, V @ y


def _shift_invert(A, B, k, tol, max_refine=40):
    """Shift-invert Lanczos at 0 on a block of ``k + 3`` vectors, then
    subspace iteration with the same factorization until the ``k`` wanted
    residuals reach ``tol``."""
    n = A.shape[0]
    block = min(n - 1, k + 3)
    try:
        # A is SPD: no pivoting, symmetric ordering keeps the fill low
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SolverError(f"stiffness factorization failed: {exc}") from exc

    def solve(b):
        # two steps of iterative refinement push the backward error to round-off
        x = lu.solve(b)
        for _ in range(2):
            x = x + lu.solve(b - A @ x)
        return x

    op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    v0 = np.random.default_rng(0).standard_normal(n)
    try:
        _, V = spla.eigsh(A, k=block, M=B, sigma=0.0, which="LM", OPinv=op, v0=v0,
                          ncv=min(n, max(2 * block + 1, 20)), tol=0.0,
                          maxiter=max(1000, 100 * block))
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        raise SolverError(f"shift-invert iteration did not converge: {exc}") from exc
    values, V = _rayleigh_ritz(A, B, V)
    for _ in range(max_refine):
        wanted = (values[:k], V[:, :k])
        if np.all(relative_residuals(A, B, *wanted) <= np.maximum(tol, residual_floor(A, B, *wanted))):
            break
        V = solve(np.asarray(B @ V))
        V, _ = np.linalg.qr(V)
        values, V = _rayleigh_ritz(A, B, V)
    return values[:k], V[:, :k]


def residual_floor(A, B, values, vectors) -> np.ndarray:
    """Round-off level of :func:`relative_residuals` for the given pairs."""
    eps = np.finfo(float).eps
    U = np.abs(vectors)
    num = np.linalg.norm(abs(A) @ U, axis=0) + np.abs(values) * np.linalg.norm(abs(B) @ U, axis=0)
    return eps * num / (np.abs(values) * np.linalg.norm(B @ vectors, axis=0))


def relative_residuals(A, B, values, vectors) -> np.ndarray:
    AU = A @ vectors
    BU = B @ vectors
    return (np.linalg.norm(AU - BU * values, axis=0)
            / (np.abs(values) * np.linalg.norm(BU, axis=0)))


def solve_eigen(A, B, k: int = 1, tol: float = 1e-9, method: str = "auto") -> EigenSolution:
    """Smallest ``k`` eigenpairs of ``A u = lambda B u``, B-orthonormal."""
    n = A.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must satisfy 1 <= k <= dim={n}")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT or k >= n - 1 else "shift-invert"
    if method == "dense":
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        Bd = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
        try:
            values, vectors = sla.eigh(Ad, Bd, subset_by_index=[0, k - 1])
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"mass matrix factorization failed: {exc}") from exc
    elif method == "shift-invert":
        values, vectors = _shift_invert(sp.csc_matrix(A), sp.csc_matrix(B), k, tol)
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")
    order = np.argsort(values)
    values, vectors = values[order], vectors[:, order]
    # sign convention: largest-magnitude entry positive
    idx = np.argmax(np.abs(vectors), axis=0)
    vectors = vectors * np.sign(vectors[idx, np.arange(vectors.shape[1])])
    res = relative_residuals(A, B, values, vectors)
    if np.any(values <= 0):
        raise SolverError("non-positive eigenvalue; stiffness matrix is not definite")
    # tolerance below the round-off floor of the residual is not attainable
    limit = np.maximum(tol, residual_floor(A, B, values, vectors))
    if np.any(res > limit):
        i = int(np.argmax(res - limit))
        raise SolverError(f"eigen residual {res[i]:.3e} exceeds tolerance {limit[i]:.1e}")
    return EigenSolution(values, vectors, res, method)
