"""Selection of the element kernel backend.

The compiled ``platevem._kernel`` extension is used when importable; the
pure-Python ``platevem._fallback`` otherwise, or when the environment
variable ``PLATEVEM_PURE_PYTHON`` is set to a non-empty value other than 0.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _fallback

try:
    from . import _kernel
except ImportError:  # extension not built
    _kernel = None

BACKENDS = {"python": _fallback}
if _kernel is not None:
    BACKENDS["compiled"] = _kernel


def _default_backend() -> str:
    if os.environ.get("PLATEVEM_PURE_PYTHON", "0") not in ("", "0"):
        return "python"
    return "compiled" if _kernel is not None else "python"


DEFAULT_BACKEND = _default_backend()


def get_backend(name: str | None = None):
    name = name or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def num_threads() -> int:
    try:
        return max(1, int(os.environ.get("PLATEVEM_THREADS", "0")) or os.cpu_count() or 1)
    except ValueError:
        return 1


@dataclass
class ElementBatch:
    """Local operators of every polygon of a mesh, stored flat.

    Local matrices of element ``e`` are the row-major slices
    ``[mat_ptr[e]:mat_ptr[e+1]]``; the projector is ``[pi_ptr[e]:pi_ptr[e+1]]``
    reshaped to 6 x 3N, and ``dmat`` (3N x 6) shares that layout.
    """

    poly_idx: np.ndarray
    ptr: np.ndarray
    mat_ptr: np.ndarray
    pi_ptr: np.ndarray
    A: np.ndarray
    M: np.ndarray
    stab_a: np.ndarray
    stab_m: np.ndarray
    pi: np.ndarray
    dmat: np.ndarray
    hmass: np.ndarray
    h: np.ndarray
    area: np.ndarray
    centroid: np.ndarray
    alpha_delta: float
    alpha_0: float
    backend: str

    def ndofs(self, e: int) -> int:
        return 3 * int(self.ptr[e + 1] - self.ptr[e])

    def _mat(self, data, e):
        n = self.ndofs(e)
        return data[self.mat_ptr[e]:self.mat_ptr[e + 1]].reshape(n, n)

    def stiffness(self, e):
        return self._mat(self.A, e)

    def mass(self, e):
        return self._mat(self.M, e)

    def stab_stiffness(self, e):
        return self._mat(self.stab_a, e)

    def stab_mass(self, e):
        return self._mat(self.stab_m, e)

    def pi_star(self, e):
        return self.pi[self.pi_ptr[e]:self.pi_ptr[e + 1]].reshape(6, self.ndofs(e))

    def local_dofs(self, e, u_full):
        verts = self.poly_idx[self.ptr[e]:self.ptr[e + 1]]
        return np.asarray(u_full).reshape(-1, 3)[verts].ravel()

    def coo_indices(self):
        return get_backend(self.backend).coo_indices(self.poly_idx, self.ptr)

    def residuals(self, u_full):
        """Per-element projection coefficients, ``s^Delta``, ``s^0`` and
        ``||Pi u||^2_{0,K}`` for the full DoF vector ``u_full``."""
        u = np.ascontiguousarray(u_full, dtype=float)
        return get_backend(self.backend).element_residuals(
            self.pi, self.dmat, self.pi_ptr, self.h, self.hmass, self.poly_idx, self.ptr, u)


def element_batch(mesh, alpha_delta: float = 1.0, alpha_0: float = 1.0,
                  backend: str | None = None) -> ElementBatch:
    name = backend or DEFAULT_BACKEND
    poly_idx, ptr = mesh.flat_polygons()
    verts = np.ascontiguousarray(mesh.vertices, dtype=float)
    out = get_backend(name).element_batch(verts, poly_idx, ptr, float(alpha_delta),
                                          float(alpha_0), num_threads())
    return ElementBatch(poly_idx=poly_idx, ptr=ptr, alpha_delta=float(alpha_delta),
                        alpha_0=float(alpha_0), backend=name,
                        **{k: np.asarray(v) for k, v in out.items()})
