"""Lowest-order C1 virtual element operators on a single polygon.

Local DoFs per vertex are ``[v, dv/dx, dv/dy]`` in the order of the vertex
cycle. Polynomials are expanded in the scaled monomials
``[1, xi, eta, xi^2, xi*eta, eta^2]`` with ``xi = (x - xc) / h``,
``eta = (y - yc) / h`` where ``(xc, yc)`` is the area centroid and ``h``
the polygon diameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import ElementGeometry

# 3-point Gauss-Legendre on [0, 1]
GAUSS_POINTS = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
GAUSS_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

# degree-4 triangle rule (Dunavant, 6 points), barycentric (a, a, 1 - 2a)
_TRI_A = (0.44594849091596488631832925388305, 0.091576213509770743459571463402202)
_TRI_W = (0.22338158967801146569500700843312, 0.10995174365532186763832632490021)
TRIANGLE_POINTS = np.array(
    [[a, a, 1 - 2 * a] for a in _TRI_A]
    + [[a, 1 - 2 * a, a] for a in _TRI_A]
    + [[1 - 2 * a, a, a] for a in _TRI_A])
TRIANGLE_WEIGHTS = np.array(list(_TRI_W) * 3)

# Hessians of the quadratic monomials, times h^2
_MONO_HESS = {3: np.array([[2.0, 0.0], [0.0, 0.0]]),
              4: np.array([[0.0, 1.0], [1.0, 0.0]]),
              5: np.array([[0.0, 0.0], [0.0, 2.0]])}


class ElementError(ArithmeticError):
    """Raised when a local VEM system cannot be formed."""


def monomials(xy, centroid, h) -> np.ndarray:
    """Values of the 6 scaled monomials at points ``xy`` -> (P, 6)."""
    s = (np.atleast_2d(xy) - centroid) / h
    xi, eta = s[:, 0], s[:, 1]
    one = np.ones_like(xi)
    return np.column_stack([one, xi, eta, xi * xi, xi * eta, eta * eta])


def monomial_dofs(geom: ElementGeometry) -> np.ndarray:
    """Matrix D (3N x 6): local DoFs of each scaled monomial."""
    xy, h = geom.vertices, geom.diameter
    s = (xy - geom.centroid) / h
    xi, eta = s[:, 0], s[:, 1]
    n = len(xy)
    D = np.zeros((3 * n, 6))
    D[0::3] = monomials(xy, geom.centroid, h)
    D[1::3, 1] = 1.0 / h
    D[1::3, 3] = 2.0 * xi / h
    D[1::3, 4] = eta / h
    D[2::3, 2] = 1.0 / h
    D[2::3, 4] = xi / h
    D[2::3, 5] = 2.0 * eta / h
    return D


def _hermite(s):
    return (2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s, -2 * s**3 + 3 * s**2, s**3 - s**2)


def projector_rhs(geom: ElementGeometry) -> np.ndarray:
    """Right-hand side B (6 x 3N) of the projector system.

    Rows 0..2: boundary moments ``int_{dK} v p1`` of the cubic Hermite edge
    traces. Rows 3..5: ``int_K hess(m) : hess(v)`` written as boundary
    integrals of ``(hess(m) n) . grad v``.
    """
    xy, h = geom.vertices, geom.diameter
    n = len(xy)
    B = np.zeros((6, 3 * n))
    h00, h10, h01, h11 = _hermite(GAUSS_POINTS)
    for i in range(n):
        j = (i + 1) % n
        L, t, nrm = geom.lengths[i], geom.tangents[i], geom.normals[i]
        pts = xy[i] + GAUSS_POINTS[:, None] * (xy[j] - xy[i])
        p1 = monomials(pts, geom.centroid, h)[:, :3] * (L * GAUSS_WEIGHTS)[:, None]
        # v(s) = h00 v_i + h10 L t.grad v_i + h01 v_j + h11 L t.grad v_j
        B[:3, 3 * i] += p1.T @ h00
        B[:3, 3 * i + 1:3 * i + 3] += np.outer(p1.T @ h10, L * t)
        B[:3, 3 * j] += p1.T @ h01
        B[:3, 3 * j + 1:3 * j + 3] += np.outer(p1.T @ h11, L * t)
        for a, H in _MONO_HESS.items():
            H = H / h**2
            c_n = nrm @ H @ nrm
            c_t = t @ H @ nrm
            B[a, 3 * i + 1:3 * i + 3] += 0.5 * L * c_n * nrm
            B[a, 3 * j + 1:3 * j + 3] += 0.5 * L * c_n * nrm
            B[a, 3 * j] += c_t
            B[a, 3 * i] -= c_t
    return B


def hessian_gram(geom: ElementGeometry) -> np.ndarray:
    """``int_K hess(m_a) : hess(m_b)`` for the scaled monomials."""
    G = np.zeros((6, 6))
    G[3, 3] = G[5, 5] = 4.0
    G[4, 4] = 2.0
    return G * geom.area / geom.diameter**4


def monomial_mass(geom: ElementGeometry) -> np.ndarray:
    """``int_K m_a m_b`` by centroid fan triangulation and a degree-4 rule."""
    xy, c = geom.vertices, geom.centroid
    n = len(xy)
    H = np.zeros((6, 6))
    for i in range(n):
        p, q = xy[i], xy[(i + 1) % n]
        area = 0.5 * ((p[0] - c[0]) * (q[1] - c[1]) - (q[0] - c[0]) * (p[1] - c[1]))
        pts = TRIANGLE_POINTS @ np.array([p, q, c])
        m = monomials(pts, c, geom.diameter)
        H += area * (m.T * TRIANGLE_WEIGHTS) @ m
    return H


def projector_pi_delta(geom: ElementGeometry, element_id: int | None = None):
    """Return ``(pi_star, D)``: monomial coefficients of the projection and
    the DoFs of the monomials."""
    D = monomial_dofs(geom)
    B = projector_rhs(geom)
    G = B @ D
    try:
        pi_star = np.linalg.solve(G, B)
    except np.linalg.LinAlgError as exc:
        where = "" if element_id is None else f" on element {element_id}"
        raise ElementError(f"singular projector system{where}") from exc
    if not np.all(np.isfinite(pi_star)):
        where = "" if element_id is None else f" on element {element_id}"
        raise ElementError(f"singular projector system{where}")
    return pi_star, D


def _stabilization(D, pi_star, weights):
    P = np.eye(D.shape[0]) - D @ pi_star
    return P.T @ (weights[:, None] * P)


def stiffness_weights(h: float, n: int) -> np.ndarray:
    return np.tile([h**-2, 1.0, 1.0], n)


def mass_weights(h: float, n: int) -> np.ndarray:
    return np.tile([h**2, h**4, h**4], n)


def local_stiffness(geom: ElementGeometry, alpha_delta: float = 1.0, projector=None):
    """Return ``(A_K, stab_A)`` with ``A_K = consistency + alpha_delta * stab_A``."""
    pi_star, D = projector if projector is not None else projector_pi_delta(geom)
    stab = _stabilization(D, pi_star, stiffness_weights(geom.diameter, len(geom.vertices)))
    A = pi_star.T @ hessian_gram(geom) @ pi_star + alpha_delta * stab
    return 0.5 * (A + A.T), stab


def local_mass(geom: ElementGeometry, alpha_0: float = 1.0, projector=None):
    """Return ``(M_K, stab_M)``; the L2 projection coincides with the
    Hessian projection at lowest order."""
    pi_star, D = projector if projector is not None else projector_pi_delta(geom)
    stab = _stabilization(D, pi_star, mass_weights(geom.diameter, len(geom.vertices)))
    M = pi_star.T @ monomial_mass(geom) @ pi_star + alpha_0 * stab
    return 0.5 * (M + M.T), stab


def projected_hessian(pi_star: np.ndarray, geom: ElementGeometry, local_dofs) -> np.ndarray:
    """Constant Hessian of the projection of ``local_dofs`` (physical units)."""
    c = pi_star @ np.asarray(local_dofs, dtype=float)
    return hessian_from_coefficients(c, geom.diameter)


def hessian_from_coefficients(c, h) -> np.ndarray:
    return np.array([[2.0 * c[3], c[4]], [c[4], 2.0 * c[5]]]) / h**2


@dataclass(frozen=True)
class ElementOperators:
    geom: ElementGeometry
    pi_star: np.ndarray
    D: np.ndarray
    A: np.ndarray
    M: np.ndarray
    stab_A: np.ndarray
    stab_M: np.ndarray
    hess_gram: np.ndarray
    mono_mass: np.ndarray


def element_operators(xy, alpha_delta: float = 1.0, alpha_0: float = 1.0,
                      element_id: int | None = None) -> ElementOperators:
    geom = xy if isinstance(xy, ElementGeometry) else ElementGeometry.from_vertices(xy)
    proj = projector_pi_delta(geom, element_id)
    A, sA = local_stiffness(geom, alpha_delta, proj)
    M, sM = local_mass(geom, alpha_0, proj)
    return ElementOperators(geom, proj[0], proj[1], A, M, sA, sM,
                            hessian_gram(geom), monomial_mass(geom))


def polynomial_dofs(coeffs_global, xy) -> np.ndarray:
    """DoFs of ``p(x, y) = c0 + c1 x + c2 y + c3 x^2 + c4 x y + c5 y^2`` at ``xy``."""
    c = np.asarray(coeffs_global, dtype=float)
    xy = np.atleast_2d(xy)
    x, y = xy[:, 0], xy[:, 1]
    out = np.empty(3 * len(xy))
    out[0::3] = c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
    out[1::3] = c[1] + 2 * c[3] * x + c[4] * y
    out[2::3] = c[2] + c[4] * x + 2 * c[5] * y
    return out
