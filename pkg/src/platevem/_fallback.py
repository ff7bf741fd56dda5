"""Pure-Python implementation of the batched element kernels.

Mirrors the contract of the compiled ``_kernel`` module exactly; used when
the extension is not built or ``PLATEVEM_PURE_PYTHON`` is set.
"""

import numpy as np

from .element import ElementGeometry, element_operators


def element_batch(vertices, poly_idx, ptr, alpha_delta, alpha_0, num_threads=1):
    ne = len(ptr) - 1
    sizes = np.diff(ptr)
    mat_ptr = np.zeros(ne + 1, dtype=np.int64)
    np.cumsum((3 * sizes) ** 2, out=mat_ptr[1:])
    pi_ptr = np.zeros(ne + 1, dtype=np.int64)
    np.cumsum(18 * sizes, out=pi_ptr[1:])
    out = {
        "A": np.empty(mat_ptr[-1]), "M": np.empty(mat_ptr[-1]),
        "stab_a": np.empty(mat_ptr[-1]), "stab_m": np.empty(mat_ptr[-1]),
        "pi": np.empty(pi_ptr[-1]), "dmat": np.empty(pi_ptr[-1]), "hmass": np.empty((ne, 36)),
        "h": np.empty(ne), "area": np.empty(ne), "centroid": np.empty((ne, 2)),
        "mat_ptr": mat_ptr, "pi_ptr": pi_ptr,
    }
    for e in range(ne):
        xy = vertices[poly_idx[ptr[e]:ptr[e + 1]]]
        # degenerate polygons produce NaNs here; the projector check turns them into ElementError
        with np.errstate(all="ignore"):
            geom = ElementGeometry.from_vertices(xy)
            op = element_operators(geom, alpha_delta, alpha_0, element_id=e)
        m = slice(mat_ptr[e], mat_ptr[e + 1])
        out["A"][m] = op.A.ravel()
        out["M"][m] = op.M.ravel()
        out["stab_a"][m] = op.stab_A.ravel()
        out["stab_m"][m] = op.stab_M.ravel()
        out["pi"][pi_ptr[e]:pi_ptr[e + 1]] = op.pi_star.ravel()
        out["dmat"][pi_ptr[e]:pi_ptr[e + 1]] = op.D.ravel()
        out["hmass"][e] = op.mono_mass.ravel()
        out["h"][e] = geom.diameter
        out["area"][e] = geom.area
        out["centroid"][e] = geom.centroid
    return out


def element_residuals(pi, dmat, pi_ptr, h, hmass, poly_idx, ptr, u):
    """Per element: projection coefficients, both stabilization energies and
    the squared L2 norm of the projection.

    The energies are weighted sums of squares of ``u - D Pi u``, so they
    vanish exactly (not just to round-off) on polynomial data.
    """
    ne = len(ptr) - 1
    coeffs = np.empty((ne, 6))
    sa = np.empty(ne)
    sm = np.empty(ne)
    l2 = np.empty(ne)
    for e in range(ne):
        verts = poly_idx[ptr[e]:ptr[e + 1]]
        n = 3 * len(verts)
        loc = u.reshape(-1, 3)[verts].ravel()
        c = pi[pi_ptr[e]:pi_ptr[e + 1]].reshape(6, n) @ loc
        coeffs[e] = c
        r2 = ((loc - dmat[pi_ptr[e]:pi_ptr[e + 1]].reshape(n, 6) @ c) ** 2).reshape(-1, 3)
        h2 = h[e] ** 2
        sa[e] = r2[:, 0].sum() / h2 + r2[:, 1:].sum()
        sm[e] = r2[:, 0].sum() * h2 + r2[:, 1:].sum() * h2 * h2
        l2[e] = c @ hmass[e].reshape(6, 6) @ c
    return coeffs, sa, sm, l2


def coo_indices(poly_idx, ptr):
    rows = []
    cols = []
    for e in range(len(ptr) - 1):
        verts = poly_idx[ptr[e]:ptr[e + 1]]
        g = (3 * verts[:, None] + np.arange(3)).ravel()
        rows.append(np.repeat(g, len(g)))
        cols.append(np.tile(g, len(g)))
    return np.concatenate(rows), np.concatenate(cols)
