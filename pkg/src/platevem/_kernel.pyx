# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled element kernels; same contract as ``platevem._fallback``."""

import numpy as np
from cython.parallel cimport prange
from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free

from .element import ElementError

cdef double GP[3]
cdef double GW[3]
GP[0] = 0.5 - 0.5 * sqrt(0.6)
GP[1] = 0.5
GP[2] = 0.5 + 0.5 * sqrt(0.6)
GW[0] = 5.0 / 18.0
GW[1] = 8.0 / 18.0
GW[2] = 5.0 / 18.0

# degree-4 triangle rule, barycentric weights of (p, q, centroid)
cdef double TB[6][3]
cdef double TW[6]
cdef double _a1 = 0.44594849091596488631832925388305
cdef double _a2 = 0.091576213509770743459571463402202
cdef double _w1 = 0.22338158967801146569500700843312
cdef double _w2 = 0.10995174365532186763832632490021
TB[0][:] = [_a1, _a1, 1 - 2 * _a1]
TB[1][:] = [_a2, _a2, 1 - 2 * _a2]
TB[2][:] = [_a1, 1 - 2 * _a1, _a1]
TB[3][:] = [_a2, 1 - 2 * _a2, _a2]
TB[4][:] = [1 - 2 * _a1, _a1, _a1]
TB[5][:] = [1 - 2 * _a2, _a2, _a2]
TW[:] = [_w1, _w2, _w1, _w2, _w1, _w2]


cdef inline void _mono(double xi, double eta, double* m) noexcept nogil:
    m[0] = 1.0
    m[1] = xi
    m[2] = eta
    m[3] = xi * xi
    m[4] = xi * eta
    m[5] = eta * eta


cdef int _element(const double* xy, int N, double ad, double a0,
                  double* A, double* M, double* SA, double* SM,
                  double* PI, double* DM, double* HM, double* geo) noexcept nogil:
    cdef int n = 3 * N
    cdef int i, j, k, a, b, q, r, piv, w
    cdef double area = 0.0, cx = 0.0, cy = 0.0, cr, x0 = xy[0], y0 = xy[1]
    cdef double xs, ys, xns, yns, h = 0.0, d, dx, dy
    cdef double L, tx, ty, nx, ny, sx, sy, px, py, s, h00, h10, h01, h11, wl
    cdef double cn, ct, Hxx, Hxy, Hyy, ih2, tmp, best, tarea
    cdef double m[6]
    cdef double G[36]
    cdef double* D = <double*> malloc(n * 6 * sizeof(double))
    cdef double* B = <double*> malloc(6 * n * sizeof(double))
    cdef double* P = <double*> malloc(n * n * sizeof(double))
    cdef double* T = <double*> malloc(6 * n * sizeof(double))
    cdef double* wa = <double*> malloc(n * sizeof(double))
    cdef double* wm = <double*> malloc(n * sizeof(double))
    if D == NULL or B == NULL or P == NULL or T == NULL or wa == NULL or wm == NULL:
        free(D); free(B); free(P); free(T); free(wa); free(wm)
        return -2

    # geometry: shoelace area, centroid relative to the first vertex, diameter
    for i in range(N):
        j = (i + 1) % N
        xs = xy[2 * i] - x0
        ys = xy[2 * i + 1] - y0
        xns = xy[2 * j] - x0
        yns = xy[2 * j + 1] - y0
        area += xy[2 * i] * xy[2 * j + 1] - xy[2 * j] * xy[2 * i + 1]
        cr = xs * yns - xns * ys
        cx += (xs + xns) * cr
        cy += (ys + yns) * cr
    area *= 0.5
    cx = cx / (6.0 * area) + x0
    cy = cy / (6.0 * area) + y0
    for i in range(N):
        for j in range(i + 1, N):
            dx = xy[2 * i] - xy[2 * j]
            dy = xy[2 * i + 1] - xy[2 * j + 1]
            d = dx * dx + dy * dy
            if d > h:
                h = d
    h = sqrt(h)
    geo[0] = h
    geo[1] = area
    geo[2] = cx
    geo[3] = cy
    ih2 = 1.0 / (h * h)

    # D: DoFs of the scaled monomials
    for i in range(n * 6):
        D[i] = 0.0
    for i in range(N):
        sx = (xy[2 * i] - cx) / h
        sy = (xy[2 * i + 1] - cy) / h
        _mono(sx, sy, &D[18 * i])
        D[18 * i + 6 + 1] = 1.0 / h
        D[18 * i + 6 + 3] = 2.0 * sx / h
        D[18 * i + 6 + 4] = sy / h
        D[18 * i + 12 + 2] = 1.0 / h
        D[18 * i + 12 + 4] = sx / h
        D[18 * i + 12 + 5] = 2.0 * sy / h

    for i in range(n * 6):
        DM[i] = D[i]

    # B: boundary moments (rows 0..2) and Hessian moments (rows 3..5)
    for i in range(6 * n):
        B[i] = 0.0
    for i in range(N):
        j = (i + 1) % N
        dx = xy[2 * j] - xy[2 * i]
        dy = xy[2 * j + 1] - xy[2 * i + 1]
        L = sqrt(dx * dx + dy * dy)
        tx = dx / L
        ty = dy / L
        nx = ty
        ny = -tx
        for q in range(3):
            s = GP[q]
            px = xy[2 * i] + s * dx
            py = xy[2 * i + 1] + s * dy
            _mono((px - cx) / h, (py - cy) / h, m)
            h00 = 2 * s * s * s - 3 * s * s + 1
            h10 = s * s * s - 2 * s * s + s
            h01 = -2 * s * s * s + 3 * s * s
            h11 = s * s * s - s * s
            for a in range(3):
                wl = L * GW[q] * m[a]
                B[a * n + 3 * i] += wl * h00
                B[a * n + 3 * i + 1] += wl * h10 * L * tx
                B[a * n + 3 * i + 2] += wl * h10 * L * ty
                B[a * n + 3 * j] += wl * h01
                B[a * n + 3 * j + 1] += wl * h11 * L * tx
                B[a * n + 3 * j + 2] += wl * h11 * L * ty
        for a in range(3, 6):
            Hxx = 0.0
            Hxy = 0.0
            Hyy = 0.0
            if a == 3:
                Hxx = 2.0 * ih2
            elif a == 4:
                Hxy = ih2
            else:
                Hyy = 2.0 * ih2
            cn = nx * (Hxx * nx + Hxy * ny) + ny * (Hxy * nx + Hyy * ny)
            ct = tx * (Hxx * nx + Hxy * ny) + ty * (Hxy * nx + Hyy * ny)
            B[a * n + 3 * i + 1] += 0.5 * L * cn * nx
            B[a * n + 3 * i + 2] += 0.5 * L * cn * ny
            B[a * n + 3 * j + 1] += 0.5 * L * cn * nx
            B[a * n + 3 * j + 2] += 0.5 * L * cn * ny
            B[a * n + 3 * j] += ct
            B[a * n + 3 * i] -= ct

    # G = B D, then PI = G^{-1} B by Gaussian elimination with partial pivoting
    for a in range(6):
        for b in range(6):
            tmp = 0.0
            for k in range(n):
                tmp += B[a * n + k] * D[k * 6 + b]
            G[a * 6 + b] = tmp
    for i in range(6 * n):
        PI[i] = B[i]
    for k in range(6):
        piv = k
        best = fabs(G[k * 6 + k])
        for r in range(k + 1, 6):
            if fabs(G[r * 6 + k]) > best:
                best = fabs(G[r * 6 + k])
                piv = r
        if not best > 1e-300:
            free(D); free(B); free(P); free(T); free(wa); free(wm)
            return -1
        if piv != k:
            for b in range(6):
                tmp = G[k * 6 + b]; G[k * 6 + b] = G[piv * 6 + b]; G[piv * 6 + b] = tmp
            for b in range(n):
                tmp = PI[k * n + b]; PI[k * n + b] = PI[piv * n + b]; PI[piv * n + b] = tmp
        for r in range(k + 1, 6):
            tmp = G[r * 6 + k] / G[k * 6 + k]
            if tmp != 0.0:
                for b in range(k, 6):
                    G[r * 6 + b] -= tmp * G[k * 6 + b]
                for b in range(n):
                    PI[r * n + b] -= tmp * PI[k * n + b]
    for k in range(5, -1, -1):
        for b in range(n):
            tmp = PI[k * n + b]
            for r in range(k + 1, 6):
                tmp -= G[k * 6 + r] * PI[r * n + b]
            PI[k * n + b] = tmp / G[k * 6 + k]
    for i in range(6 * n):
        if PI[i] != PI[i] or fabs(PI[i]) > 1e300:
            free(D); free(B); free(P); free(T); free(wa); free(wm)
            return -1

    # monomial mass matrix: centroid fan, degree-4 rule
    for i in range(36):
        HM[i] = 0.0
    for i in range(N):
        j = (i + 1) % N
        tarea = 0.5 * ((xy[2 * i] - cx) * (xy[2 * j + 1] - cy)
                       - (xy[2 * j] - cx) * (xy[2 * i + 1] - cy))
        for q in range(6):
            px = TB[q][0] * xy[2 * i] + TB[q][1] * xy[2 * j] + TB[q][2] * cx
            py = TB[q][0] * xy[2 * i + 1] + TB[q][1] * xy[2 * j + 1] + TB[q][2] * cy
            _mono((px - cx) / h, (py - cy) / h, m)
            for a in range(6):
                for b in range(6):
                    HM[a * 6 + b] += tarea * TW[q] * m[a] * m[b]

    # P = I - D PI and the stabilization weights
    for i in range(n):
        for j in range(n):
            tmp = 1.0 if i == j else 0.0
            for a in range(6):
                tmp -= D[i * 6 + a] * PI[a * n + j]
            P[i * n + j] = tmp
    for i in range(N):
        wa[3 * i] = ih2
        wa[3 * i + 1] = 1.0
        wa[3 * i + 2] = 1.0
        wm[3 * i] = h * h
        wm[3 * i + 1] = h * h * h * h
        wm[3 * i + 2] = h * h * h * h

    # T = HM PI
    for a in range(6):
        for j in range(n):
            tmp = 0.0
            for b in range(6):
                tmp += HM[a * 6 + b] * PI[b * n + j]
            T[a * n + j] = tmp

    cdef double c4 = 4.0 * area * ih2 * ih2
    cdef double c2 = 2.0 * area * ih2 * ih2
    cdef double sa_, sm_, ac, mc
    for i in range(n):
        for j in range(i, n):
            sa_ = 0.0
            sm_ = 0.0
            for k in range(n):
                sa_ += wa[k] * P[k * n + i] * P[k * n + j]
                sm_ += wm[k] * P[k * n + i] * P[k * n + j]
            ac = (c4 * PI[3 * n + i] * PI[3 * n + j] + c2 * PI[4 * n + i] * PI[4 * n + j]
                  + c4 * PI[5 * n + i] * PI[5 * n + j])
            mc = 0.0
            for a in range(6):
                mc += PI[a * n + i] * T[a * n + j]
            SA[i * n + j] = sa_
            SA[j * n + i] = sa_
            SM[i * n + j] = sm_
            SM[j * n + i] = sm_
            A[i * n + j] = ac + ad * sa_
            A[j * n + i] = ac + ad * sa_
            M[i * n + j] = mc + a0 * sm_
            M[j * n + i] = mc + a0 * sm_
    # symmetrize the consistency part of M (T = HM PI is not symmetric in floating point)
    for i in range(n):
        for j in range(i + 1, n):
            mc = 0.0
            for a in range(6):
                mc += PI[a * n + j] * T[a * n + i]
            tmp = 0.5 * (M[i * n + j] + mc + a0 * SM[i * n + j])
            M[i * n + j] = tmp
            M[j * n + i] = tmp

    free(D); free(B); free(P); free(T); free(wa); free(wm)
    return 0


def element_batch(const double[:, ::1] vertices, const long[::1] poly_idx,
                  const long[::1] ptr, double alpha_delta, double alpha_0,
                  int num_threads=1):
    cdef Py_ssize_t ne = ptr.shape[0] - 1
    sizes = np.diff(np.asarray(ptr))
    mat_ptr_a = np.zeros(ne + 1, dtype=np.int64)
    np.cumsum((3 * sizes) ** 2, out=mat_ptr_a[1:])
    pi_ptr_a = np.zeros(ne + 1, dtype=np.int64)
    np.cumsum(18 * sizes, out=pi_ptr_a[1:])
    cdef Py_ssize_t nm = mat_ptr_a[-1]
    A_a = np.empty(nm)
    M_a = np.empty(nm)
    SA_a = np.empty(nm)
    SM_a = np.empty(nm)
    PI_a = np.empty(pi_ptr_a[-1])
    DM_a = np.empty(pi_ptr_a[-1])
    HM_a = np.empty((ne, 36))
    geo_a = np.empty((ne, 4))
    status_a = np.zeros(ne, dtype=np.intc)
    cdef long[::1] mat_ptr = mat_ptr_a
    cdef long[::1] pi_ptr = pi_ptr_a
    cdef double[::1] A = A_a
    cdef double[::1] M = M_a
    cdef double[::1] SA = SA_a
    cdef double[::1] SM = SM_a
    cdef double[::1] PI = PI_a
    cdef double[::1] DM = DM_a
    cdef double[:, ::1] HM = HM_a
    cdef double[:, ::1] geo = geo_a
    cdef int[::1] status = status_a
    cdef Py_ssize_t e
    cdef int N, i
    cdef double* xy
    for e in prange(ne, nogil=True, num_threads=num_threads, schedule="dynamic"):
        N = <int> (ptr[e + 1] - ptr[e])
        xy = <double*> malloc(2 * N * sizeof(double))
        if xy == NULL:
            status[e] = -2
            continue
        for i in range(N):
            xy[2 * i] = vertices[poly_idx[ptr[e] + i], 0]
            xy[2 * i + 1] = vertices[poly_idx[ptr[e] + i], 1]
        status[e] = _element(xy, N, alpha_delta, alpha_0,
                             &A[mat_ptr[e]],
                             &M[mat_ptr[e]],
                             &SA[mat_ptr[e]],
                             &SM[mat_ptr[e]],
                             &PI[pi_ptr[e]], &DM[pi_ptr[e]], &HM[e, 0], &geo[e, 0])
        free(xy)
    bad = np.flatnonzero(status_a)
    if len(bad):
        if status_a[bad[0]] == -2:
            raise MemoryError("element kernel allocation failed")
        raise ElementError(f"singular projector system on element {int(bad[0])}")
    return {"A": A_a, "M": M_a, "stab_a": SA_a, "stab_m": SM_a, "pi": PI_a,
            "dmat": DM_a, "hmass": HM_a, "h": geo_a[:, 0].copy(), "area": geo_a[:, 1].copy(),
            "centroid": geo_a[:, 2:].copy(), "mat_ptr": mat_ptr_a, "pi_ptr": pi_ptr_a}


def element_residuals(const double[::1] pi, const double[::1] dmat, const long[::1] pi_ptr,
                      const double[::1] h, const double[:, ::1] hmass,
                      const long[::1] poly_idx, const long[::1] ptr,
                      const double[::1] u):
    cdef Py_ssize_t ne = ptr.shape[0] - 1
    coeffs_a = np.zeros((ne, 6))
    sa_a = np.zeros(ne)
    sm_a = np.zeros(ne)
    l2_a = np.zeros(ne)
    cdef double[:, ::1] coeffs = coeffs_a
    cdef double[::1] sa = sa_a
    cdef double[::1] sm = sm_a
    cdef double[::1] l2 = l2_a
    cdef Py_ssize_t e
    cdef int n, i, j, a, b, v
    cdef long po
    cdef double ra, rm, tmp, r, h2
    cdef double loc[512]
    for e in range(ne):
        n = <int> (3 * (ptr[e + 1] - ptr[e]))
        if n > 512:
            raise ValueError(f"element {e} has too many vertices for the kernel")
        for i in range(n // 3):
            v = <int> poly_idx[ptr[e] + i]
            loc[3 * i] = u[3 * v]
            loc[3 * i + 1] = u[3 * v + 1]
            loc[3 * i + 2] = u[3 * v + 2]
        po = pi_ptr[e]
        for a in range(6):
            tmp = 0.0
            for j in range(n):
                tmp += pi[po + a * n + j] * loc[j]
            coeffs[e, a] = tmp
        # weighted squares of the residual u - D Pi u: exact zero for polynomials
        h2 = h[e] * h[e]
        ra = 0.0
        rm = 0.0
        for i in range(n):
            r = loc[i]
            for a in range(6):
                r -= dmat[po + i * 6 + a] * coeffs[e, a]
            if i % 3 == 0:
                ra += r * r / h2
                rm += r * r * h2
            else:
                ra += r * r
                rm += r * r * h2 * h2
        sa[e] = ra
        sm[e] = rm
        tmp = 0.0
        for a in range(6):
            for b in range(6):
                tmp += coeffs[e, a] * hmass[e, a * 6 + b] * coeffs[e, b]
        l2[e] = tmp
    return coeffs_a, sa_a, sm_a, l2_a


def coo_indices(const long[::1] poly_idx, const long[::1] ptr):
    cdef Py_ssize_t ne = ptr.shape[0] - 1
    sizes = 3 * np.diff(np.asarray(ptr))
    cdef Py_ssize_t total = int((sizes ** 2).sum())
    rows_a = np.empty(total, dtype=np.int64)
    cols_a = np.empty(total, dtype=np.int64)
    cdef long[::1] rows = rows_a
    cdef long[::1] cols = cols_a
    cdef Py_ssize_t e, pos = 0
    cdef int n, i, j
    cdef long gi, gj
    for e in range(ne):
        n = <int> (3 * (ptr[e + 1] - ptr[e]))
        for i in range(n):
            gi = 3 * poly_idx[ptr[e] + i // 3] + i % 3
            for j in range(n):
                gj = 3 * poly_idx[ptr[e] + j // 3] + j % 3
                rows[pos] = gi
                cols[pos] = gj
                pos += 1
    return rows_a, cols_a
