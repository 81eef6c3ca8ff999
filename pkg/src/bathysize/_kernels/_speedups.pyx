# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: P1 stiffness assembly and Jacobi-preconditioned CG."""

from libc.math cimport sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def assemble_p1_triplets(const double[::1] xs, const double[::1] ys, const int[:, ::1] tris):
    """COO triplets (rows, cols, vals) of the P1 Laplace stiffness matrix."""
    cdef Py_ssize_t ntri = tris.shape[0]
    rows_arr = np.empty(9 * ntri, dtype=np.int32)
    cols_arr = np.empty(9 * ntri, dtype=np.int32)
    vals_arr = np.empty(9 * ntri, dtype=np.float64)
    cdef int[::1] rows = rows_arr
    cdef int[::1] cols = cols_arr
    cdef double[::1] vals = vals_arr
    cdef Py_ssize_t t, a, b, k
    cdef int nn0, nn1, nn2
    cdef double x0, x1, x2, y0, y1, y2, area2, f
    cdef double bb0, bb1, bb2, cc0, cc1, cc2
    cdef double bv[3]
    cdef double cv[3]
    cdef int nv[3]
    cdef int bad = 0
    with nogil:
        for t in range(ntri):
            nn0 = tris[t, 0]; nn1 = tris[t, 1]; nn2 = tris[t, 2]
            x0 = xs[nn0]; x1 = xs[nn1]; x2 = xs[nn2]
            y0 = ys[nn0]; y1 = ys[nn1]; y2 = ys[nn2]
            bb0 = y1 - y2; bb1 = y2 - y0; bb2 = y0 - y1
            cc0 = x2 - x1; cc1 = x0 - x2; cc2 = x1 - x0
            area2 = x0 * bb0 + x1 * bb1 + x2 * bb2
            if area2 <= 0.0:
                bad = 1
                break
            f = 1.0 / (2.0 * area2)
            bv[0] = bb0; bv[1] = bb1; bv[2] = bb2
            cv[0] = cc0; cv[1] = cc1; cv[2] = cc2
            nv[0] = nn0; nv[1] = nn1; nv[2] = nn2
            k = 9 * t
            for a in range(3):
                for b in range(3):
                    rows[k] = nv[a]
                    cols[k] = nv[b]
                    vals[k] = (bv[a] * bv[b] + cv[a] * cv[b]) * f
                    k += 1
    if bad:
        raise ValueError("non-positive triangle area in assembly")
    return rows_arr, cols_arr, vals_arr


cdef void _csr_matvec(const double[::1] data, const int[::1] indices, const int[::1] indptr,
                      const double[::1] v, double[::1] out) nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(out.shape[0]):
        acc = 0.0
        for j in range(indptr[i], indptr[i + 1]):
            acc += data[j] * v[indices[j]]
        out[i] = acc


cdef double _dot(const double[::1] a, const double[::1] b) nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i] * b[i]
    return acc


def cg_jacobi(const double[::1] data, const int[::1] indices, const int[::1] indptr,
              const double[::1] rhs, const double[::1] inv_diag, double[::1] x,
              double rtol, int maxiter):
    """Jacobi-preconditioned conjugate gradients on a CSR SPD system.

    `x` holds the initial guess and is overwritten with the solution.
    Returns (iterations, relative_residual).
    """
    cdef Py_ssize_t n = rhs.shape[0]
    r_arr = np.empty(n, dtype=np.float64)
    z_arr = np.empty(n, dtype=np.float64)
    p_arr = np.empty(n, dtype=np.float64)
    q_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] r = r_arr
    cdef double[::1] z = z_arr
    cdef double[::1] p = p_arr
    cdef double[::1] q = q_arr
    cdef Py_ssize_t i
    cdef int it = 0
    cdef double bnorm, rnorm, rz, rz_new, alpha, beta
    with nogil:
        bnorm = sqrt(_dot(rhs, rhs))
    if bnorm == 0.0:
        for i in range(n):
            x[i] = 0.0
        return 0, 0.0
    with nogil:
        _csr_matvec(data, indices, indptr, x, q)
        rz = 0.0
        for i in range(n):
            r[i] = rhs[i] - q[i]
            z[i] = inv_diag[i] * r[i]
            p[i] = z[i]
            rz += r[i] * z[i]
        rnorm = sqrt(_dot(r, r))
        while rnorm > rtol * bnorm and it < maxiter:
            _csr_matvec(data, indices, indptr, p, q)
            alpha = rz / _dot(p, q)
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * q[i]
            rnorm = sqrt(_dot(r, r))
            it += 1
            if rnorm <= rtol * bnorm:
                break
            rz_new = 0.0
            for i in range(n):
                z[i] = inv_diag[i] * r[i]
                rz_new += r[i] * z[i]
            beta = rz_new / rz
            for i in range(n):
                p[i] = z[i] + beta * p[i]
            rz = rz_new
    return it, rnorm / bnorm
