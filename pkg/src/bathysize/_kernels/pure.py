"""Pure NumPy implementations of the hot kernels.

Mirrors the compiled module `_speedups`; same signatures, same triplet
ordering, so the two backends are interchangeable at import time.
"""

import numpy as np
import scipy.sparse as sp


def assemble_p1_triplets(xs, ys, tris):
    """COO triplets (rows, cols, vals) of the P1 Laplace stiffness matrix.

    Local matrix for a triangle with vertices p0, p1, p2 is
    K_ab = (b_a*b_b + c_a*c_b) / (4*area), emitted in row-major (a, b) order.
    """
    p = np.asarray(tris)
    x = xs[p]
    y = ys[p]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area2 = x[:, 0] * b[:, 0] + x[:, 1] * b[:, 1] + x[:, 2] * b[:, 2]
    if np.any(area2 <= 0.0):
        raise ValueError("non-positive triangle area in assembly")
    vals = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
    vals /= (2.0 * area2)[:, None, None]
    rows = np.repeat(p, 3, axis=1)
    cols = np.tile(p, (1, 3))
    return (
        rows.ravel().astype(np.int32),
        cols.ravel().astype(np.int32),
        vals.ravel().astype(np.float64),
    )


def cg_jacobi(data, indices, indptr, rhs, inv_diag, x, rtol, maxiter):
    """Jacobi-preconditioned conjugate gradients on a CSR SPD system.

    `x` holds the initial guess and is overwritten with the solution.
    Returns (iterations, relative_residual).
    """
    n = rhs.shape[0]
    a = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0
    r = rhs - a @ x
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    rnorm = float(np.linalg.norm(r))
    it = 0
    while rnorm > rtol * bnorm and it < maxiter:
        q = a @ p
        alpha = rz / float(p @ q)
        x += alpha * p
        r -= alpha * q
        rnorm = float(np.linalg.norm(r))
        if rnorm <= rtol * bnorm:
            it += 1
            break
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return it, rnorm / bnorm
