#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure NumPy fallback.

Times the two hot paths (P1 stiffness triplet assembly and the
Jacobi-preconditioned CG solve) on a sequence of strip meshes and prints a
comparison table. Run after building the extension:

    python benchmarks/bench_backends.py
"""

import time

import numpy as np
import scipy.sparse as sp

from bathysize._kernels import pure
from bathysize.geometry import FluidDomain, Profile
from bathysize.mesh import build_mesh
from bathysize.solver import _reduced, surface_trace

try:
    from bathysize._kernels import _speedups as compiled
except ImportError:
    compiled = None


def _time(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_assembly(mesh):
    xs = np.ascontiguousarray(mesh.nodes[:, 0])
    ys = np.ascontiguousarray(mesh.nodes[:, 1])
    rows = {}
    t, ref = _time(lambda: pure.assemble_p1_triplets(xs, ys, mesh.triangles))
    rows["numpy"] = t
    if compiled is not None:
        t, out = _time(lambda: compiled.assemble_p1_triplets(xs, ys, mesh.triangles))
        rows["compiled"] = t
        n = mesh.n_nodes
        a = sp.coo_matrix((ref[2], (ref[0], ref[1])), shape=(n, n)).tocsr()
        b = sp.coo_matrix((out[2], (out[0], out[1])), shape=(n, n)).tocsr()
        assert abs(a - b).max() < 1e-12, "backend assembly mismatch"
    return rows


def bench_cg(mesh, rtol=1e-12):
    sys_ = _reduced(mesh, ("TOP",))
    psi = surface_trace(mesh, lambda x: np.cos(np.pi * x))
    top = mesh.boundary_nodes("TOP")
    u_c = psi.values
    rhs = -(sys_.k_fc @ u_c)
    mat = sys_.k_ff
    data = mat.data
    idx = mat.indices.astype(np.int32, copy=False)
    ptr = mat.indptr.astype(np.int32, copy=False)
    inv_diag = sys_.inv_diag
    maxiter = 20 * len(rhs)
    rows = {}
    x = np.zeros(len(rhs))
    t, _ = _time(lambda: pure.cg_jacobi(data, idx, ptr, rhs, inv_diag,
                                        x.copy(), rtol, maxiter))
    rows["numpy"] = t
    if compiled is not None:
        t, _ = _time(lambda: compiled.cg_jacobi(data, idx, ptr, rhs, inv_diag,
                                                x.copy(), rtol, maxiter))
        rows["compiled"] = t
    return rows


def main():
    print(f"compiled extension available: {compiled is not None}")
    dom = FluidDomain(width=1.0, bottom=Profile.flat(0.0), surface=Profile.flat(1.0))
    header = f"{'kernel':<10} {'grid':>10} {'numpy [ms]':>12} {'compiled [ms]':>14} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for nx in (64, 128, 256):
        mesh = build_mesh(dom, nx, nx)
        for name, bench in (("assembly", bench_assembly), ("cg", bench_cg)):
            rows = bench(mesh)
            t_np = rows["numpy"] * 1e3
            if "compiled" in rows:
                t_cy = rows["compiled"] * 1e3
                print(f"{name:<10} {nx:>6}x{nx:<3} {t_np:>12.2f} {t_cy:>14.2f} "
                      f"{t_np / t_cy:>8.1f}x")
            else:
                print(f"{name:<10} {nx:>6}x{nx:<3} {t_np:>12.2f} {'-':>14} {'-':>9}")


if __name__ == "__main__":
    main()
