"""Mixed Dirichlet/Neumann Laplace solves, boundary fluxes, and pairings.

Potentials are P1 Galerkin solutions with Dirichlet data imposed by
elimination (the reduced system stays symmetric positive definite) and
homogeneous natural conditions on the remaining boundary. Boundary fluxes
are recovered variationally from full stiffness-matrix rows and converted to
pointwise densities with the lumped boundary mass, so that the discrete
energy identity  sum_i w_i psi_i q_i = int |grad phi|^2  holds to solver
tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import (
    ConfigurationError,
    NumericalError,
    SingularSystemError,
    StateError,
)
from .geometry import CavityDescription
from .mesh import TAG_TOP, Mesh

__all__ = [
    "SurfaceTrace",
    "ScalarField",
    "surface_trace",
    "solve_potential",
    "boundary_flux",
    "total_boundary_raw_flux",
    "energy",
    "surface_pairing",
    "field_to_csv",
]

DEFAULT_RTOL = 1e-12


@dataclass(frozen=True)
class SurfaceTrace:
    """Values on the nodes of one boundary segment with quadrature weights.

    x and arclength are the node positions along the segment; weights are the
    lumped (trapezoidal) arclength weights and sum to the segment length.
    """

    x: np.ndarray
    arclength: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for arr in (self.x, self.arclength, self.values, self.weights):
            arr.setflags(write=False)

    def same_nodes(self, other, tol=1e-12):
        scale = max(abs(self.x[-1] - self.x[0]), 1.0)
        return self.x.shape == other.x.shape and np.allclose(
            self.x, other.x, atol=tol * scale, rtol=0.0
        )

    def with_values(self, values):
        return SurfaceTrace(
            x=self.x,
            arclength=self.arclength,
            values=np.asarray(values, dtype=float),
            weights=self.weights,
        )


@dataclass
class ScalarField:
    """Nodal coefficients of a P1 field on a mesh."""

    mesh: Mesh
    values: np.ndarray
    solved: bool = False
    iterations: int = 0
    residual: float = 0.0

    def __post_init__(self):
        if self.values.shape != (self.mesh.n_nodes,):
            raise ConfigurationError(
                f"field has {self.values.shape[0]} coefficients for "
                f"{self.mesh.n_nodes} mesh nodes"
            )
        self.values.setflags(write=False)


def surface_trace(mesh: Mesh, data, tag=TAG_TOP) -> SurfaceTrace:
    """Build a trace on the tagged segment from a callable f(x) or an array."""
    ids = mesh.boundary_nodes(tag)
    xs = mesh.nodes[ids, 0]
    seg = mesh.boundary_lengths(tag)
    arclength = np.concatenate([[0.0], np.cumsum(seg)])
    if callable(data):
        values = np.asarray(data(xs), dtype=float)
    else:
        values = np.asarray(data, dtype=float)
    if values.shape != xs.shape:
        raise ConfigurationError(
            f"trace data has {values.shape} values for {len(xs)} boundary nodes"
        )
    return SurfaceTrace(
        x=xs.copy(),
        arclength=arclength,
        values=values.copy(),
        weights=mesh.lumped_boundary_weights(tag),
    )


class _ReducedSystem:
    """Dirichlet-eliminated SPD system for a fixed set of constrained tags."""

    def __init__(self, mesh, tags):
        k = mesh.stiffness
        cons = np.unique(np.concatenate([mesh.boundary_nodes(t) for t in tags])) if tags else np.empty(0, dtype=np.int32)
        if len(cons) == 0:
            raise SingularSystemError(
                "no Dirichlet nodes: the pure Neumann problem is singular"
            )
        free = np.setdiff1d(np.arange(mesh.n_nodes, dtype=np.int32), cons)
        self.cons = cons
        self.free = free
        self.k_ff = k[free][:, free].tocsr()
        self.k_fc = k[free][:, cons].tocsr()
        self.inv_diag = 1.0 / self.k_ff.diagonal()
        self._lu = None

    @property
    def lu(self):
        if self._lu is None:
            self._lu = spla.splu(self.k_ff.tocsc())
        return self._lu

    def solve(self, u_cons, backend, rtol, maxiter=None):
        rhs = -(self.k_fc @ u_cons)
        if backend == "direct":
            x = self.lu.solve(rhs)
            r = rhs - self.k_ff @ x
            bn = np.linalg.norm(rhs)
            relres = float(np.linalg.norm(r) / bn) if bn > 0 else 0.0
            return x, 0, relres
        if backend != "cg":
            raise ConfigurationError(f"unknown solver backend: {backend!r}")
        n = len(rhs)
        if maxiter is None:
            maxiter = max(1000, 20 * n)
        x = np.zeros(n)
        mat = self.k_ff
        it, relres = _kernels.cg_jacobi(
            mat.data,
            mat.indices.astype(np.int32, copy=False),
            mat.indptr.astype(np.int32, copy=False),
            rhs,
            self.inv_diag,
            x,
            rtol,
            maxiter,
        )
        if relres > rtol:
            raise NumericalError(
                f"conjugate gradients stalled at relative residual {relres:.3e} "
                f"after {it} iterations (target {rtol:.1e})",
                residual=relres,
            )
        return x, it, relres


def _reduced(mesh, tags):
    cache = getattr(mesh, "_reduced_cache", None)
    if cache is None:
        cache = {}
        mesh._reduced_cache = cache
    key = tuple(sorted(tags))
    if key not in cache:
        cache[key] = _ReducedSystem(mesh, key)
    return cache[key]


def solve_potential(
    mesh: Mesh,
    dirichlet: SurfaceTrace,
    tags=(TAG_TOP,),
    backend="cg",
    rtol=DEFAULT_RTOL,
    maxiter=None,
) -> ScalarField:
    """Harmonic potential with the trace as Dirichlet data on the tagged
    segments and homogeneous Neumann conditions elsewhere."""
    tags = tuple(tags)
    if len(tags) == 0:
        raise SingularSystemError(
            "no Dirichlet nodes: the pure Neumann problem is singular"
        )
    if tags != (TAG_TOP,):
        raise ConfigurationError(
            "Dirichlet data is supplied as a TOP trace; only tags=('TOP',) is supported"
        )
    sys_ = _reduced(mesh, tags)
    top = mesh.boundary_nodes(TAG_TOP)
    xs = mesh.nodes[top, 0]
    if dirichlet.values.shape != xs.shape or not np.allclose(
        dirichlet.x, xs, atol=1e-12 * mesh.domain.width, rtol=0.0
    ):
        raise ConfigurationError("Dirichlet trace nodes do not match the mesh TOP nodes")
    u = np.zeros(mesh.n_nodes)
    u[sys_.cons] = dirichlet.values[np.searchsorted(top, sys_.cons)]
    x, it, relres = sys_.solve(u[sys_.cons], backend, rtol, maxiter=maxiter)
    u[sys_.free] = x
    return ScalarField(mesh=mesh, values=u, solved=True, iterations=it, residual=relres)


def boundary_flux(f: ScalarField, tag=TAG_TOP, form="density") -> SurfaceTrace:
    """Consistent boundary flux of a solved field on one tagged segment.

    Raw nodal fluxes are the full stiffness rows applied to the solution
    (integrals of the outward normal derivative against the nodal hats);
    form='density' divides by the lumped arclength weights, form='raw'
    returns the weak values themselves.
    """
    if not f.solved:
        raise StateError("boundary_flux requires a solved field")
    mesh = f.mesh
    ids = mesh.boundary_nodes(tag)
    raw = (mesh.stiffness @ f.values)[ids]
    trace = surface_trace(mesh, np.zeros(len(ids)), tag=tag)
    if form == "raw":
        return trace.with_values(raw)
    if form == "density":
        return trace.with_values(raw / trace.weights)
    raise ConfigurationError(f"unknown flux form: {form!r}")


def total_boundary_raw_flux(f: ScalarField) -> float:
    """Sum of raw fluxes over all boundary nodes (discrete divergence check)."""
    if not f.solved:
        raise StateError("total_boundary_raw_flux requires a solved field")
    raw = f.mesh.stiffness @ f.values
    return float(raw[f.mesh.all_boundary_node_ids].sum())


def _membership(mesh, subregion: CavityDescription):
    pts, w = mesh.quadrature
    lo = subregion.lower.value(pts[:, :, 0].ravel()).reshape(pts.shape[:2])
    hi = subregion.upper.value(pts[:, :, 0].ravel()).reshape(pts.shape[:2])
    env_lo = np.minimum(lo, hi)
    env_hi = np.maximum(lo, hi)
    y = pts[:, :, 1]
    return (y > env_lo) & (y <= env_hi)


def energy(f: ScalarField, subregion: CavityDescription = None, complement=False) -> float:
    """Dirichlet energy int |grad phi|^2 over the mesh or a cavity subregion.

    Without a subregion the per-triangle constant-gradient sum is exact. A
    subregion is resolved by 7-point quadrature with pointwise membership
    tests, so a split region and its complement add up to the total exactly.
    """
    g = f.mesh.triangle_gradients(f.values)
    g2 = (g ** 2).sum(axis=1)
    if subregion is None:
        return float(g2 @ f.mesh.areas)
    inside = _membership(f.mesh, subregion)
    if complement:
        inside = ~inside
    _, w = f.mesh.quadrature
    return float((w * inside * g2[:, None]).sum())


def surface_pairing(a: SurfaceTrace, b: SurfaceTrace) -> float:
    """Weighted surface product sum_i w_i a_i b_i (symmetric bilinear)."""
    if not a.same_nodes(b):
        raise ConfigurationError("surface traces live on different node sets")
    return float((a.weights * a.values * b.values).sum())


def field_to_csv(f: ScalarField) -> str:
    """CSV dump of the field: x, y, phi per node."""
    lines = ["x,y,phi"]
    lines += [
        f"{p[0]:.17g},{p[1]:.17g},{v:.17g}"
        for p, v in zip(f.mesh.nodes, f.values)
    ]
    return "\n".join(lines) + "\n"
