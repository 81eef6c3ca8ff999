"""Discrete Dirichlet-to-Neumann operator on the free surface.

The stored matrix is the weak-form flux response: column j holds the raw
(hat-integrated) surface fluxes of the harmonic extension of the j-th nodal
hat trace. It is the Schur complement of the stiffness matrix on the TOP
nodes: symmetric, positive semidefinite, with constants in its kernel, and
its quadratic form equals the Dirichlet energy of the extension. Pointwise
flux densities are obtained by dividing by the lumped surface weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, NumericalError
from .geometry import Profile
from .mesh import TAG_TOP, Mesh
from .solver import SurfaceTrace, _reduced, surface_trace

__all__ = ["DtNMatrix", "assemble_dtn", "dtn_spectrum", "vertical_velocity"]

_ASYMMETRY_WARN = 1e-6


@dataclass(frozen=True)
class DtNMatrix:
    """Symmetric weak-form surface flux response with its node geometry."""

    x: np.ndarray
    arclength: np.ndarray
    weights: np.ndarray
    matrix: np.ndarray
    asymmetry: float
    resolution: tuple
    domain_label: str

    def __post_init__(self):
        for arr in (self.x, self.arclength, self.weights, self.matrix):
            arr.setflags(write=False)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def apply_density(self, psi) -> np.ndarray:
        """Surface flux density response to nodal Dirichlet data."""
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (self.dim,):
            raise ConfigurationError(
                f"data has {psi.shape} values for {self.dim} surface nodes"
            )
        return (self.matrix @ psi) / self.weights

    def quadratic_form(self, psi) -> float:
        """psi^T G psi; equals the Dirichlet energy of the extension."""
        psi = np.asarray(psi, dtype=float)
        return float(psi @ (self.matrix @ psi))

    def to_csv(self) -> str:
        lines = [",".join(f"{v:.17g}" for v in row) for row in self.matrix]
        return "\n".join(lines) + "\n"


def assemble_dtn(mesh: Mesh, backend="direct", rtol=1e-12) -> DtNMatrix:
    """Assemble the surface DtN matrix, one harmonic solve per TOP node.

    The factorization (or preconditioner) of the reduced system is reused
    across columns. The raw column matrix is symmetrized by averaging with
    its transpose; the relative asymmetry beforehand is kept as a
    mesh-quality diagnostic and warned about above 1e-6.
    """
    top = mesh.boundary_nodes(TAG_TOP)
    if len(top) < 2:
        raise ConfigurationError("DtN assembly needs at least 2 TOP nodes")
    sys_ = _reduced(mesh, (TAG_TOP,))
    k = mesh.stiffness
    n_top = len(top)
    cols = np.empty((n_top, n_top))
    u = np.zeros(mesh.n_nodes)
    for j in range(n_top):
        u[:] = 0.0
        u[top[j]] = 1.0
        x, _, _ = sys_.solve(u[sys_.cons], backend, rtol)
        u[sys_.free] = x
        cols[:, j] = (k @ u)[top]
    asym = float(
        np.linalg.norm(cols - cols.T) / max(np.linalg.norm(cols), 1e-300)
    )
    if asym > _ASYMMETRY_WARN:
        warnings.warn(
            f"DtN asymmetry {asym:.3e} exceeds {_ASYMMETRY_WARN:.0e}; "
            "check mesh quality or solver tolerance",
            stacklevel=2,
        )
    mat = 0.5 * (cols + cols.T)
    trace = surface_trace(mesh, np.zeros(n_top), tag=TAG_TOP)
    return DtNMatrix(
        x=trace.x.copy(),
        arclength=trace.arclength.copy(),
        weights=trace.weights.copy(),
        matrix=mat,
        asymmetry=asym,
        resolution=mesh.resolution,
        domain_label=f"{mesh.domain.bottom.kind}-bottom/{mesh.domain.surface.kind}-surface",
    )


def dtn_spectrum(g: DtNMatrix, k_max: int):
    """Smallest k_max eigenpairs of G v = lambda W v, ascending.

    W is the diagonal of lumped surface weights; eigenvectors come back
    W-orthonormal. The zeroth eigenvalue is zero (constants).
    """
    if k_max > g.dim:
        raise ConfigurationError(
            f"k_max={k_max} exceeds the matrix dimension {g.dim}"
        )
    try:
        vals, vecs = scipy.linalg.eigh(
            g.matrix, np.diag(g.weights), subset_by_index=[0, k_max - 1]
        )
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"DtN eigensolve failed: {exc}") from exc
    return [(float(vals[i]), vecs[:, i].copy()) for i in range(k_max)]


def vertical_velocity(g: DtNMatrix, psi: SurfaceTrace, surface: Profile) -> SurfaceTrace:
    """Vertical fluid velocity at the surface from Dirichlet data.

    phi_y = (G psi + psi_x * zeta_x) / (1 + zeta_x^2), with psi_x obtained by
    centered differences on the arclength positions and rescaled to the
    horizontal coordinate. For a flat surface this reduces to the flux
    density G psi.
    """
    if psi.x.shape != g.x.shape or not np.allclose(psi.x, g.x, rtol=0.0, atol=1e-12):
        raise ConfigurationError("trace nodes do not match the DtN surface nodes")
    density = g.apply_density(psi.values)
    zx = surface.slope(psi.x)
    psi_s = np.gradient(psi.values, psi.arclength)
    psi_x = psi_s * np.sqrt(1.0 + zx ** 2)
    out = (density + psi_x * zx) / (1.0 + zx ** 2)
    return psi.with_values(out)
