"""Separation-of-variables reference solutions on the flat strip.

On the rectangle [0, L] x [0, depth] with a rigid flat bottom, solid walls,
and Dirichlet data cos(k pi x / L) on the top, the harmonic potential is

    phi_k(x, y) = cos(k pi x / L) * cosh(k pi y / L) / cosh(k pi depth / L)

with surface flux density lambda_k * cos(k pi x / L) and
lambda_k = (k pi / L) * tanh(k pi depth / L). These are the exact eigenpairs
of the surface Dirichlet-to-Neumann operator on the strip.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "strip_eigenvalue",
    "strip_mode",
    "strip_mode_potential",
    "strip_mode_gradient",
    "strip_mode_flux_density",
    "strip_mode_energy",
]


def strip_eigenvalue(k: int, width=1.0, depth=1.0) -> float:
    """k-th surface DtN eigenvalue of the flat strip; k=0 gives 0."""
    kk = k * np.pi / width
    return float(kk * np.tanh(kk * depth))


def strip_mode(k: int, width=1.0):
    """The k-th surface mode cos(k pi x / width) as a callable."""
    return lambda x: np.cos(k * np.pi * np.asarray(x, dtype=float) / width)


def strip_mode_potential(k: int, width=1.0, depth=1.0):
    """Harmonic extension of mode k as a callable of (x, y)."""
    kk = k * np.pi / width

    def phi(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.cos(kk * x) * np.cosh(kk * y) / np.cosh(kk * depth)

    return phi


def strip_mode_gradient(k: int, width=1.0, depth=1.0):
    """Gradient of the mode-k potential as a callable of (x, y) -> (gx, gy)."""
    kk = k * np.pi / width

    def grad(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ch = np.cosh(kk * depth)
        gx = -kk * np.sin(kk * x) * np.cosh(kk * y) / ch
        gy = kk * np.cos(kk * x) * np.sinh(kk * y) / ch
        return gx, gy

    return grad


def strip_mode_flux_density(k: int, width=1.0, depth=1.0):
    """Outward normal derivative of the mode-k potential on the surface."""
    lam = strip_eigenvalue(k, width, depth)
    return lambda x: lam * np.cos(k * np.pi * np.asarray(x, dtype=float) / width)


def strip_mode_energy(k: int, width=1.0, depth=1.0) -> float:
    """Dirichlet energy of the mode-k potential: (width/2) * lambda_k."""
    return 0.5 * width * strip_eigenvalue(k, width, depth)
