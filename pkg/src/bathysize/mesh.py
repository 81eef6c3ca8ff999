"""Sigma-mapped structured triangulations of fluid domains.

A domain is meshed by the vertical map (xi, s) -> (xi, b(xi) + s*(zeta(xi) -
b(xi))) on an (nx+1) x (ny+1) grid of nodes, each cell split into two
triangles. Boundary edges are tagged TOP, BOTTOM, WALL_LEFT, WALL_RIGHT.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import ConfigurationError, GeometryError
from .geometry import FluidDomain

__all__ = [
    "Mesh",
    "build_mesh",
    "TAG_TOP",
    "TAG_BOTTOM",
    "TAG_WALL_LEFT",
    "TAG_WALL_RIGHT",
    "ALL_TAGS",
]

TAG_TOP = "TOP"
TAG_BOTTOM = "BOTTOM"
TAG_WALL_LEFT = "WALL_LEFT"
TAG_WALL_RIGHT = "WALL_RIGHT"
ALL_TAGS = (TAG_TOP, TAG_BOTTOM, TAG_WALL_LEFT, TAG_WALL_RIGHT)

# 7-point degree-5 triangle rule: barycentric points and weights (sum 1)
_SQ15 = np.sqrt(15.0)
_TRI7_W = np.array(
    [9.0 / 40.0]
    + [(155.0 - _SQ15) / 1200.0] * 3
    + [(155.0 + _SQ15) / 1200.0] * 3
)
_A1 = (6.0 - _SQ15) / 21.0
_B1 = 1.0 - 2.0 * _A1
_A2 = (6.0 + _SQ15) / 21.0
_B2 = 1.0 - 2.0 * _A2
_TRI7_BARY = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [_B1, _A1, _A1],
        [_A1, _B1, _A1],
        [_A1, _A1, _B1],
        [_B2, _A2, _A2],
        [_A2, _B2, _A2],
        [_A2, _A2, _B2],
    ]
)

# cell (i, j) owns triangles 2*(j*nx+i) and 2*(j*nx+i)+1
_RING_OFFSETS = [
    (0, 0), (0, -1), (0, 1), (-1, 0), (1, 0),
    (-1, -1), (-1, 1), (1, -1), (1, 1),
    (0, -2), (0, 2), (-2, 0), (2, 0),
]


class Mesh:
    """Triangulated sigma-mapped grid with tagged boundary segments."""

    def __init__(self, domain, nodes, triangles, boundary_edges, boundary_tags, resolution):
        self.domain = domain
        self.nodes = nodes
        self.triangles = triangles
        self.boundary_edges = boundary_edges
        self.boundary_tags = boundary_tags
        self.resolution = resolution
        for arr in (self.nodes, self.triangles, self.boundary_edges):
            arr.setflags(write=False)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def node_id(self, i, j):
        nx = self.resolution[0]
        return j * (nx + 1) + i

    @cached_property
    def tri_geometry(self):
        """(b, c, area) arrays of the P1 gradient coefficients per triangle."""
        p = self.triangles
        x = self.nodes[:, 0][p]
        y = self.nodes[:, 1][p]
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        area2 = x[:, 0] * b[:, 0] + x[:, 1] * b[:, 1] + x[:, 2] * b[:, 2]
        return b, c, 0.5 * area2

    @cached_property
    def areas(self):
        return self.tri_geometry[2]

    @cached_property
    def stiffness(self):
        """Assembled P1 Laplace stiffness matrix (CSR)."""
        rows, cols, vals = _kernels.assemble_p1_triplets(
            np.ascontiguousarray(self.nodes[:, 0]),
            np.ascontiguousarray(self.nodes[:, 1]),
            self.triangles,
        )
        n = self.n_nodes
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        mat.indices = mat.indices.astype(np.int32, copy=False)
        mat.indptr = mat.indptr.astype(np.int32, copy=False)
        return mat

    @cached_property
    def mass(self):
        """Consistent P1 mass matrix (CSR), used for volumetric L2 norms."""
        p = self.triangles
        a = self.areas
        local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
        vals = a[:, None, None] * local[None, :, :]
        rows = np.repeat(p, 3, axis=1).ravel()
        cols = np.tile(p, (1, 3)).ravel()
        n = self.n_nodes
        return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    @cached_property
    def quadrature(self):
        """7-point rule per triangle: points (ntri, 7, 2), weights (ntri, 7)."""
        p = self.triangles
        xy = self.nodes[p]  # (ntri, 3, 2)
        pts = np.einsum("qk,tkd->tqd", _TRI7_BARY, xy)
        w = self.areas[:, None] * _TRI7_W[None, :]
        return pts, w

    def boundary_nodes(self, tag):
        """Node ids of the tagged segment, ordered along the boundary."""
        nx, ny = self.resolution
        if tag == TAG_TOP:
            return np.array([self.node_id(i, ny) for i in range(nx + 1)], dtype=np.int32)
        if tag == TAG_BOTTOM:
            return np.array([self.node_id(i, 0) for i in range(nx + 1)], dtype=np.int32)
        if tag == TAG_WALL_LEFT:
            return np.array([self.node_id(0, j) for j in range(ny + 1)], dtype=np.int32)
        if tag == TAG_WALL_RIGHT:
            return np.array([self.node_id(nx, j) for j in range(ny + 1)], dtype=np.int32)
        raise ConfigurationError(f"unknown boundary tag: {tag!r}")

    def boundary_lengths(self, tag):
        """Segment lengths along the tagged boundary polyline."""
        ids = self.boundary_nodes(tag)
        pts = self.nodes[ids]
        return np.sqrt(((pts[1:] - pts[:-1]) ** 2).sum(axis=1))

    def lumped_boundary_weights(self, tag):
        """Trapezoidal arclength weights per node of the tagged segment."""
        seg = self.boundary_lengths(tag)
        w = np.zeros(len(seg) + 1)
        w[:-1] += 0.5 * seg
        w[1:] += 0.5 * seg
        return w

    @cached_property
    def all_boundary_node_ids(self):
        ids = np.concatenate([self.boundary_nodes(t) for t in ALL_TAGS])
        return np.unique(ids)

    # -- point location and interpolation ------------------------------------

    def locate(self, points, tol=1e-9, clamp_tol=0.05):
        """Containing triangle and barycentric coordinates for each point.

        Uses the sigma map for an O(1) cell guess, then searches a small
        neighborhood. Points slightly outside the mesh footprint (within
        clamp_tol in barycentric units, e.g. in the sliver between a curved
        bottom and its chord polyline) are clamped to the nearest candidate
        triangle; points farther out raise GeometryError.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        npts = pts.shape[0]
        nx, ny = self.resolution
        L = self.domain.width
        xg = self.nodes[: nx + 1, 0]
        yb = self.nodes[self.boundary_nodes(TAG_BOTTOM), 1]
        yt = self.nodes[self.boundary_nodes(TAG_TOP), 1]
        x = pts[:, 0]
        y = pts[:, 1]
        b_h = np.interp(x, xg, yb)
        t_h = np.interp(x, xg, yt)
        s = (y - b_h) / np.maximum(t_h - b_h, 1e-300)
        ci = np.clip((x / L * nx).astype(int), 0, nx - 1)
        cj = np.clip((s * ny).astype(int), 0, ny - 1)

        tri_idx = np.full(npts, -1, dtype=np.int64)
        bary = np.zeros((npts, 3))
        best_min = np.full(npts, -np.inf)
        best_tri = np.zeros(npts, dtype=np.int64)
        best_bary = np.zeros((npts, 3))
        unresolved = np.arange(npts)
        for di, dj in _RING_OFFSETS:
            if len(unresolved) == 0:
                break
            ii = np.clip(ci[unresolved] + di, 0, nx - 1)
            jj = np.clip(cj[unresolved] + dj, 0, ny - 1)
            cell = jj * nx + ii
            for half in (0, 1):
                if len(unresolved) == 0:
                    break
                t = 2 * cell + half
                lam = self._bary(t, pts[unresolved])
                lam_min = lam.min(axis=1)
                better = lam_min > best_min[unresolved]
                if better.any():
                    upd = unresolved[better]
                    best_min[upd] = lam_min[better]
                    best_tri[upd] = t[better]
                    best_bary[upd] = lam[better]
                ok = lam_min >= -tol
                if ok.any():
                    hit = unresolved[ok]
                    tri_idx[hit] = t[ok]
                    bary[hit] = np.clip(lam[ok], 0.0, 1.0)
                    unresolved = unresolved[~ok]
                    cell = cell[~ok]
        if len(unresolved):
            near = best_min[unresolved] >= -clamp_tol
            hit = unresolved[near]
            tri_idx[hit] = best_tri[hit]
            bary[hit] = np.clip(best_bary[hit], 0.0, 1.0)
            unresolved = unresolved[~near]
        if len(unresolved):
            p = pts[unresolved[0]]
            raise GeometryError(
                f"point ({p[0]:g}, {p[1]:g}) lies outside the mesh footprint"
            )
        bary /= bary.sum(axis=1, keepdims=True)
        return tri_idx, bary

    def _bary(self, tri_ids, pts):
        b, c, area = self.tri_geometry
        p = self.triangles[tri_ids]
        lam = np.empty((len(tri_ids), 3))
        x = pts[:, 0]
        y = pts[:, 1]
        for k in range(3):
            xk = self.nodes[p[:, k], 0]
            yk = self.nodes[p[:, k], 1]
            # lam_k is affine with gradient (b_k, c_k)/(2A) and value 1 at vertex k
            lam[:, k] = 1.0 + (b[tri_ids, k] * (x - xk) + c[tri_ids, k] * (y - yk)) / (
                2.0 * area[tri_ids]
            )
        return lam

    def interpolate(self, values, points):
        """P1 interpolation of nodal values at arbitrary points."""
        tri_idx, bary = self.locate(points)
        p = self.triangles[tri_idx]
        return np.einsum("pk,pk->p", bary, values[p])

    def triangle_gradients(self, values):
        """Constant gradient (ntri, 2) of a P1 field per triangle."""
        b, c, area = self.tri_geometry
        p = self.triangles
        v = values[p]
        gx = (v * b).sum(axis=1) / (2.0 * area)
        gy = (v * c).sum(axis=1) / (2.0 * area)
        return np.stack([gx, gy], axis=1)

    def nodal_gradient(self, values):
        """Second-order recovered gradient at the nodes (n, 2).

        Differentiates along the structured (xi, s) grid lines (centered
        stencils inside, one-sided 3-point stencils at the boundary rows and
        columns) and inverts the sigma-map metric. Nodal superconvergence of
        the P1 solution makes this O(h^2) up to metric kinks.
        """
        nx, ny = self.resolution
        shape = (ny + 1, nx + 1)
        v = values.reshape(shape)
        y = self.nodes[:, 1].reshape(shape)
        dxi = self.domain.width / nx
        ds = 1.0 / ny
        v_xi = _structured_diff(v, axis=1) / dxi
        v_s = _structured_diff(v, axis=0) / ds
        y_xi = _structured_diff(y, axis=1) / dxi
        y_s = _structured_diff(y, axis=0) / ds
        gy = v_s / y_s
        gx = v_xi - gy * y_xi
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def gradient_at(self, values, points, recovered=True):
        """Gradient of a P1 field at arbitrary points.

        recovered=True interpolates the area-averaged nodal gradient (smoother,
        superconvergent in the interior); recovered=False returns the raw
        per-triangle constant.
        """
        if recovered:
            ng = self.nodal_gradient(values)
            tri_idx, bary = self.locate(points)
            p = self.triangles[tri_idx]
            gx = np.einsum("pk,pk->p", bary, ng[:, 0][p])
            gy = np.einsum("pk,pk->p", bary, ng[:, 1][p])
            return np.stack([gx, gy], axis=1)
        tri_idx, _ = self.locate(points)
        return self.triangle_gradients(values)[tri_idx]

    def export_tables(self):
        """Plain-text node/triangle/edge-tag tables."""
        lines = [f"# nodes {self.n_nodes}", "# x y"]
        lines += [f"{p[0]:.17g} {p[1]:.17g}" for p in self.nodes]
        lines += [f"# triangles {self.n_triangles}", "# n0 n1 n2"]
        lines += [f"{t[0]} {t[1]} {t[2]}" for t in self.triangles]
        lines += [f"# boundary_edges {len(self.boundary_edges)}", "# n0 n1 tag"]
        lines += [
            f"{e[0]} {e[1]} {tag}"
            for e, tag in zip(self.boundary_edges, self.boundary_tags)
        ]
        return "\n".join(lines) + "\n"


def _structured_diff(v, axis):
    """Second-order first derivative along one grid axis (unit spacing)."""
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = 0.5 * (v[2:] - v[:-2])
    if v.shape[0] >= 3:
        out[0] = -1.5 * v[0] + 2.0 * v[1] - 0.5 * v[2]
        out[-1] = 1.5 * v[-1] - 2.0 * v[-2] + 0.5 * v[-3]
    else:
        out[0] = v[1] - v[0]
        out[-1] = v[-1] - v[-2]
    return np.moveaxis(out, 0, axis)


def build_mesh(domain: FluidDomain, nx: int, ny: int) -> Mesh:
    """Structured sigma-mapped triangulation with nx x ny cells."""
    if nx < 1 or ny < 1:
        raise ConfigurationError(f"nx and ny must be at least 1, got ({nx}, {ny})")
    L = domain.width
    xg = np.linspace(0.0, L, nx + 1)
    yb = domain.bottom.value(xg)
    yt = domain.surface.value(xg)
    if np.any(yt - yb < domain.min_gap * (1.0 - 1e-12)):
        raise ConfigurationError("surface does not clear the bottom at a grid column")
    s = np.linspace(0.0, 1.0, ny + 1)
    X = np.tile(xg, ny + 1)
    Y = (yb[None, :] + s[:, None] * (yt - yb)[None, :]).ravel()
    nodes = np.stack([X, Y], axis=1)

    def nid(i, j):
        return j * (nx + 1) + i

    tris = np.empty((2 * nx * ny, 3), dtype=np.int32)
    t = 0
    for j in range(ny):
        for i in range(nx):
            n00 = nid(i, j)
            n10 = nid(i + 1, j)
            n01 = nid(i, j + 1)
            n11 = nid(i + 1, j + 1)
            tris[t] = (n00, n10, n11)
            tris[t + 1] = (n00, n11, n01)
            t += 2

    edges = []
    tags = []
    for i in range(nx):
        edges.append((nid(i, 0), nid(i + 1, 0)))
        tags.append(TAG_BOTTOM)
    for i in range(nx):
        edges.append((nid(i, ny), nid(i + 1, ny)))
        tags.append(TAG_TOP)
    for j in range(ny):
        edges.append((nid(0, j), nid(0, j + 1)))
        tags.append(TAG_WALL_LEFT)
    for j in range(ny):
        edges.append((nid(nx, j), nid(nx, j + 1)))
        tags.append(TAG_WALL_RIGHT)

    mesh = Mesh(
        domain=domain,
        nodes=nodes,
        triangles=tris,
        boundary_edges=np.array(edges, dtype=np.int32),
        boundary_tags=list(tags),
        resolution=(nx, ny),
    )
    if np.any(mesh.areas <= 0.0):
        raise ConfigurationError("mesh has non-positive triangle areas")
    return mesh
