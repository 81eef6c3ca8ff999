import numpy as np
import pytest

from bathysize.errors import ConfigurationError, GeometryError
from bathysize.geometry import CavityDescription, FluidDomain, Profile, region_measure
from bathysize.mesh import (
    ALL_TAGS,
    TAG_BOTTOM,
    TAG_TOP,
    TAG_WALL_LEFT,
    TAG_WALL_RIGHT,
    build_mesh,
)


def unit_square():
    return FluidDomain(width=1.0, bottom=Profile.flat(0.0), surface=Profile.flat(1.0))


def bump_domain(a=0.2):
    return FluidDomain(width=1.0, bottom=Profile.bump(0.0, a, 0.5, 0.25),
                       surface=Profile.flat(1.0))


class TestBuildMesh:
    def test_unit_square_1x1_counts(self):
        m = build_mesh(unit_square(), 1, 1)
        assert m.n_nodes == 4
        assert m.n_triangles == 2
        assert len(m.boundary_edges) == 4

    def test_unit_square_2x2_counts(self):
        m = build_mesh(unit_square(), 2, 2)
        assert m.n_nodes == 9
        assert m.n_triangles == 8

    def test_positive_areas_and_area_sum(self):
        m = build_mesh(bump_domain(0.2), 64, 32)
        assert np.all(m.areas > 0.0)
        # triangle area sum equals the domain area of the piecewise-linear
        # interpolant of the bump, computed independently by quadrature
        xs = np.linspace(0, 1, 65)
        pwl = Profile.piecewise_linear(list(zip(xs, bump_domain(0.2).bottom.value(xs))))
        plus, _ = region_measure(CavityDescription(lower=Profile.flat(0.0), upper=pwl))
        assert m.areas.sum() == pytest.approx(1.0 - plus, abs=1e-10)
        # and the smooth-bump area 1 - a*w up to the geometry error
        assert m.areas.sum() == pytest.approx(1.0 - 0.05, abs=1e-3)

    def test_tags_partition_boundary(self):
        m = build_mesh(unit_square(), 4, 3)
        counts = {t: 0 for t in ALL_TAGS}
        for tag in m.boundary_tags:
            counts[tag] += 1
        assert counts[TAG_TOP] == 4 and counts[TAG_BOTTOM] == 4
        assert counts[TAG_WALL_LEFT] == 3 and counts[TAG_WALL_RIGHT] == 3

    def test_top_nodes_on_surface(self):
        m = build_mesh(bump_domain(), 32, 16)
        top = m.boundary_nodes(TAG_TOP)
        assert np.allclose(m.nodes[top, 1], 1.0, atol=1e-12)

    def test_bad_resolution(self):
        with pytest.raises(ConfigurationError):
            build_mesh(unit_square(), 0, 4)

    def test_boundary_weights_sum_to_arclength(self):
        m = build_mesh(bump_domain(), 32, 16)
        w = m.lumped_boundary_weights(TAG_BOTTOM)
        ids = m.boundary_nodes(TAG_BOTTOM)
        pts = m.nodes[ids]
        arclen = np.sqrt(((pts[1:] - pts[:-1]) ** 2).sum(axis=1)).sum()
        assert w.sum() == pytest.approx(arclen, rel=1e-14)
        assert np.all(w > 0)

    def test_quadrature_weights_sum_to_areas(self):
        m = build_mesh(bump_domain(), 16, 8)
        _, w = m.quadrature
        assert np.allclose(w.sum(axis=1), m.areas, rtol=1e-13)


class TestInterpolation:
    def test_p1_reproduces_linears(self):
        m = build_mesh(bump_domain(), 32, 16)
        vals = 1.0 + 2.0 * m.nodes[:, 0] - 0.5 * m.nodes[:, 1]
        rng = np.random.default_rng(3)
        xs = rng.uniform(0.05, 0.95, 50)
        ys = np.array([
            0.5 * (m.domain.bottom.value(x) + 1.0) for x in xs
        ])
        pts = np.stack([xs, ys], axis=1)
        out = m.interpolate(vals, pts)
        assert np.allclose(out, 1.0 + 2.0 * xs - 0.5 * ys, atol=1e-12)

    def test_gradient_of_linear_field(self):
        m = build_mesh(bump_domain(), 32, 16)
        vals = 3.0 * m.nodes[:, 0] + 4.0 * m.nodes[:, 1]
        g = m.triangle_gradients(vals)
        assert np.allclose(g[:, 0], 3.0, atol=1e-11)
        assert np.allclose(g[:, 1], 4.0, atol=1e-11)
        ng = m.nodal_gradient(vals)
        assert np.allclose(ng[:, 0], 3.0, atol=1e-10)
        assert np.allclose(ng[:, 1], 4.0, atol=1e-10)

    def test_outside_point_raises(self):
        m = build_mesh(unit_square(), 8, 8)
        with pytest.raises(GeometryError):
            m.locate(np.array([[0.5, 1.5]]))
        with pytest.raises(GeometryError):
            m.locate(np.array([[-0.3, 0.5]]))

    def test_boundary_points_clamp(self):
        m = build_mesh(bump_domain(), 16, 8)
        # points exactly on the top boundary and a hair outside
        pts = np.array([[0.5, 1.0], [0.25, 1.0 + 1e-12]])
        tri, bary = m.locate(pts)
        assert np.all(tri >= 0)
        assert np.all(bary >= 0.0)


class TestExport:
    def test_tables_roundtrip_counts(self):
        m = build_mesh(unit_square(), 3, 2)
        text = m.export_tables()
        assert f"# nodes {m.n_nodes}" in text
        assert f"# triangles {m.n_triangles}" in text
        assert f"# boundary_edges {len(m.boundary_edges)}" in text
        assert text.count("WALL_LEFT") == 2
