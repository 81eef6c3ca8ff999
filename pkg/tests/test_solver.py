import numpy as np
import pytest

from bathysize import oracle
from bathysize.errors import ConfigurationError, SingularSystemError, StateError
from bathysize.geometry import CavityDescription, FluidDomain, Profile
from bathysize.mesh import TAG_BOTTOM, TAG_TOP, build_mesh
from bathysize.solver import (
    ScalarField,
    boundary_flux,
    energy,
    field_to_csv,
    solve_potential,
    surface_pairing,
    surface_trace,
    total_boundary_raw_flux,
)


def strip_mesh(nx=64, ny=64):
    dom = FluidDomain(width=1.0, bottom=Profile.flat(0.0), surface=Profile.flat(1.0))
    return build_mesh(dom, nx, ny)


def bump_mesh(a=0.1, nx=64, ny=32):
    dom = FluidDomain(width=1.0, bottom=Profile.bump(0.0, a, 0.5, 0.25),
                      surface=Profile.flat(1.0))
    return build_mesh(dom, nx, ny)


@pytest.fixture(scope="module")
def strip64():
    return strip_mesh()


@pytest.fixture(scope="module")
def mode1_field(strip64):
    psi = surface_trace(strip64, oracle.strip_mode(1))
    return psi, solve_potential(strip64, psi)


class TestSolve:
    def test_constant_data_gives_constant_field(self, strip64):
        psi = surface_trace(strip64, lambda x: np.full_like(x, 3.0))
        f = solve_potential(strip64, psi, backend="direct")
        assert np.allclose(f.values, 3.0, atol=1e-12)
        q = boundary_flux(f, TAG_TOP)
        assert np.abs(q.values).max() < 1e-9

    def test_mode1_oracle_nodal_error(self, strip64, mode1_field):
        _, f = mode1_field
        exact = oracle.strip_mode_potential(1)(strip64.nodes[:, 0], strip64.nodes[:, 1])
        assert np.abs(f.values - exact).max() < 2e-4

    def test_linear_datum_has_positive_energy(self, strip64):
        psi = surface_trace(strip64, lambda x: x)
        f = solve_potential(strip64, psi)
        assert energy(f) > 0.1

    def test_solver_tolerance_honored(self, mode1_field):
        _, f = mode1_field
        assert f.solved
        assert f.residual <= 1e-10

    def test_cg_and_direct_agree(self, strip64):
        psi = surface_trace(strip64, oracle.strip_mode(2))
        f_cg = solve_potential(strip64, psi, backend="cg")
        f_lu = solve_potential(strip64, psi, backend="direct")
        assert np.abs(f_cg.values - f_lu.values).max() < 1e-9

    def test_empty_dirichlet_set_is_singular(self, strip64):
        psi = surface_trace(strip64, oracle.strip_mode(1))
        with pytest.raises(SingularSystemError):
            solve_potential(strip64, psi, tags=())

    def test_trace_mesh_mismatch(self, strip64):
        other = strip_mesh(32, 32)
        psi = surface_trace(other, oracle.strip_mode(1))
        with pytest.raises(ConfigurationError):
            solve_potential(strip64, psi)

    def test_nonconvergence_carries_residual(self, strip64):
        from bathysize.errors import NumericalError

        psi = surface_trace(strip64, oracle.strip_mode(1))
        with pytest.raises(NumericalError) as err:
            solve_potential(strip64, psi, backend="cg", maxiter=2)
        assert err.value.residual is not None and err.value.residual > 0

    def test_field_length_validated(self, strip64):
        with pytest.raises(ConfigurationError):
            ScalarField(mesh=strip64, values=np.zeros(3))

    def test_maximum_principle(self, strip64):
        for mesh in (strip64, bump_mesh(0.1)):
            psi = surface_trace(mesh, oracle.strip_mode(1))
            f = solve_potential(mesh, psi)
            overshoot = max(
                f.values.max() - psi.values.max(),
                psi.values.min() - f.values.min(),
            )
            assert overshoot <= 1e-9


class TestFlux:
    def test_mode_flux_density_oracle(self, strip64, mode1_field):
        _, f = mode1_field
        q = boundary_flux(f, TAG_TOP)
        qe = oracle.strip_mode_flux_density(1)(q.x)
        err = np.sqrt(
            float((q.weights * (q.values - qe) ** 2).sum())
            / float((q.weights * qe ** 2).sum())
        )
        assert err < 5e-4

    def test_total_raw_flux_vanishes(self, mode1_field):
        _, f = mode1_field
        assert abs(total_boundary_raw_flux(f)) <= 1e-10 * max(1.0, energy(f))

    def test_total_raw_flux_vanishes_on_bump(self):
        mesh = bump_mesh(0.15)
        f = solve_potential(mesh, surface_trace(mesh, oracle.strip_mode(2)))
        assert abs(total_boundary_raw_flux(f)) <= 1e-10 * max(1.0, energy(f))

    def test_unsolved_field_raises(self, strip64):
        f = ScalarField(mesh=strip64, values=np.zeros(strip64.n_nodes))
        with pytest.raises(StateError):
            boundary_flux(f, TAG_TOP)

    def test_bottom_flux_of_mode_is_weakly_zero(self, mode1_field):
        _, f = mode1_field
        q = boundary_flux(f, TAG_BOTTOM, form="raw")
        # interior bottom nodes carry only solver residual
        assert np.abs(q.values[1:-1]).max() < 1e-9

    def test_top_flux_has_zero_mean(self, mode1_field):
        # the divergence theorem forces the surface flux to integrate to zero
        _, f = mode1_field
        q = boundary_flux(f, TAG_TOP, form="raw")
        assert abs(q.values.sum()) < 1e-9


class TestEnergyAndPairing:
    def test_constant_energy_zero(self, strip64):
        f = ScalarField(mesh=strip64, values=np.full(strip64.n_nodes, 2.0))
        assert energy(f) == 0.0

    def test_mode1_energy_oracle(self, mode1_field):
        _, f = mode1_field
        assert energy(f) == pytest.approx(oracle.strip_mode_energy(1), abs=1e-3)

    def test_energy_identity(self, mode1_field):
        psi, f = mode1_field
        w = surface_pairing(psi, boundary_flux(f, TAG_TOP))
        e = energy(f)
        assert abs(e - w) <= 1e-8 * e

    def test_energy_split_additivity(self, mode1_field):
        _, f = mode1_field
        cav = CavityDescription(lower=Profile.flat(0.0), upper=Profile.flat(0.35))
        e = energy(f)
        assert energy(f, cav) + energy(f, cav, complement=True) == pytest.approx(e, abs=1e-10)

    def test_pairing_symmetric_and_zero(self, mode1_field):
        psi, f = mode1_field
        q = boundary_flux(f, TAG_TOP)
        assert surface_pairing(psi, q) == surface_pairing(q, psi)
        zero = psi.with_values(np.zeros_like(psi.values))
        assert surface_pairing(psi, zero) == 0.0

    def test_pairing_mode1_oracle(self, mode1_field):
        # int cos^2(pi x) dx * pi * tanh(pi) = pi * tanh(pi) / 2
        psi, f = mode1_field
        w = surface_pairing(psi, boundary_flux(f, TAG_TOP))
        assert w == pytest.approx(np.pi * np.tanh(np.pi) / 2.0, abs=1e-3)

    def test_pairing_node_mismatch(self, strip64, mode1_field):
        psi, _ = mode1_field
        other = strip_mesh(32, 32)
        with pytest.raises(ConfigurationError):
            surface_pairing(psi, surface_trace(other, oracle.strip_mode(1)))

    def test_field_csv_header(self, mode1_field):
        _, f = mode1_field
        text = field_to_csv(f)
        assert text.startswith("x,y,phi\n")
        assert len(text.strip().split("\n")) == f.mesh.n_nodes + 1
