"""Boundary measurement functionals and identity residuals.

Given two bottom candidates with a common free surface, the toolkit solves
the two potential problems, recovers the surface fluxes, and evaluates

  * the surface pairings W_ij = sum_k w_k psi_i(x_k) q_j(x_k),
  * the lower functional (quotient of the squared cross-pairing difference),
  * the upper functional (energy numerator over the reference pairing),
  * the two-sided exact identities tying those surface quantities to
    volumetric energies and to a pairing along the upper bottom curve,
  * the crossing-bottom (symmetric difference) variants,
  * partial-window discrepancy norms,
  * interior-ball energy ratios and Poincare-type ratios.

Ordered-bottom conventions: slot 0 is the deeper reference problem, slot 1
the shallower comparison problem; for crossing bottoms the two slots are the
two domains and the windowing machinery is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateCavityError,
    DegenerateDataError,
    GeometryError,
)
from .geometry import CavityDescription, region_measure
from .mesh import TAG_BOTTOM, TAG_TOP, Mesh
from .solver import (
    ScalarField,
    SurfaceTrace,
    boundary_flux,
    energy,
    solve_potential,
    surface_pairing,
    surface_trace,
)

__all__ = [
    "MeasurementSet",
    "SizeEstimateReport",
    "measurements",
    "identity_residuals",
    "caseI_lower",
    "caseI_upper",
    "caseII_lower",
    "caseII_upper_measurables",
    "caseIII_upper_measurables",
    "smallness_propagation_check",
    "poincare_check",
    "log_stability_curve",
    "CaseIUpperResult",
    "CaseIIUpperResult",
    "CaseIIIResult",
    "IdentityResiduals",
    "SmallnessResult",
    "PoincareResult",
]

_TINY = 1e-300


@dataclass(frozen=True)
class MeasurementSet:
    """Surface Dirichlet and flux traces of both problems plus the window.

    All four traces share the TOP node set. The window [x_a, x_b] restricts
    partial-measurement norms; the full interval corresponds to whole-surface
    measurements.
    """

    psi0: SurfaceTrace
    psi1: SurfaceTrace
    flux0: SurfaceTrace
    flux1: SurfaceTrace
    window: tuple
    field0: ScalarField = None
    field1: ScalarField = None

    def __post_init__(self):
        for t in (self.psi1, self.flux0, self.flux1):
            if not self.psi0.same_nodes(t):
                raise ConfigurationError("measurement traces live on different node sets")
        xa, xb = self.window
        lo, hi = self.psi0.x[0], self.psi0.x[-1]
        if not (lo - 1e-12 <= xa < xb <= hi + 1e-12):
            raise ConfigurationError(
                f"window [{xa:g}, {xb:g}] must satisfy {lo:g} <= x_a < x_b <= {hi:g}"
            )

    def pairings(self):
        """(W00, W01, W10, W11) with W_ij = pairing(psi_i, flux_j)."""
        return (
            surface_pairing(self.psi0, self.flux0),
            surface_pairing(self.psi0, self.flux1),
            surface_pairing(self.psi1, self.flux0),
            surface_pairing(self.psi1, self.flux1),
        )


def measurements(
    mesh0: Mesh,
    mesh1: Mesh,
    psi0,
    psi1,
    window=None,
    backend="cg",
    rtol=1e-12,
) -> MeasurementSet:
    """Solve both potential problems and package the surface traces.

    The meshes must share the TOP trace geometry (same surface profile and
    nx). psi0/psi1 may be SurfaceTraces, arrays on the TOP nodes, or
    callables of x.
    """
    top0 = mesh0.nodes[mesh0.boundary_nodes(TAG_TOP)]
    top1 = mesh1.nodes[mesh1.boundary_nodes(TAG_TOP)]
    if top0.shape != top1.shape or not np.allclose(top0, top1, rtol=0.0, atol=1e-12):
        raise ConfigurationError(
            "meshes do not share the TOP trace geometry (surface profile and nx must match)"
        )
    if not isinstance(psi0, SurfaceTrace):
        psi0 = surface_trace(mesh0, psi0)
    if not isinstance(psi1, SurfaceTrace):
        psi1 = surface_trace(mesh1, psi1)
    f0 = solve_potential(mesh0, psi0, backend=backend, rtol=rtol)
    f1 = solve_potential(mesh1, psi1, backend=backend, rtol=rtol)
    q0 = boundary_flux(f0, TAG_TOP)
    q1 = boundary_flux(f1, TAG_TOP)
    if window is None:
        window = (float(psi0.x[0]), float(psi0.x[-1]))
    return MeasurementSet(
        psi0=psi0, psi1=psi1, flux0=q0, flux1=q1,
        window=(float(window[0]), float(window[1])),
        field0=f0, field1=f1,
    )


def _require_full_window(ms: MeasurementSet, op: str):
    xa, xb = ms.window
    lo, hi = ms.psi0.x[0], ms.psi0.x[-1]
    span = hi - lo
    if abs(xa - lo) > 1e-12 * span or abs(xb - hi) > 1e-12 * span:
        raise ConfigurationError(f"{op} requires the full measurement window")


def _require_positive(name, value, scale):
    if value <= 1e-14 * max(scale, 1.0):
        raise DegenerateDataError(
            f"{name} = {value:.3e} is not positive; surface data is too close to constant"
        )


def caseI_lower(ms: MeasurementSet) -> float:
    """Lower size functional: (W01 - W10)^2 / (W00 * W11).

    The numerator is the surface form of the pairing of the reference flux
    against the comparison potential along the upper bottom curve; it
    vanishes when cavity and data difference vanish.
    """
    _require_full_window(ms, "caseI_lower")
    w00, w01, w10, w11 = ms.pairings()
    scale = abs(w00) + abs(w11)
    _require_positive("W00", w00, scale)
    _require_positive("W11", w11, scale)
    num = w01 - w10
    return float(num * num / (w00 * w11))


@dataclass(frozen=True)
class CaseIUpperResult:
    value: float
    numerator: float


def caseI_upper(ms: MeasurementSet) -> CaseIUpperResult:
    """Upper size functional (W11 + W00 - 2*W01) / W00, numerator included.

    The numerator equals the sum of the two nonnegative energies of the
    exact identity (difference-field energy plus reference energy in the
    cavity), so it stays above -tol for consistent measurements.
    """
    _require_full_window(ms, "caseI_upper")
    w00, w01, w10, w11 = ms.pairings()
    _require_positive("W00", w00, abs(w00) + abs(w11))
    num = w11 + w00 - 2.0 * w01
    return CaseIUpperResult(value=float(num / w00), numerator=float(num))


def caseII_lower(ms: MeasurementSet) -> float:
    """Crossing-bottom lower functional: (W01 - W10)^2 / (W00^2 + W11^2).

    Slots 0/1 hold the two crossing-bottom problems; for ordered bottoms the
    numerator coincides with the caseI_lower numerator.
    """
    _require_full_window(ms, "caseII_lower")
    w00, w01, w10, w11 = ms.pairings()
    scale = abs(w00) + abs(w11)
    _require_positive("W00", w00, scale)
    _require_positive("W11", w11, scale)
    num = w01 - w10
    return float(num * num / (w00 * w00 + w11 * w11))


# -- exact identity checks -------------------------------------------------


def _bottom_polyline(mesh: Mesh):
    ids = mesh.boundary_nodes(TAG_BOTTOM)
    return ids, mesh.nodes[ids]


def _interface_pairing(
    curve_field: ScalarField,
    grad_field: ScalarField,
    grad_field2: ScalarField = None,
    where=None,
):
    """Line integral of (value of curve_field) * (normal derivative) along the
    bottom curve of curve_field's mesh, midpoint rule per segment.

    The normal points downward (outward for the domain above the curve). The
    normal derivative comes from grad_field's recovered gradient; if
    grad_field2 is given its own normal derivative is subtracted. `where`
    optionally masks segments by their midpoint x.
    """
    ids, pts = _bottom_polyline(curve_field.mesh)
    seg = pts[1:] - pts[:-1]
    ds = np.sqrt((seg ** 2).sum(axis=1))
    mid = 0.5 * (pts[1:] + pts[:-1])
    nrm = np.stack([seg[:, 1], -seg[:, 0]], axis=1) / ds[:, None]
    vals = curve_field.values[ids]
    vmid = 0.5 * (vals[1:] + vals[:-1])
    keep = np.ones(len(ds), dtype=bool) if where is None else where(mid[:, 0], mid[:, 1])
    if not keep.any():
        return 0.0
    g = grad_field.mesh.gradient_at(grad_field.values, mid[keep], recovered=True)
    dn = (g * nrm[keep]).sum(axis=1)
    if grad_field2 is not None:
        g2 = grad_field2.mesh.gradient_at(grad_field2.values, mid[keep], recovered=True)
        dn = dn - (g2 * nrm[keep]).sum(axis=1)
    return float((ds[keep] * vmid[keep] * dn).sum())


def _quad_values(mesh: Mesh, nodal):
    """P1 values at the mesh's own quadrature points, shaped (ntri, 7)."""
    return np.einsum("tqk,tk->tq", _bary_weights(mesh), nodal[mesh.triangles])


def _quad_recovered_gradient(mesh: Mesh, nodal):
    """Recovered gradient at the mesh's own quadrature points (ntri, 7, 2)."""
    ng = mesh.nodal_gradient(nodal)
    bw = _bary_weights(mesh)
    gx = np.einsum("tqk,tk->tq", bw, ng[:, 0][mesh.triangles])
    gy = np.einsum("tqk,tk->tq", bw, ng[:, 1][mesh.triangles])
    return np.stack([gx, gy], axis=2)


@dataclass(frozen=True)
class IdentityResiduals:
    """Both sides and residuals of the two exact surface/volume identities."""

    energy_lhs: float
    energy_rhs: float
    res_energy_abs: float
    res_energy_rel: float
    bottom_lhs: float
    bottom_rhs: float
    res_bottom_abs: float
    res_bottom_rel: float


def identity_residuals(
    ms: MeasurementSet,
    fields=None,
    cavity: CavityDescription = None,
) -> IdentityResiduals:
    """Discretization residuals of the two exact identities (ordered bottoms).

    Energy identity: difference-field energy on the shallow domain plus
    reference energy inside the cavity equals the upper numerator computed
    from surface traces alone.

    Bottom identity: twice the pairing of the reference normal flux against
    the comparison potential along the upper bottom equals a combination of
    surface pairings.

    Both residuals are reported absolute and relative to the surface side;
    they are pure discretization error and shrink under refinement.
    """
    f0, f1 = fields if fields is not None else (ms.field0, ms.field1)
    if f0 is None or f1 is None:
        raise ConfigurationError("identity_residuals needs both solved fields")
    if cavity is None:
        cavity = CavityDescription(
            lower=f0.mesh.domain.bottom, upper=f1.mesh.domain.bottom
        )
    plus, minus = region_measure(cavity)
    if minus > 1e-12 * max(plus, 1e-12):
        raise ConfigurationError(
            "identity residuals require ordered bottoms (empty negative part)"
        )
    w00, w01, w10, w11 = ms.pairings()

    # energy identity: difference field on the shallow mesh via nodal
    # interpolation of the reference potential, plus reference energy in the
    # cavity by membership quadrature
    interp0 = f0.mesh.interpolate(f0.values, f1.mesh.nodes)
    diff = ScalarField(mesh=f1.mesh, values=f1.values - interp0)
    e_diff = energy(diff)
    e_cav = energy(f0, subregion=cavity)
    lhs0 = e_diff + e_cav
    rhs0 = w11 + w00 - 2.0 * w01
    res0 = abs(lhs0 - rhs0)

    # bottom identity: (flux1 - flux0, psi0 + psi1) + (flux1 + flux0, psi0 - psi1)
    if plus == 0.0:
        # empty cavity: the upper-bottom curve IS the reference mesh's
        # Neumann boundary, where the consistent (weak) flux applies
        # directly and vanishes to solver tolerance
        ids0 = f0.mesh.boundary_nodes(TAG_BOTTOM)
        raw0 = (f0.mesh.stiffness @ f0.values)[ids0]
        ids1 = f1.mesh.boundary_nodes(TAG_BOTTOM)
        lhs1 = 2.0 * float(raw0 @ f1.values[ids1])
    else:
        lhs1 = 2.0 * _interface_pairing(f1, f0)
    sum_psi = ms.psi0.with_values(ms.psi0.values + ms.psi1.values)
    dif_psi = ms.psi0.with_values(ms.psi0.values - ms.psi1.values)
    dif_flux = ms.flux0.with_values(ms.flux1.values - ms.flux0.values)
    sum_flux = ms.flux0.with_values(ms.flux1.values + ms.flux0.values)
    rhs1 = surface_pairing(dif_flux, sum_psi) + surface_pairing(sum_flux, dif_psi)
    res1 = abs(lhs1 - rhs1)

    # relative residuals collapse to exact zeros for vanishing identities
    scale = max(abs(w00), abs(w11), 1e-14)
    rel0 = res0 / abs(rhs0) if res0 > 1e-10 * scale else 0.0
    rel1 = res1 / abs(rhs1) if res1 > 1e-10 * scale else 0.0
    return IdentityResiduals(
        energy_lhs=float(lhs0),
        energy_rhs=float(rhs0),
        res_energy_abs=float(res0),
        res_energy_rel=float(rel0),
        bottom_lhs=float(lhs1),
        bottom_rhs=float(rhs1),
        res_bottom_abs=float(res1),
        res_bottom_rel=float(rel1),
    )


@dataclass(frozen=True)
class CaseIIUpperResult:
    """Measurable pieces of the crossing-bottom upper estimate.

    The non-computable logarithmic factor is never evaluated; instead the
    energy decomposition identity is verified: energy_sum equals
    surface_term minus twice the interface pairing, up to discretization.
    """

    surface_term: float
    crossing_term_bound: float
    energy_sum: float
    interface_pairing: float
    residual_abs: float
    residual_rel: float


def _h1_norm(f: ScalarField) -> float:
    m = f.mesh.mass
    l2sq = float(f.values @ (m @ f.values))
    return float(np.sqrt(l2sq + energy(f)))


def _cross_membership_quad(mesh: Mesh, other_mesh: Mesh, below: bool):
    """Quadrature points/weights of `mesh` restricted by the other MESH's
    bottom polyline (the discrete footprint, not the smooth curve, so the
    restriction matches where the other field is actually defined)."""
    pts, w = mesh.quadrature
    x = pts[:, :, 0]
    y = pts[:, :, 1]
    ids = other_mesh.boundary_nodes(TAG_BOTTOM)
    env = np.interp(
        x.ravel(), other_mesh.nodes[ids, 0], other_mesh.nodes[ids, 1]
    ).reshape(x.shape)
    inside = (y < env) if below else (y >= env)
    return pts, w * inside


def caseII_upper_measurables(ms: MeasurementSet, fields=None) -> CaseIIUpperResult:
    """Crossing-bottom upper-estimate measurables plus identity verification.

    surface_term combines the two surface pairings of the decomposition;
    crossing_term_bound is the Cauchy-Schwarz bound of the interface term by
    H1 norms (comparison field over its domain, difference field over the
    common part). The energy decomposition residual quantifies how well the
    three volumetric energies match the surface term minus twice the
    interface pairing.
    """
    f1, f2 = fields if fields is not None else (ms.field0, ms.field1)
    if f1 is None or f2 is None:
        raise ConfigurationError("caseII_upper_measurables needs both solved fields")
    w00, w01, w10, w11 = ms.pairings()
    surface_term = w00 + w11 - 2.0 * w10

    # three-energy sum: common part uses the cross-interpolated difference
    pts1, w1 = _cross_membership_quad(f1.mesh, f2.mesh, below=False)
    g1 = _quad_recovered_gradient(f1.mesh, f1.values)
    sel = w1.ravel() > 0.0
    p_flat = pts1.reshape(-1, 2)[sel]
    g1_flat = g1.reshape(-1, 2)[sel]
    g2_flat = f2.mesh.gradient_at(f2.values, p_flat, recovered=True)
    gd2 = ((g1_flat - g2_flat) ** 2).sum(axis=1)
    e_common = float((w1.ravel()[sel] * gd2).sum())

    _, w1b = _cross_membership_quad(f1.mesh, f2.mesh, below=True)
    g1sq = (g1 ** 2).sum(axis=2)
    e_only1 = float((w1b * g1sq).sum())

    _, w2b = _cross_membership_quad(f2.mesh, f1.mesh, below=True)
    g2sq = (_quad_recovered_gradient(f2.mesh, f2.values) ** 2).sum(axis=2)
    e_only2 = float((w2b * g2sq).sum())

    energy_sum = e_common + e_only1 + e_only2

    # interface pairing along the second bottom where it rises above the
    # first mesh's bottom polyline (segment midpoints lie on the second's)
    ids1 = f1.mesh.boundary_nodes(TAG_BOTTOM)
    b1x = f1.mesh.nodes[ids1, 0]
    b1y = f1.mesh.nodes[ids1, 1]

    def _above(xm, ym):
        return ym > np.interp(xm, b1x, b1y) + 1e-14

    pair = _interface_pairing(f2, f1, grad_field2=f2, where=_above)

    residual = abs(energy_sum - surface_term + 2.0 * pair)
    scale = max(abs(surface_term), energy_sum, 1e-14 * max(abs(w00), abs(w11), 1.0))

    # ||phi1 - phi2||_{H1(common)} by quadrature on the slot-0 mesh
    v1 = _quad_values(f1.mesh, f1.values)
    v2 = f2.mesh.interpolate(f2.values, p_flat)
    vd2 = (v1.reshape(-1)[sel] - v2) ** 2
    h1_common = float(np.sqrt((w1.ravel()[sel] * vd2).sum() + e_common))
    bound = _h1_norm(f2) * h1_common

    return CaseIIUpperResult(
        surface_term=float(surface_term),
        crossing_term_bound=float(bound),
        energy_sum=float(energy_sum),
        interface_pairing=float(pair),
        residual_abs=float(residual),
        residual_rel=float(residual / scale),
    )


def _bary_weights(mesh: Mesh):
    """Barycentric weights of the 7-point rule, shaped (ntri, 7, 3)."""
    from .mesh import _TRI7_BARY

    return np.broadcast_to(_TRI7_BARY, (mesh.n_triangles, 7, 3))


@dataclass(frozen=True)
class CaseIIIResult:
    """Partial-window discrepancy norms and the field norm factors."""

    discrepancy_h1: float
    discrepancy_flux: float
    grad_h1_shallow: float
    h1_reference: float
    window: tuple
    n_window_nodes: int


def _window_segments(trace: SurfaceTrace, window):
    xa, xb = window
    mask = (trace.x >= xa - 1e-12) & (trace.x <= xb + 1e-12)
    if mask.sum() < 3:
        raise ConfigurationError(
            f"window [{xa:g}, {xb:g}] contains {int(mask.sum())} nodes; at least 3 required"
        )
    seg = mask[:-1] & mask[1:]
    return mask, seg


def caseIII_upper_measurables(ms: MeasurementSet) -> CaseIIIResult:
    """Windowed discrepancy norms consumed by the partial-measurement bound.

    Returns the discrete H1 norm (values plus arclength differences,
    trapezoid weights) of the Dirichlet discrepancy on the window, the L2
    norm of the flux discrepancy, and the two H1 field norm factors. The
    logarithmic modulus itself is only reported via log_stability_curve,
    never asserted.
    """
    mask, seg = _window_segments(ms.psi0, ms.window)
    ds = np.diff(ms.psi0.arclength)
    dpsi = ms.psi1.values - ms.psi0.values
    dflux = ms.flux1.values - ms.flux0.values

    def _l2sq(v):
        return float((0.5 * ds[seg] * (v[:-1][seg] ** 2 + v[1:][seg] ** 2)).sum())

    deriv = np.diff(dpsi) / ds
    h1sq = _l2sq(dpsi) + float((ds[seg] * deriv[seg] ** 2).sum())
    fluxsq = _l2sq(dflux)

    grad_h1 = _grad_h1_norm(ms.field1) if ms.field1 is not None else float("nan")
    ref_h1 = _h1_norm(ms.field0) if ms.field0 is not None else float("nan")
    return CaseIIIResult(
        discrepancy_h1=float(np.sqrt(h1sq)),
        discrepancy_flux=float(np.sqrt(fluxsq)),
        grad_h1_shallow=grad_h1,
        h1_reference=ref_h1,
        window=ms.window,
        n_window_nodes=int(mask.sum()),
    )


def _grad_h1_norm(f: ScalarField) -> float:
    """H1 norm of the gradient, with the recovered nodal gradient supplying
    the second-derivative part (P1 fields have none elementwise)."""
    e = energy(f)
    ng = f.mesh.nodal_gradient(f.values)
    e2 = energy(ScalarField(mesh=f.mesh, values=ng[:, 0].copy())) + energy(
        ScalarField(mesh=f.mesh, values=ng[:, 1].copy())
    )
    return float(np.sqrt(e + e2))


def log_stability_curve(delta: float, m_values, k: float = 0.5):
    """Hypothetical log-stability moduli [log(M/delta)]^-k over M values.

    Reported only: the constants M and k of the stability estimates are not
    constructive, so no assertion is ever made on these numbers.
    """
    out = []
    for m in m_values:
        if m <= delta or delta <= 0.0:
            out.append((float(m), float("nan")))
        else:
            out.append((float(m), float(np.log(m / delta) ** (-k))))
    return out


@dataclass(frozen=True)
class SmallnessResult:
    local_energy: float
    total_energy: float
    ratio: float
    degenerate: bool


def smallness_propagation_check(
    f: ScalarField, center, rho: float
) -> SmallnessResult:
    """Interior-ball energy fraction: int_{B_rho} |grad u|^2 / total energy.

    The ball must keep a three-rho clearance from the boundary (center at
    least 4*rho away), matching the interior condition of the propagation
    estimate. Constant fields report as degenerate.
    """
    if rho <= 0.0:
        raise ConfigurationError(f"ball radius must be positive, got {rho}")
    cx, cy = float(center[0]), float(center[1])
    d = _distance_to_boundary(f.mesh, cx, cy)
    if d < 4.0 * rho * (1.0 - 1e-9):
        raise GeometryError(
            f"ball center ({cx:g}, {cy:g}) is {d:g} from the boundary; "
            f"needs at least 4*rho = {4 * rho:g}"
        )
    pts, w = f.mesh.quadrature
    inside = ((pts[:, :, 0] - cx) ** 2 + (pts[:, :, 1] - cy) ** 2) < rho ** 2
    g2 = (f.mesh.triangle_gradients(f.values) ** 2).sum(axis=1)
    local = float((w * inside * g2[:, None]).sum())
    total = float(g2 @ f.mesh.areas)
    scale = float(np.max(np.abs(f.values))) if f.values.size else 0.0
    if total <= 1e-20 * max(1.0, scale * scale):
        # numerically constant field (solver noise only)
        return SmallnessResult(local, total, float("nan"), True)
    return SmallnessResult(local, total, local / total, False)


def _distance_to_boundary(mesh: Mesh, cx, cy):
    p = mesh.nodes[mesh.boundary_edges[:, 0]]
    q = mesh.nodes[mesh.boundary_edges[:, 1]]
    d = q - p
    t = np.clip(
        ((cx - p[:, 0]) * d[:, 0] + (cy - p[:, 1]) * d[:, 1])
        / np.maximum((d ** 2).sum(axis=1), _TINY),
        0.0,
        1.0,
    )
    proj = p + t[:, None] * d
    return float(np.sqrt((proj[:, 0] - cx) ** 2 + (proj[:, 1] - cy) ** 2).min())


@dataclass(frozen=True)
class PoincareResult:
    boundary_ratio: float
    bulk_ratio: float
    boundary_variance: float
    bulk_variance: float
    cavity_energy: float
    degenerate: bool


def poincare_check(
    cavity: CavityDescription, f: ScalarField, r: float = 1.0, samples: int = 1024
) -> PoincareResult:
    """Rayleigh-type ratios of the Poincare inequalities on the cavity.

    boundary_ratio = int_{dD} |u - mean|^2 / (r * int_D |grad u|^2)
    bulk_ratio     = int_D  |u - mean|^2 / (r^2 * int_D |grad u|^2)

    r is the user-supplied Lipschitz radius of the cavity boundary. Both
    ratios are invariant under adding constants to the field; a field with no
    energy in the cavity reports as degenerate.
    """
    plus, minus = region_measure(cavity)
    if plus + minus <= 0.0:
        raise DegenerateCavityError("cavity has zero area")
    if r <= 0.0:
        raise ConfigurationError(f"Lipschitz radius r must be positive, got {r}")
    pts, w = f.mesh.quadrature
    x = pts[:, :, 0].ravel()
    y = pts[:, :, 1].ravel()
    lo = cavity.lower.value(x)
    hi = cavity.upper.value(x)
    env_lo = np.minimum(lo, hi)
    env_hi = np.maximum(lo, hi)
    inside = ((y > env_lo) & (y <= env_hi)).reshape(w.shape)
    wq = w * inside
    vq = _quad_values(f.mesh, f.values)
    m0 = float(wq.sum())
    m1 = float((wq * vq).sum())
    m2 = float((wq * vq ** 2).sum())
    bulk_var = m2 - m1 * m1 / max(m0, _TINY)
    g2 = (f.mesh.triangle_gradients(f.values) ** 2).sum(axis=1)
    e_cav = float((wq * g2[:, None]).sum())

    # boundary line integrals over the cavity boundary polylines
    per_len = 0.0
    per_m1 = 0.0
    per_m2 = 0.0
    for xs, ys in _cavity_boundary_loops(cavity, samples):
        u = f.mesh.interpolate(f.values, np.stack([xs, ys], axis=1))
        ds = np.sqrt(np.diff(xs) ** 2 + np.diff(ys) ** 2)
        um = 0.5 * (u[1:] + u[:-1])
        um2 = 0.5 * (u[1:] ** 2 + u[:-1] ** 2)
        per_len += float(ds.sum())
        per_m1 += float((ds * um).sum())
        per_m2 += float((ds * um2).sum())
    bnd_var = per_m2 - per_m1 * per_m1 / max(per_len, _TINY)

    if e_cav <= 0.0:
        return PoincareResult(
            float("nan"), float("nan"), bnd_var, bulk_var, 0.0, True
        )
    return PoincareResult(
        boundary_ratio=float(bnd_var / (r * e_cav)),
        bulk_ratio=float(bulk_var / (r * r * e_cav)),
        boundary_variance=float(bnd_var),
        bulk_variance=float(bulk_var),
        cavity_energy=float(e_cav),
        degenerate=False,
    )


def _cavity_boundary_loops(cavity: CavityDescription, samples: int):
    """Closed boundary polylines (xs, ys) of each signed lobe of the cavity."""
    from .geometry import _smooth_spans

    spans = _smooth_spans(cavity, 0.0, cavity.width)
    loops = []
    for a, b in spans:
        xm = 0.5 * (a + b)
        d = cavity.difference(xm)
        if abs(d) <= 0.0:
            continue
        lo_p, hi_p = (cavity.lower, cavity.upper) if d > 0 else (cavity.upper, cavity.lower)
        xs = np.linspace(a, b, samples)
        bot = lo_p.value(xs)
        top = hi_p.value(xs)
        # bottom left-to-right, wall up, top right-to-left, wall down
        loop_x = np.concatenate([xs, [b], xs[::-1], [a]])
        loop_y = np.concatenate([bot, [top[-1]], top[::-1], [bot[0]]])
        loops.append((loop_x, loop_y))
    return loops


@dataclass(frozen=True)
class SizeEstimateReport:
    """One row of a size-estimate experiment."""

    case: str
    label: str
    datum: str
    nx: int
    ny: int
    area_plus: float
    area_minus: float
    eta_lower: float
    eta_upper: float
    upper_numerator: float
    w00: float
    w01: float
    w10: float
    w11: float
    res_energy_rel: float = float("nan")
    res_bottom_rel: float = float("nan")
    caseII_lower_value: float = float("nan")
    caseII_residual_rel: float = float("nan")
    window_summary: str = ""
    error: str = ""

    @property
    def area(self):
        return self.area_plus + self.area_minus

    CSV_COLUMNS = (
        "case,label,datum,nx,ny,area_plus,area_minus,area,"
        "eta_lower,eta_upper,upper_numerator,w00,w01,w10,w11,"
        "res_energy_rel,res_bottom_rel,caseII_lower,caseII_residual_rel,"
        "windows,error"
    )

    def to_csv_row(self) -> str:
        vals = [
            self.case, self.label, self.datum, str(self.nx), str(self.ny),
        ] + [
            f"{v:.12g}"
            for v in (
                self.area_plus, self.area_minus, self.area,
                self.eta_lower, self.eta_upper, self.upper_numerator,
                self.w00, self.w01, self.w10, self.w11,
                self.res_energy_rel, self.res_bottom_rel,
                self.caseII_lower_value, self.caseII_residual_rel,
            )
        ] + [self.window_summary, self.error]
        return ",".join(vals)

    def to_text(self) -> str:
        lines = [
            f"case {self.case}  [{self.label}]  datum={self.datum}  grid {self.nx}x{self.ny}",
            f"  |D| = {self.area:.6g} (positive {self.area_plus:.6g}, negative {self.area_minus:.6g})",
            f"  eta_lower = {self.eta_lower:.6g}   eta_upper = {self.eta_upper:.6g} "
            f"(numerator {self.upper_numerator:.6g})",
            f"  W00={self.w00:.6g} W01={self.w01:.6g} W10={self.w10:.6g} W11={self.w11:.6g}",
        ]
        if np.isfinite(self.res_energy_rel):
            lines.append(
                f"  identity residuals: energy {self.res_energy_rel:.3e}, "
                f"bottom {self.res_bottom_rel:.3e}"
            )
        if np.isfinite(self.caseII_lower_value):
            lines.append(
                f"  crossing: eta_lower {self.caseII_lower_value:.6g}, "
                f"decomposition residual {self.caseII_residual_rel:.3e}"
            )
        if self.error:
            lines.append(f"  ERROR: {self.error}")
        return "\n".join(lines)
