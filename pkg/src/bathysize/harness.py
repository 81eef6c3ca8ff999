"""Experiment campaigns: bottom-family sweeps, constant fitting, convergence.

A sweep solves the two potential problems for every (parameter, datum,
resolution) combination of a plan, evaluates the size functionals and
identity residuals, and collects one report row per combination. Extremal
ratios fitted on a training subset give certified two-sided constants
C_lower * eta_lower <= |D| <= C_upper * eta_upper on that subset; held-out
rows count violations. Everything is deterministic: rerunning a plan gives
bit-identical tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FitError, ToolkitError
from .geometry import CavityDescription, FluidDomain, Profile, region_measure
from .mesh import TAG_BOTTOM, TAG_TOP, build_mesh
from .oracle import (
    strip_mode,
    strip_mode_flux_density,
    strip_mode_gradient,
)
from .solver import boundary_flux, solve_potential, surface_trace
from .functionals import (
    SizeEstimateReport,
    caseI_lower,
    caseI_upper,
    identity_residuals,
    measurements,
)

__all__ = [
    "SweepPlan",
    "FitResult",
    "run_sweep",
    "fit_constants",
    "convergence_study",
    "make_bottom",
    "make_datum",
    "DATUM_NAMES",
]

DATUM_NAMES = ("mode1", "mode2", "mode3", "mode4", "gaussian")


def make_datum(name: str, width: float = 1.0):
    """Surface Dirichlet datum by name: cosine modes or a mean-centered
    Gaussian of width L/10 at the channel center."""
    if name.startswith("mode"):
        try:
            k = int(name[4:])
        except ValueError:
            raise ConfigurationError(f"unknown datum name: {name!r}")
        if k < 1:
            raise ConfigurationError(f"datum mode index must be >= 1, got {k}")
        return strip_mode(k, width)
    if name == "gaussian":
        s = width / 10.0

        def g(x):
            x = np.asarray(x, dtype=float)
            return np.exp(-((x - 0.5 * width) ** 2) / s ** 2)

        # subtract the interval mean so the datum probes nonconstant response
        xs = np.linspace(0.0, width, 4097)
        mean = float(np.trapezoid(g(xs), xs) / width)
        return lambda x: g(x) - mean
    raise ConfigurationError(f"unknown datum name: {name!r}")


def make_bottom(family: str, amplitude: float, center=0.5, halfwidth=0.25,
                base=0.0, width=1.0, sign=1) -> Profile:
    """Bottom profile families used by sweeps."""
    if family == "flat":
        return Profile.flat(base, width)
    if family == "cos2_bump":
        if amplitude == 0.0:
            return Profile.flat(base, width)
        return Profile.bump(base, amplitude, center, halfwidth, sign=sign, width=width)
    if family == "tent":
        if amplitude == 0.0:
            return Profile.flat(base, width)
        knots = [
            (0.0, base),
            (center - halfwidth, base),
            (center, base + sign * amplitude),
            (center + halfwidth, base),
            (width, base),
        ]
        return Profile.piecewise_linear(knots)
    raise ConfigurationError(f"unknown bottom family: {family!r}")


@dataclass(frozen=True)
class SweepPlan:
    """Parameter grid for a Case I bottom-family sweep."""

    family: str = "cos2_bump"
    amplitudes: tuple = (0.04, 0.06, 0.08, 0.10, 0.12, 0.14, 0.16)
    data: tuple = ("mode1",)
    resolutions: tuple = ((128, 64),)
    width: float = 1.0
    surface_level: float = 1.0
    base_level: float = 0.0
    center: float = 0.5
    halfwidth: float = 0.25
    windows: tuple = ()
    with_identities: bool = True
    backend: str = "cg"
    rtol: float = 1e-12

    def __post_init__(self):
        if len(self.amplitudes) == 0:
            raise ConfigurationError("sweep parameter grid is empty")
        if len(self.data) == 0 or len(self.resolutions) == 0:
            raise ConfigurationError("sweep needs at least one datum and one resolution")
        # fail fast if any configuration breaks the domain invariants
        for a in self.amplitudes:
            bot = make_bottom(self.family, a, self.center, self.halfwidth,
                              self.base_level, self.width)
            FluidDomain(
                width=self.width,
                bottom=bot,
                surface=Profile.flat(self.surface_level, self.width),
            )


def run_sweep(plan: SweepPlan):
    """One SizeEstimateReport row per (amplitude, datum, resolution).

    Rows come back in plan order; a failing configuration is recorded in its
    row's error column and never aborts the sweep.
    """
    rows = []
    surface = Profile.flat(plan.surface_level, plan.width)
    reference = make_bottom(plan.family, 0.0, width=plan.width, base=plan.base_level)
    dom0 = FluidDomain(width=plan.width, bottom=reference, surface=surface)
    for a in plan.amplitudes:
        for datum in plan.data:
            for nx, ny in plan.resolutions:
                label = f"{plan.family}:a={a:g}"
                try:
                    rows.append(
                        _sweep_row(plan, dom0, a, datum, nx, ny, label)
                    )
                except ToolkitError as exc:
                    rows.append(SizeEstimateReport(
                        case="I", label=label, datum=datum, nx=nx, ny=ny,
                        area_plus=float("nan"), area_minus=float("nan"),
                        eta_lower=float("nan"), eta_upper=float("nan"),
                        upper_numerator=float("nan"),
                        w00=float("nan"), w01=float("nan"),
                        w10=float("nan"), w11=float("nan"),
                        error=str(exc),
                    ))
    return rows


def _sweep_row(plan, dom0, a, datum_name, nx, ny, label):
    bottom1 = make_bottom(plan.family, a, plan.center, plan.halfwidth,
                          plan.base_level, plan.width)
    dom1 = FluidDomain(width=plan.width, bottom=bottom1,
                       surface=Profile.flat(plan.surface_level, plan.width))
    cavity = CavityDescription(lower=dom0.bottom, upper=bottom1)
    area_plus, area_minus = region_measure(cavity)
    mesh0 = build_mesh(dom0, nx, ny)
    mesh1 = build_mesh(dom1, nx, ny)
    datum = make_datum(datum_name, plan.width)
    ms = measurements(mesh0, mesh1, datum, datum,
                      backend=plan.backend, rtol=plan.rtol)
    w00, w01, w10, w11 = ms.pairings()
    if area_plus + area_minus == 0.0:
        eta_low = 0.0
        upper = caseI_upper(ms)
    else:
        eta_low = caseI_lower(ms)
        upper = caseI_upper(ms)
    res_e = res_b = float("nan")
    if plan.with_identities and area_plus + area_minus > 0.0:
        res = identity_residuals(ms, cavity=cavity)
        res_e, res_b = res.res_energy_rel, res.res_bottom_rel
    return SizeEstimateReport(
        case="I", label=label, datum=datum_name, nx=nx, ny=ny,
        area_plus=area_plus, area_minus=area_minus,
        eta_lower=eta_low, eta_upper=upper.value,
        upper_numerator=upper.numerator,
        w00=w00, w01=w01, w10=w10, w11=w11,
        res_energy_rel=res_e, res_bottom_rel=res_b,
    )


@dataclass(frozen=True)
class FitResult:
    """Extremal-ratio constants with held-out violation counts.

    C_lower = min over training rows of |D| / eta_lower and
    C_upper = max over training rows of |D| / eta_upper, so that
    C_lower * eta_lower <= |D| <= C_upper * eta_upper on the training set by
    construction.
    """

    c_lower: float
    c_upper: float
    datum: str
    n_train: int
    n_test: int
    violations_lower: int
    violations_upper: int
    train_labels: tuple
    test_labels: tuple

    @property
    def violations(self):
        return self.violations_lower + self.violations_upper


def fit_constants(rows, datum=None, slack=1e-9) -> FitResult:
    """Fit the sandwich constants on even-index rows, test on odd-index rows.

    Rows are ordered by the sweep; zero-area rows are excluded from the
    ratios but their eta values are checked to vanish. Needs at least 3
    usable rows.
    """
    if datum is not None:
        rows = [r for r in rows if r.datum == datum]
    usable = [r for r in rows if not r.error and np.isfinite(r.eta_lower)]
    for r in usable:
        if r.area == 0.0 and (abs(r.eta_lower) > 1e-10 or abs(r.eta_upper) > 1e-10):
            raise FitError(
                f"zero-cavity row {r.label} has nonvanishing functionals"
            )
    usable = [r for r in usable if r.area > 0.0]
    if len(usable) < 3:
        raise FitError(f"need at least 3 rows with positive area, got {len(usable)}")
    train = usable[0::2]
    test = usable[1::2]
    lows = [r.area / r.eta_lower for r in train if r.eta_lower > 0.0]
    ups = [r.area / r.eta_upper for r in train if r.eta_upper > 0.0]
    if not lows or not ups:
        raise FitError("training rows have degenerate functional values")
    c_lower = min(lows)
    c_upper = max(ups)
    viol_low = sum(
        1 for r in test if c_lower * r.eta_lower > r.area * (1.0 + slack)
    )
    viol_up = sum(
        1 for r in test if r.area > c_upper * r.eta_upper * (1.0 + slack)
    )
    return FitResult(
        c_lower=float(c_lower),
        c_upper=float(c_upper),
        datum=datum if datum is not None else "*",
        n_train=len(train),
        n_test=len(test),
        violations_lower=int(viol_low),
        violations_upper=int(viol_up),
        train_labels=tuple(r.label for r in train),
        test_labels=tuple(r.label for r in test),
    )


def convergence_study(domain: FluidDomain, datum, resolutions,
                      backend="cg", rtol=1e-12):
    """Field and flux errors against the oracle over a resolution ladder.

    On a flat strip with a mode datum the separation-of-variables solution is
    the reference; otherwise a solve at twice the finest resolution is.
    Returns rows of (nx, ny, h, error_h1, error_flux, order_h1, order_flux);
    observed orders are successive Richardson slopes (nan on the first row,
    flagged 0.0 when a resolution repeats).
    """
    if len(resolutions) < 2:
        raise ConfigurationError("convergence study needs at least 2 resolutions")
    flat = domain.bottom.kind == "flat" and domain.surface.kind == "flat"
    mode_k = None
    if isinstance(datum, str):
        if flat and datum.startswith("mode"):
            mode_k = int(datum[4:])
        datum_fn = make_datum(datum, domain.width)
    else:
        datum_fn = datum

    if mode_k is not None:
        depth = domain.surface.level - domain.bottom.level
        grad_ref = strip_mode_gradient(mode_k, domain.width, depth)
        flux_ref = strip_mode_flux_density(mode_k, domain.width, depth)
        y_off = domain.bottom.level

        def ref_grad(pts):
            gx, gy = grad_ref(pts[:, 0], pts[:, 1] - y_off)
            return np.stack([gx, gy], axis=1)

        def ref_flux(x):
            return flux_ref(x)
    else:
        nx_f, ny_f = max(r[0] for r in resolutions), max(r[1] for r in resolutions)
        fine_mesh = build_mesh(domain, 2 * nx_f, 2 * ny_f)
        fine = solve_potential(fine_mesh, surface_trace(fine_mesh, datum_fn),
                               backend=backend, rtol=rtol)
        fine_flux = boundary_flux(fine, TAG_TOP)
        fb = fine_mesh.boundary_nodes(TAG_BOTTOM)
        ft = fine_mesh.boundary_nodes(TAG_TOP)

        def ref_grad(pts):
            # coarse quadrature points can undercut the fine bottom polyline
            # near curvature; clamp them into the fine footprint
            x = pts[:, 0]
            lo = np.interp(x, fine_mesh.nodes[fb, 0], fine_mesh.nodes[fb, 1])
            hi = np.interp(x, fine_mesh.nodes[ft, 0], fine_mesh.nodes[ft, 1])
            span = hi - lo
            y = np.clip(pts[:, 1], lo + 1e-12 * span, hi - 1e-12 * span)
            return fine_mesh.gradient_at(fine.values, np.stack([x, y], axis=1),
                                         recovered=True)

        def ref_flux(x):
            return np.interp(x, fine_flux.x, fine_flux.values)

    rows = []
    prev = None
    for nx, ny in resolutions:
        mesh = build_mesh(domain, nx, ny)
        f = solve_potential(mesh, surface_trace(mesh, datum_fn),
                            backend=backend, rtol=rtol)
        pts, w = mesh.quadrature
        g = mesh.triangle_gradients(f.values)
        gr = ref_grad(pts.reshape(-1, 2)).reshape(pts.shape)
        err_h1 = float(np.sqrt(
            (w * ((g[:, None, :] - gr) ** 2).sum(axis=2)).sum()
        ))
        q = boundary_flux(f, TAG_TOP)
        qe = ref_flux(q.x)
        err_flux = float(np.sqrt((q.weights * (q.values - qe) ** 2).sum()))
        h = domain.width / nx
        if prev is None:
            o_h1 = o_flux = float("nan")
        elif prev[0] == h:
            o_h1 = o_flux = 0.0
        else:
            ratio = np.log(prev[0] / h)
            o_h1 = float(np.log(prev[1] / max(err_h1, 1e-300)) / ratio)
            o_flux = float(np.log(prev[2] / max(err_flux, 1e-300)) / ratio)
        rows.append({
            "nx": nx, "ny": ny, "h": h,
            "error_h1": err_h1, "error_flux": err_flux,
            "order_h1": o_h1, "order_flux": o_flux,
        })
        prev = (h, err_h1, err_flux)
    return rows
