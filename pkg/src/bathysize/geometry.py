"""Bottom and surface profiles, fluid domains, and cavity geometry.

Profiles are single-valued curves y = f(x) on a horizontal interval [0, L].
A fluid domain is the vertical slice between a bottom and a surface profile;
a cavity is the region enclosed between two candidate bottoms, split into a
positive part (upper above lower) and a negative part (crossing bottoms).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq

from .errors import ConfigurationError, DegenerateCavityError

__all__ = [
    "Profile",
    "FluidDomain",
    "CavityDescription",
    "region_measure",
    "fatness_ratio",
    "hypothesis_report",
    "FatnessResult",
    "HypothesisReport",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


@dataclass(frozen=True)
class Profile:
    """A bottom or surface curve on the interval [0, width].

    Three families are supported:
      flat              constant level
      bump              base level plus a compactly supported cos^2 lobe,
                        sign +1 raises the curve, -1 digs into it
      piecewise_linear  straight segments through the given knots

    Bump lobes have zero slope at the edges of their support, so a bump whose
    support lies inside [0, width] meets the side walls at a right angle
    (free-end contact condition). Piecewise-linear profiles only warn when
    their end segments are not horizontal.
    """

    kind: str
    width: float
    level: float = 0.0
    base: float = 0.0
    amplitude: float = 0.0
    center: float = 0.0
    halfwidth: float = 0.0
    sign: int = 1
    knots: tuple = ()

    def __post_init__(self):
        if not self.width > 0.0:
            raise ConfigurationError(f"profile width must be positive, got {self.width}")
        if self.kind == "flat":
            pass
        elif self.kind == "bump":
            if self.halfwidth <= 0.0:
                raise ConfigurationError("bump halfwidth must be positive")
            if self.amplitude < 0.0:
                raise ConfigurationError("bump amplitude must be nonnegative (use sign=-1 to dig)")
            if self.sign not in (-1, 1):
                raise ConfigurationError(f"bump sign must be +1 or -1, got {self.sign}")
            lo = self.center - self.halfwidth
            hi = self.center + self.halfwidth
            if lo < -1e-12 * self.width or hi > self.width * (1.0 + 1e-12):
                raise ConfigurationError(
                    f"bump support [{lo:g}, {hi:g}] must lie inside [0, {self.width:g}] "
                    "so the slope vanishes at the walls"
                )
        elif self.kind == "piecewise_linear":
            kx = np.array([k[0] for k in self.knots], dtype=float)
            if len(kx) < 2:
                raise ConfigurationError("piecewise-linear profile needs at least two knots")
            if abs(kx[0]) > 1e-12 * self.width or abs(kx[-1] - self.width) > 1e-12 * self.width:
                raise ConfigurationError("piecewise-linear knots must span [0, width]")
            if np.any(np.diff(kx) <= 0.0):
                raise ConfigurationError("piecewise-linear knot abscissae must be increasing")
            ky = np.array([k[1] for k in self.knots], dtype=float)
            seg = np.diff(ky) / np.diff(kx)
            if abs(seg[0]) > 1e-12 or abs(seg[-1]) > 1e-12:
                warnings.warn(
                    "piecewise-linear profile has nonzero slope at a wall "
                    "(free-end contact condition not met)",
                    stacklevel=3,
                )
        else:
            raise ConfigurationError(f"unknown profile kind: {self.kind!r}")

    @staticmethod
    def flat(level, width=1.0):
        return Profile(kind="flat", width=float(width), level=float(level))

    @staticmethod
    def bump(base, amplitude, center, halfwidth, sign=1, width=1.0):
        return Profile(
            kind="bump",
            width=float(width),
            base=float(base),
            amplitude=float(amplitude),
            center=float(center),
            halfwidth=float(halfwidth),
            sign=int(sign),
        )

    @staticmethod
    def piecewise_linear(knots):
        knots = tuple((float(x), float(y)) for x, y in knots)
        return Profile(kind="piecewise_linear", width=knots[-1][0], knots=knots)

    def value(self, x):
        """Profile height at x (scalar or array); x is clamped to [0, width]."""
        scalar = np.isscalar(x) or np.ndim(x) == 0
        x = np.atleast_1d(np.clip(np.asarray(x, dtype=float), 0.0, self.width))
        if self.kind == "flat":
            out = np.full_like(x, self.level)
        elif self.kind == "bump":
            u = (x - self.center) * (np.pi / (2.0 * self.halfwidth))
            inside = np.abs(x - self.center) <= self.halfwidth
            out = np.full_like(x, self.base)
            out[inside] += self.sign * self.amplitude * np.cos(u[inside]) ** 2
        else:
            kx = np.array([k[0] for k in self.knots])
            ky = np.array([k[1] for k in self.knots])
            out = np.interp(x, kx, ky)
        return float(out[0]) if scalar else out

    def slope(self, x):
        """dy/dx at x; at interior knots the right-segment slope is used."""
        scalar = np.isscalar(x) or np.ndim(x) == 0
        x = np.atleast_1d(np.clip(np.asarray(x, dtype=float), 0.0, self.width))
        if self.kind == "flat":
            out = np.zeros_like(x)
        elif self.kind == "bump":
            u = (x - self.center) * (np.pi / self.halfwidth)
            inside = np.abs(x - self.center) <= self.halfwidth
            out = np.zeros_like(x)
            coef = -self.sign * self.amplitude * np.pi / (2.0 * self.halfwidth)
            out[inside] = coef * np.sin(u[inside])
        else:
            kx = np.array([k[0] for k in self.knots])
            ky = np.array([k[1] for k in self.knots])
            seg = np.diff(ky) / np.diff(kx)
            idx = np.clip(np.searchsorted(kx, x, side="right") - 1, 0, len(seg) - 1)
            out = seg[idx]
        return float(out[0]) if scalar else out

    def breakpoints(self):
        """Interior x where the profile changes analytic piece."""
        if self.kind == "flat":
            return np.empty(0)
        if self.kind == "bump":
            pts = [self.center - self.halfwidth, self.center + self.halfwidth]
            return np.array([p for p in pts if 1e-14 < p < self.width * (1 - 1e-14)])
        kx = np.array([k[0] for k in self.knots])
        return kx[1:-1]


@dataclass(frozen=True)
class FluidDomain:
    """The fluid region between a bottom and a surface profile.

    The surface must clear the bottom by at least min_gap everywhere
    (default one thousandth of the width).
    """

    width: float
    bottom: Profile
    surface: Profile
    min_gap: float = None

    def __post_init__(self):
        if not self.width > 0.0:
            raise ConfigurationError(f"domain width must be positive, got {self.width}")
        for name, prof in (("bottom", self.bottom), ("surface", self.surface)):
            if abs(prof.width - self.width) > 1e-12 * self.width:
                raise ConfigurationError(
                    f"{name} profile width {prof.width:g} does not match domain width {self.width:g}"
                )
        if self.min_gap is None:
            object.__setattr__(self, "min_gap", 1e-3 * self.width)
        if not self.min_gap > 0.0:
            raise ConfigurationError(f"min_gap must be positive, got {self.min_gap}")
        xs = _dense_grid(self.width, (self.bottom, self.surface))
        gap = self.surface.value(xs) - self.bottom.value(xs)
        worst = float(np.min(gap))
        if worst < self.min_gap * (1.0 - 1e-12):
            xbad = float(xs[int(np.argmin(gap))])
            raise ConfigurationError(
                f"bottom and surface are too close: gap {worst:g} at x={xbad:g} "
                f"is below the required minimum {self.min_gap:g}"
            )


@dataclass(frozen=True)
class CavityDescription:
    """The region enclosed between two candidate bottoms.

    The positive part is where upper > lower; the negative part is where the
    bottoms cross the other way. An ordered pair (upper >= lower) has an
    empty negative part.
    """

    lower: Profile
    upper: Profile

    def __post_init__(self):
        if abs(self.lower.width - self.upper.width) > 1e-12 * max(self.lower.width, self.upper.width):
            raise ConfigurationError(
                f"cavity profiles live on different intervals: "
                f"{self.lower.width:g} vs {self.upper.width:g}"
            )

    @property
    def width(self):
        return self.lower.width

    def difference(self, x):
        """upper(x) - lower(x)."""
        return self.upper.value(x) - self.lower.value(x)

    def swapped(self):
        return CavityDescription(lower=self.upper, upper=self.lower)


def _dense_grid(width, profiles, n=2049):
    xs = np.linspace(0.0, width, n)
    extra = [p.breakpoints() for p in profiles]
    return np.unique(np.concatenate([xs] + extra))


def _smooth_spans(c: CavityDescription, xa, xb):
    """Subintervals of [xa, xb] on which upper-lower is smooth and one-signed."""
    pts = np.concatenate([
        np.array([xa, xb]),
        c.lower.breakpoints(),
        c.upper.breakpoints(),
    ])
    pts = np.unique(pts[(pts >= xa - 1e-15) & (pts <= xb + 1e-15)])
    d = lambda x: float(c.difference(x))
    cuts = [pts[0]]
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi - lo < 1e-14 * c.width:
            cuts.append(hi)
            continue
        sx = np.linspace(lo, hi, 129)
        sv = c.difference(sx)
        for k in range(len(sx) - 1):
            if sv[k] == 0.0:
                cuts.append(float(sx[k]))
            elif sv[k] * sv[k + 1] < 0.0:
                cuts.append(brentq(d, sx[k], sx[k + 1], xtol=1e-15))
        cuts.append(hi)
    cuts = np.unique(np.array(cuts))
    return [(a, b) for a, b in zip(cuts[:-1], cuts[1:]) if b - a > 1e-15 * c.width]


def region_measure(c: CavityDescription, quad_points: int = 512, interval=None):
    """Areas (positive part, negative part) of the cavity.

    Composite 5-point Gauss quadrature on panels aligned with the
    smoothness/sign structure of upper-lower; exact for piecewise-linear
    profiles and spectrally accurate for bump lobes. An optional interval
    restricts the integration to a sub-span of [0, width].
    """
    if quad_points < 2:
        raise ConfigurationError(f"quad_points must be at least 2, got {quad_points}")
    xa, xb = (0.0, c.width) if interval is None else (float(interval[0]), float(interval[1]))
    if not (0.0 <= xa < xb <= c.width * (1 + 1e-12)):
        raise ConfigurationError(f"integration interval [{xa:g}, {xb:g}] outside [0, {c.width:g}]")
    spans = _smooth_spans(c, xa, xb)
    total = xb - xa
    plus = 0.0
    minus = 0.0
    for lo, hi in spans:
        n_panels = max(1, int(round(quad_points * (hi - lo) / total)))
        edges = np.linspace(lo, hi, n_panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1:] - edges[:-1])
        xq = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        wq = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
        d = c.difference(xq)
        plus += float(wq @ np.maximum(d, 0.0))
        minus += float(wq @ np.maximum(-d, 0.0))
    return plus, minus


@dataclass(frozen=True)
class FatnessResult:
    """Eroded-area ratio |D_h| / |D| and whether it clears one half."""

    ratio: float
    meets_half: bool
    h: float
    resolution: int
    area_raster: float
    eroded_area_raster: float

    def __float__(self):
        return self.ratio


def fatness_ratio(c: CavityDescription, h: float, resolution: int = 2048) -> FatnessResult:
    """Fraction of the cavity farther than h from its boundary.

    The cavity is rasterized on a resolution^2 grid over its padded bounding
    box and eroded with an exact Euclidean distance transform. This is a
    validation aid; accuracy is limited by the pixel size.
    """
    if h <= 0.0:
        raise ConfigurationError(f"erosion depth h must be positive, got {h}")
    if resolution < 16:
        raise ConfigurationError("raster resolution must be at least 16")
    plus, minus = region_measure(c)
    if plus + minus <= 0.0:
        raise DegenerateCavityError("cavity has zero area; fatness ratio undefined")
    xs = _dense_grid(c.width, (c.lower, c.upper), n=4097)
    d = c.difference(xs)
    active = np.abs(d) > 0.0
    x_lo = float(xs[active].min())
    x_hi = float(xs[active].max())
    lo_env = np.minimum(c.lower.value(xs[active]), c.upper.value(xs[active]))
    hi_env = np.maximum(c.lower.value(xs[active]), c.upper.value(xs[active]))
    y_lo = float(lo_env.min())
    y_hi = float(hi_env.max())
    dx = (x_hi - x_lo) / resolution
    dy = (y_hi - y_lo) / resolution
    # one-pixel pad so the raster border always counts as outside
    gx = np.linspace(x_lo - dx, x_hi + dx, resolution + 2)
    gy = np.linspace(y_lo - dy, y_hi + dy, resolution + 2)
    lo_env = np.minimum(c.lower.value(gx), c.upper.value(gx))
    hi_env = np.maximum(c.lower.value(gx), c.upper.value(gx))
    # profiles clamp outside [0, width]; those columns are not cavity interior
    col_ok = (gx >= 0.0) & (gx <= c.width)
    mask = (
        (gy[:, None] > lo_env[None, :])
        & (gy[:, None] < hi_env[None, :])
        & col_ok[None, :]
    )
    if not mask.any():
        raise DegenerateCavityError("cavity raster is empty; refine the resolution")
    dist = ndimage.distance_transform_edt(mask, sampling=(gy[1] - gy[0], gx[1] - gx[0]))
    px_area = (gx[1] - gx[0]) * (gy[1] - gy[0])
    area = float(mask.sum()) * px_area
    eroded = float((dist > h).sum()) * px_area
    ratio = eroded / area
    return FatnessResult(
        ratio=ratio,
        meets_half=bool(ratio >= 0.5),
        h=float(h),
        resolution=int(resolution),
        area_raster=area,
        eroded_area_raster=eroded,
    )


@dataclass(frozen=True)
class HypothesisReport:
    """Advisory geometric diagnostics for a cavity; never blocks computation."""

    degenerate: bool
    area: float
    diameter: float
    lipschitz_slope: float
    h: float
    fatness: FatnessResult = None
    r: float = None
    diameter_over_r: float = None


def hypothesis_report(
    c: CavityDescription,
    r: float = None,
    h: float = None,
    fatness_resolution: int = 1024,
) -> HypothesisReport:
    """Diagnostics for the a-priori geometric hypotheses on a cavity.

    Reports the cavity area, its diameter, an estimated Lipschitz constant of
    the enclosing curves (max |slope| over knots/samples on the active span),
    the diameter in units of the user-supplied Lipschitz radius r, and the
    eroded-area fraction at depth h (default: diameter / 20).
    """
    plus, minus = region_measure(c)
    area = plus + minus
    if area <= 0.0:
        return HypothesisReport(
            degenerate=True, area=0.0, diameter=0.0, lipschitz_slope=0.0, h=0.0, r=r
        )
    xs = _dense_grid(c.width, (c.lower, c.upper), n=8193)
    d = c.difference(xs)
    active = np.abs(d) > 0.0
    xa = xs[active]
    lo_env = np.minimum(c.lower.value(xa), c.upper.value(xa))
    hi_env = np.maximum(c.lower.value(xa), c.upper.value(xa))
    pts = np.concatenate(
        [np.stack([xa, lo_env], axis=1), np.stack([xa, hi_env], axis=1)], axis=0
    )
    if len(pts) > 1024:
        pts = pts[:: len(pts) // 1024 + 1]
    diff = pts[:, None, :] - pts[None, :, :]
    diameter = float(np.sqrt((diff ** 2).sum(axis=2).max()))
    slopes = [np.abs(p.slope(xa)).max() for p in (c.lower, c.upper)]
    lipschitz = float(max(slopes))
    if h is None:
        h = diameter / 20.0
    fat = fatness_ratio(c, h, resolution=fatness_resolution)
    return HypothesisReport(
        degenerate=False,
        area=area,
        diameter=diameter,
        lipschitz_slope=lipschitz,
        h=float(h),
        fatness=fat,
        r=r,
        diameter_over_r=(diameter / r) if r else None,
    )
