"""Command-line front end: configuration, artifact output, verification.

One structured YAML file configures a run; command-line flags override
single values. Every applied default is echoed to the run log. Artifacts
(CSV tables, plain-text summaries, self-contained SVG plots) land in the
output directory together with a manifest line per file.

Exit codes: 0 success, 2 configuration error, 3 numerical error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__, acceptance, oracle
from .dtn import assemble_dtn, dtn_spectrum
from .errors import (
    ConfigurationError,
    GeometryError,
    NumericalError,
    SingularSystemError,
    ToolkitError,
)
from .functionals import (
    SizeEstimateReport,
    caseI_lower,
    caseI_upper,
    caseII_lower,
    caseII_upper_measurables,
    caseIII_upper_measurables,
    identity_residuals,
    log_stability_curve,
    measurements,
)
from .geometry import (
    CavityDescription,
    FluidDomain,
    Profile,
    hypothesis_report,
    region_measure,
)
from .harness import (
    SweepPlan,
    convergence_study,
    fit_constants,
    make_datum,
    run_sweep,
)
from .mesh import TAG_TOP, build_mesh
from .reporting import svg_line_plot, write_csv, write_manifest
from .solver import boundary_flux, field_to_csv, solve_potential, surface_trace

SUBCOMMANDS = ("solve", "dtn", "estimate", "sweep", "converge", "verify")
FORMATS = ("csv", "svg", "txt")

_PROFILE_KEYS = {
    "flat": {"kind", "level"},
    "bump": {"kind", "base", "amplitude", "center", "halfwidth", "sign"},
    "piecewise_linear": {"kind", "knots"},
}
_TOP_KEYS = {"subcommand", "domain", "discretization", "data", "window", "sweep",
             "converge", "output"}
_DOMAIN_KEYS = {"width", "surface", "bottom", "bottom2"}
_DISC_KEYS = {"nx", "ny", "tol", "backend"}
_DATA_KEYS = {"datum", "values"}
_WINDOW_KEYS = {"xa", "xb"}
_SWEEP_KEYS = {"family", "amplitudes", "data", "resolutions", "center",
               "halfwidth", "base_level"}
_CONVERGE_KEYS = {"resolutions", "datum"}
_OUTPUT_KEYS = {"directory", "formats"}


@dataclass
class RunConfig:
    subcommand: str
    width: float
    surface: dict
    bottom: dict
    bottom2: dict
    nx: int
    ny: int
    tol: float
    backend: str
    datum: str
    values: list
    window: tuple
    sweep: dict
    converge: dict
    out_dir: str
    formats: tuple
    applied_defaults: list = field(default_factory=list)

    def digest(self):
        payload = {
            k: v for k, v in self.__dict__.items() if k != "applied_defaults"
        }
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True, default=str).encode()
        ).hexdigest()[:16]


def _check_keys(block, allowed, where):
    for key in block:
        if key not in allowed:
            raise ConfigurationError(f"unknown configuration key: {where}.{key}")


def _build_profile(spec, width, where):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigurationError(f"{where} must be a mapping with a 'kind' key")
    kind = spec["kind"]
    if kind not in _PROFILE_KEYS:
        raise ConfigurationError(
            f"{where}.kind must be one of {sorted(_PROFILE_KEYS)}, got {kind!r}"
        )
    _check_keys(spec, _PROFILE_KEYS[kind], where)
    if kind == "flat":
        return Profile.flat(float(spec.get("level", 0.0)), width)
    if kind == "bump":
        return Profile.bump(
            float(spec.get("base", 0.0)),
            float(spec["amplitude"]),
            float(spec["center"]),
            float(spec["halfwidth"]),
            sign=int(spec.get("sign", 1)),
            width=width,
        )
    return Profile.piecewise_linear(spec["knots"])


def parse_config(path=None, overrides=None, subcommand=None) -> RunConfig:
    """Load, merge, validate: file config, flag overrides, defaults.

    Every default that fills a missing value is recorded in
    applied_defaults and echoed by the runner.
    """
    raw = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigurationError(f"config file not found: {path}")
        loaded = yaml.safe_load(p.read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigurationError("config file must hold a mapping")
        raw = loaded
    _check_keys(raw, _TOP_KEYS, "config")
    overrides = overrides or {}

    sub = subcommand or raw.get("subcommand")
    if sub is None:
        raise ConfigurationError("no subcommand given (config key 'subcommand' or CLI)")
    if subcommand and "subcommand" in raw and raw["subcommand"] != subcommand:
        raise ConfigurationError(
            f"config file says subcommand={raw['subcommand']!r} but the "
            f"command line says {subcommand!r}"
        )
    if sub not in SUBCOMMANDS:
        raise ConfigurationError(
            f"subcommand must be one of {SUBCOMMANDS}, got {sub!r}"
        )

    defaults = []

    def pick(block, key, default, cast, flag=None):
        if flag is not None and overrides.get(flag) is not None:
            return cast(overrides[flag])
        if key in block:
            return cast(block[key])
        defaults.append(f"{key}={default}")
        return cast(default)

    dom = raw.get("domain", {}) or {}
    _check_keys(dom, _DOMAIN_KEYS, "domain")
    width = pick(dom, "width", 1.0, float, "width")
    if "surface" in dom:
        surface = dom["surface"]
    else:
        surface = {"kind": "flat", "level": 1.0}
        defaults.append("surface=flat(1.0)")
    if "bottom" in dom:
        bottom = dom["bottom"]
    else:
        bottom = {"kind": "flat", "level": 0.0}
        defaults.append("bottom=flat(0.0)")
    bottom2 = dom.get("bottom2")

    disc = raw.get("discretization", {}) or {}
    _check_keys(disc, _DISC_KEYS, "discretization")
    nx = pick(disc, "nx", 128, int, "nx")
    ny = pick(disc, "ny", 64, int, "ny")
    tol = pick(disc, "tol", 1e-10, float, "tol")
    backend = pick(disc, "backend", "cg", str, "backend")
    for name, val in (("nx", nx), ("ny", ny)):
        if not (2 <= val <= 4096):
            raise ConfigurationError(
                f"invariant violated: {name} must lie in [2, 4096], got {val}"
            )
    if backend not in ("cg", "direct"):
        raise ConfigurationError(f"backend must be 'cg' or 'direct', got {backend!r}")
    if tol <= 0 or tol > 1e-2:
        raise ConfigurationError(f"tol must lie in (0, 1e-2], got {tol}")

    data = raw.get("data", {}) or {}
    _check_keys(data, _DATA_KEYS, "data")
    datum = overrides.get("datum") or data.get("datum")
    values = data.get("values")
    if datum is None and values is None:
        datum = "mode1"
        defaults.append("datum=mode1")

    win = raw.get("window")
    window = None
    if overrides.get("window") is not None:
        xa, xb = (float(v) for v in overrides["window"].split(","))
        window = (xa, xb)
    elif win:
        _check_keys(win, _WINDOW_KEYS, "window")
        if "xa" not in win or "xb" not in win:
            raise ConfigurationError("window needs both xa and xb")
        window = (float(win["xa"]), float(win["xb"]))
    if window is not None and not (0.0 <= window[0] < window[1] <= width):
        raise ConfigurationError(
            f"invariant violated: window must satisfy 0 <= xa < xb <= width, "
            f"got [{window[0]:g}, {window[1]:g}]"
        )

    sweep = raw.get("sweep", {}) or {}
    _check_keys(sweep, _SWEEP_KEYS, "sweep")
    if overrides.get("amplitudes") is not None:
        sweep = dict(sweep)
        sweep["amplitudes"] = [float(v) for v in overrides["amplitudes"].split(",")]

    conv = raw.get("converge", {}) or {}
    _check_keys(conv, _CONVERGE_KEYS, "converge")

    out = raw.get("output", {}) or {}
    _check_keys(out, _OUTPUT_KEYS, "output")
    out_dir = pick(out, "directory", "out", str, "out_dir")
    formats = tuple(overrides.get("formats").split(",")) if overrides.get("formats") \
        else tuple(out.get("formats", ("csv", "txt")))
    for f in formats:
        if f not in FORMATS:
            raise ConfigurationError(f"unknown output format: {f!r}")

    # validate referenced profile kinds and the datum name up front
    _build_profile(surface, width, "domain.surface")
    _build_profile(bottom, width, "domain.bottom")
    if bottom2 is not None:
        _build_profile(bottom2, width, "domain.bottom2")
    if datum is not None:
        make_datum(datum, width)

    return RunConfig(
        subcommand=sub, width=width, surface=surface, bottom=bottom,
        bottom2=bottom2, nx=nx, ny=ny, tol=tol, backend=backend,
        datum=datum, values=values, window=window, sweep=sweep,
        converge=conv, out_dir=out_dir, formats=formats,
        applied_defaults=defaults,
    )


def _domain(config, which="bottom"):
    spec = getattr(config, which)
    if spec is None:
        raise ConfigurationError(f"subcommand {config.subcommand!r} needs domain.{which}")
    bottom = _build_profile(spec, config.width, f"domain.{which}")
    surface = _build_profile(config.surface, config.width, "domain.surface")
    return FluidDomain(width=config.width, bottom=bottom, surface=surface)


def _datum_values(config, mesh):
    if config.values is not None:
        vals = np.asarray(config.values, dtype=float)
        top = mesh.boundary_nodes(TAG_TOP)
        if vals.shape != (len(top),):
            raise ConfigurationError(
                f"data.values has {vals.shape[0]} entries for {len(top)} TOP nodes"
            )
        return surface_trace(mesh, vals)
    return surface_trace(mesh, make_datum(config.datum, config.width))


def run(config: RunConfig, log=print) -> int:
    """Execute the configured subcommand; artifacts land in the output dir."""
    for d in config.applied_defaults:
        log(f"default applied: {d}")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    runner = {
        "solve": _run_solve,
        "dtn": _run_dtn,
        "estimate": _run_estimate,
        "sweep": _run_sweep,
        "converge": _run_converge,
        "verify": _run_verify,
    }[config.subcommand]
    status = runner(config, out_dir, artifacts, log)
    if artifacts:
        write_manifest(out_dir, artifacts, config.digest(), __version__)
        log(f"wrote {len(artifacts)} artifact(s) + manifest to {out_dir}")
    return status


def _run_solve(config, out_dir, artifacts, log):
    dom = _domain(config)
    mesh = build_mesh(dom, config.nx, config.ny)
    psi = _datum_values(config, mesh)
    f = solve_potential(mesh, psi, backend=config.backend, rtol=config.tol)
    flux = boundary_flux(f, TAG_TOP)
    log(
        f"solved {config.nx}x{config.ny}: iterations={f.iterations} "
        f"residual={f.residual:.3e} max|phi|={np.abs(f.values).max():.6g}"
    )
    if "csv" in config.formats:
        p = out_dir / "field.csv"
        p.write_text(field_to_csv(f), encoding="utf-8")
        artifacts.append(p)
        artifacts.append(write_csv(
            out_dir / "surface_trace.csv",
            "x,arclength,psi,flux_density",
            zip(psi.x, psi.arclength, psi.values, flux.values),
        ))
    if "txt" in config.formats:
        p = out_dir / "mesh.txt"
        p.write_text(mesh.export_tables(), encoding="utf-8")
        artifacts.append(p)
    if "svg" in config.formats:
        artifacts.append(svg_line_plot(
            out_dir / "surface.svg",
            [("psi", psi.x, psi.values), ("flux density", flux.x, flux.values)],
            title="surface data and recovered flux",
            xlabel="x", ylabel="value",
        ))
    return 0


def _run_dtn(config, out_dir, artifacts, log):
    dom = _domain(config)
    mesh = build_mesh(dom, config.nx, config.ny)
    g = assemble_dtn(mesh, backend="direct", rtol=config.tol)
    k_max = min(g.dim, 8)
    spec = dtn_spectrum(g, k_max)
    flat = dom.bottom.kind == "flat" and dom.surface.kind == "flat"
    rows = []
    for k, (lam, _) in enumerate(spec):
        analytic = ""
        if flat:
            depth = dom.surface.level - dom.bottom.level
            analytic = f"{oracle.strip_eigenvalue(k, config.width, depth):.12g}"
        rows.append(f"{k},{lam:.12g},{analytic}")
    log(f"assembled DtN ({g.dim}x{g.dim}), asymmetry {g.asymmetry:.3e}")
    if "csv" in config.formats:
        p = out_dir / "dtn_matrix.csv"
        p.write_text(g.to_csv(), encoding="utf-8")
        artifacts.append(p)
        artifacts.append(write_csv(out_dir / "dtn_spectrum.csv",
                                   "k,lambda,analytic", rows))
    if "svg" in config.formats:
        ks = list(range(k_max))
        artifacts.append(svg_line_plot(
            out_dir / "dtn_spectrum.svg",
            [("computed", ks, [s[0] for s in spec])]
            + ([("analytic", ks,
                 [oracle.strip_eigenvalue(k, config.width,
                                          dom.surface.level - dom.bottom.level)
                  for k in ks])] if flat else []),
            title="surface DtN spectrum", xlabel="k", ylabel="lambda_k",
        ))
    return 0


def _run_estimate(config, out_dir, artifacts, log):
    if config.bottom2 is None:
        raise ConfigurationError("estimate needs domain.bottom and domain.bottom2")
    dom0 = _domain(config, "bottom")
    dom1 = _domain(config, "bottom2")
    cavity = CavityDescription(lower=dom0.bottom, upper=dom1.bottom)
    area_plus, area_minus = region_measure(cavity)
    mesh0 = build_mesh(dom0, config.nx, config.ny)
    mesh1 = build_mesh(dom1, config.nx, config.ny)
    psi0 = _datum_values(config, mesh0)
    psi1 = _datum_values(config, mesh1)
    ms = measurements(mesh0, mesh1, psi0, psi1, window=config.window,
                      backend=config.backend, rtol=config.tol)
    w00, w01, w10, w11 = ms.pairings()
    crossing = area_minus > 1e-14 * max(area_plus, 1.0)
    full_window = config.window is None or (
        abs(config.window[0]) < 1e-12 and abs(config.window[1] - config.width) < 1e-12
    )
    eta_low = eta_up = num = float("nan")
    res_e = res_b = float("nan")
    case = "II" if crossing else "I"
    cII = cII_res = float("nan")
    if not full_window:
        case = "III"
    elif not crossing:
        zero = area_plus + area_minus == 0.0
        eta_low = 0.0 if zero else caseI_lower(ms)
        up = caseI_upper(ms)
        eta_up, num = up.value, up.numerator
        if not zero:
            res = identity_residuals(ms, cavity=cavity)
            res_e, res_b = res.res_energy_rel, res.res_bottom_rel
    else:
        cII = caseII_lower(ms)
        rII = caseII_upper_measurables(ms)
        cII_res = rII.residual_rel
        eta_low = cII
    report = SizeEstimateReport(
        case=case, label=f"{dom0.bottom.kind}->{dom1.bottom.kind}",
        datum=config.datum or "explicit", nx=config.nx, ny=config.ny,
        area_plus=area_plus, area_minus=area_minus,
        eta_lower=eta_low, eta_upper=eta_up, upper_numerator=num,
        w00=w00, w01=w01, w10=w10, w11=w11,
        res_energy_rel=res_e, res_bottom_rel=res_b,
        caseII_lower_value=cII, caseII_residual_rel=cII_res,
    )
    log(report.to_text())
    if area_plus + area_minus > 0.0:
        rep = hypothesis_report(cavity)
        fat = f"{rep.fatness.ratio:.3f}" if rep.fatness else "n/a"
        log(
            f"advisory geometry: diameter {rep.diameter:.4g}, "
            f"max slope {rep.lipschitz_slope:.4g}, "
            f"eroded-area fraction at h={rep.h:.3g}: {fat}"
        )
    if config.window is not None:
        c3 = caseIII_upper_measurables(ms)
        log(
            f"window [{config.window[0]:g}, {config.window[1]:g}]: "
            f"|psi1-psi0|_H1 = {c3.discrepancy_h1:.6g}, "
            f"|flux1-flux0|_L2 = {c3.discrepancy_flux:.6g}"
        )
        delta = c3.discrepancy_h1 + c3.discrepancy_flux
        if delta > 0.0:
            curve = log_stability_curve(delta, [10 * delta, 100 * delta, 1000 * delta])
            pieces = ", ".join(f"M={m:.3g}: {v:.4g}" for m, v in curve)
            log(f"log-stability modulus (reported only, k=0.5): {pieces}")
    if "csv" in config.formats:
        artifacts.append(write_csv(out_dir / "estimate.csv",
                                   SizeEstimateReport.CSV_COLUMNS,
                                   [report.to_csv_row()]))
    if "txt" in config.formats:
        p = out_dir / "estimate.txt"
        p.write_text(report.to_text() + "\n", encoding="utf-8")
        artifacts.append(p)
    return 0


def _run_sweep(config, out_dir, artifacts, log):
    sw = config.sweep
    plan = SweepPlan(
        family=sw.get("family", "cos2_bump"),
        amplitudes=tuple(sw.get("amplitudes", (0.04, 0.06, 0.08, 0.10, 0.12, 0.14, 0.16))),
        data=tuple(sw.get("data", (config.datum or "mode1",))),
        resolutions=tuple(tuple(r) for r in sw.get("resolutions", ((config.nx, config.ny),))),
        width=config.width,
        center=float(sw.get("center", 0.5)),
        halfwidth=float(sw.get("halfwidth", 0.25)),
        base_level=float(sw.get("base_level", 0.0)),
        backend=config.backend,
        rtol=config.tol,
    )
    rows = run_sweep(plan)
    n_err = sum(1 for r in rows if r.error)
    log(f"sweep finished: {len(rows)} rows, {n_err} failed")
    fit_lines = []
    for datum in plan.data:
        try:
            fr = fit_constants(rows, datum=datum)
            fit_lines.append(
                f"datum {datum}: C_lower={fr.c_lower:.6g} C_upper={fr.c_upper:.6g} "
                f"train={fr.n_train} test={fr.n_test} "
                f"violations={fr.violations_lower}+{fr.violations_upper}"
            )
        except ToolkitError as exc:
            fit_lines.append(f"datum {datum}: fit failed ({exc})")
    for line in fit_lines:
        log(line)
    if "csv" in config.formats:
        artifacts.append(write_csv(out_dir / "sweep.csv",
                                   SizeEstimateReport.CSV_COLUMNS,
                                   [r.to_csv_row() for r in rows]))
    if "txt" in config.formats:
        p = out_dir / "sweep_summary.txt"
        p.write_text(
            "\n".join([r.to_text() for r in rows] + [""] + fit_lines) + "\n",
            encoding="utf-8",
        )
        artifacts.append(p)
    if "svg" in config.formats:
        series = []
        for datum in plan.data:
            ok_rows = [r for r in rows if r.datum == datum and not r.error]
            areas = [r.area for r in ok_rows]
            series.append((f"eta_lower {datum}", areas, [r.eta_lower for r in ok_rows]))
            series.append((f"eta_upper {datum}", areas, [r.eta_upper for r in ok_rows]))
        artifacts.append(svg_line_plot(
            out_dir / "sweep_eta_vs_area.svg", series,
            title="size functionals vs cavity area", xlabel="|D|", ylabel="eta",
        ))
    return 0


def _run_converge(config, out_dir, artifacts, log):
    conv = config.converge
    resolutions = tuple(
        tuple(r) for r in conv.get(
            "resolutions", ((16, 16), (32, 32), (64, 64), (128, 128))
        )
    )
    datum = conv.get("datum", config.datum or "mode1")
    dom = _domain(config)
    rows = convergence_study(dom, datum, resolutions,
                             backend=config.backend, rtol=config.tol)
    for r in rows:
        log(
            f"nx={r['nx']:4d} h={r['h']:.5f} eH1={r['error_h1']:.4e} "
            f"eflux={r['error_flux']:.4e} order(H1)={r['order_h1']:.2f} "
            f"order(flux)={r['order_flux']:.2f}"
        )
    if "csv" in config.formats:
        artifacts.append(write_csv(
            out_dir / "converge.csv",
            "nx,ny,h,error_h1,error_flux,order_h1,order_flux",
            [(r["nx"], r["ny"], r["h"], r["error_h1"], r["error_flux"],
              r["order_h1"], r["order_flux"]) for r in rows],
        ))
    if "svg" in config.formats:
        hs = [r["h"] for r in rows]
        artifacts.append(svg_line_plot(
            out_dir / "converge.svg",
            [("H1 error", hs, [r["error_h1"] for r in rows]),
             ("flux L2 error", hs, [r["error_flux"] for r in rows])],
            title="convergence against the oracle", xlabel="h", ylabel="error",
            logx=True, logy=True,
        ))
    return 0


def _run_verify(config, out_dir, artifacts, log):
    results = acceptance.run_all(printer=log)
    if "txt" in config.formats:
        p = out_dir / "verify.txt"
        p.write_text("\n".join(r.line() for r in results) + "\n", encoding="utf-8")
        artifacts.append(p)
    return 0 if all(r.passed for r in results) else 1


def _make_parser():
    parser = argparse.ArgumentParser(
        prog="bathysize",
        description="Size estimates for seabed cavities from free-surface "
                    "wave measurements",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand")
    for name, help_ in (
        ("solve", "solve one potential problem and export the field"),
        ("dtn", "assemble the surface DtN operator and its spectrum"),
        ("estimate", "evaluate the size functionals for a bottom pair"),
        ("sweep", "run a bottom-family sweep and fit sandwich constants"),
        ("converge", "run a convergence study against the oracle"),
        ("verify", "run the acceptance suite"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("-c", "--config", default=None, help="YAML config file")
        p.add_argument("--out", dest="out_dir", default=None, help="output directory")
        p.add_argument("--nx", type=int, default=None)
        p.add_argument("--ny", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--backend", choices=("cg", "direct"), default=None)
        p.add_argument("--width", type=float, default=None)
        p.add_argument("--datum", default=None, help="mode1..mode4 or gaussian")
        p.add_argument("--window", default=None, help="xa,xb")
        p.add_argument("--formats", default=None, help="comma list of csv,svg,txt")
        if name == "sweep":
            p.add_argument("--amplitudes", default=None, help="comma list")
    return parser


def main(argv=None) -> int:
    args = _make_parser().parse_args(argv)
    if args.subcommand is None:
        _make_parser().print_help()
        return 2
    overrides = {
        k: getattr(args, k, None)
        for k in ("out_dir", "nx", "ny", "tol", "backend", "width",
                  "datum", "window", "formats", "amplitudes")
    }
    try:
        config = parse_config(args.config, overrides, args.subcommand)
        return run(config)
    except (ConfigurationError, GeometryError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, SingularSystemError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
