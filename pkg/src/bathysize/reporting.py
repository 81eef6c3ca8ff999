"""Artifact writers: CSV tables, self-contained SVG line plots, manifests.

SVG output is hand-rolled so plots are deterministic functions of the data
they render (no rendering library, no timestamps inside the file). Manifests
live next to the artifacts and carry the only timestamp, so artifact files
rerun bit-identically.
"""

from __future__ import annotations

import hashlib
import time
from pathlib import Path

import numpy as np

__all__ = ["write_csv", "svg_line_plot", "write_manifest", "sha256_of_file"]


def write_csv(path, header, rows):
    """Write a CSV file from a header string/sequence and row sequences."""
    path = Path(path)
    if not isinstance(header, str):
        header = ",".join(str(h) for h in header)
    lines = [header]
    for row in rows:
        if isinstance(row, str):
            lines.append(row)
        else:
            lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def sha256_of_file(path):
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_manifest(directory, artifact_paths, config_hash, version):
    """One manifest line per artifact: name, content hash, config hash,
    toolkit version, write time. Reruns are bit-identical modulo this file."""
    directory = Path(directory)
    stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    lines = []
    for p in artifact_paths:
        p = Path(p)
        lines.append(
            f"{p.name} sha256={sha256_of_file(p)} config={config_hash} "
            f"version={version} written={stamp}"
        )
    out = directory / "manifest.txt"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


def _ticks(lo, hi, n=5):
    if not np.isfinite(lo) or not np.isfinite(hi) or lo == hi:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def svg_line_plot(path, series, title="", xlabel="", ylabel="",
                  logx=False, logy=False, width=640, height=440):
    """Self-contained SVG line plot.

    series: list of (label, xs, ys). Deterministic: identical data produces
    an identical file.
    """
    path = Path(path)
    margin_l, margin_r, margin_t, margin_b = 70, 20, 40, 50
    pw = width - margin_l - margin_r
    ph = height - margin_t - margin_b
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

    def tx(vals):
        v = np.asarray(vals, dtype=float)
        return np.log10(v) if logx else v

    def ty(vals):
        v = np.asarray(vals, dtype=float)
        return np.log10(v) if logy else v

    all_x = np.concatenate([tx(s[1]) for s in series if len(s[1])])
    all_y = np.concatenate([ty(s[2]) for s in series if len(s[2])])
    finite_x = all_x[np.isfinite(all_x)]
    finite_y = all_y[np.isfinite(all_y)]
    if len(finite_x) == 0 or len(finite_y) == 0:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0
    else:
        x_lo, x_hi = float(finite_x.min()), float(finite_x.max())
        y_lo, y_hi = float(finite_y.min()), float(finite_y.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    def px(v):
        return margin_l + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return margin_t + ph - (v - y_lo) / (y_hi - y_lo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{pw}" height="{ph}" '
        'fill="none" stroke="#333" stroke-width="1"/>',
    ]
    for v in _ticks(x_lo, x_hi):
        x = px(v)
        label = f"{10 ** v:.3g}" if logx else f"{v:.4g}"
        parts.append(
            f'<line x1="{x:.1f}" y1="{margin_t + ph}" x2="{x:.1f}" '
            f'y2="{margin_t + ph + 5}" stroke="#333"/>'
            f'<text x="{x:.1f}" y="{margin_t + ph + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{label}</text>'
        )
    for v in _ticks(y_lo, y_hi):
        y = py(v)
        label = f"{10 ** v:.3g}" if logy else f"{v:.4g}"
        parts.append(
            f'<line x1="{margin_l - 5}" y1="{y:.1f}" x2="{margin_l}" '
            f'y2="{y:.1f}" stroke="#333"/>'
            f'<text x="{margin_l - 8}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{label}</text>'
        )
    parts.append(
        f'<text x="{margin_l + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{xlabel}</text>'
    )
    parts.append(
        f'<text x="18" y="{margin_t + ph / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {margin_t + ph / 2:.1f})">{ylabel}</text>'
    )
    for i, (label, xs, ys) in enumerate(series):
        xs_t, ys_t = tx(xs), ty(ys)
        ok = np.isfinite(xs_t) & np.isfinite(ys_t)
        pts = " ".join(
            f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs_t[ok], ys_t[ok])
        )
        color = colors[i % len(colors)]
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        for a, b in zip(xs_t[ok], ys_t[ok]):
            parts.append(
                f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="{color}"/>'
            )
        parts.append(
            f'<text x="{margin_l + pw - 6}" y="{margin_t + 16 + 14 * i}" '
            f'text-anchor="end" font-family="sans-serif" font-size="11" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path
