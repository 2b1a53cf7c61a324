"""Stream functions, grid CSV export, and self-contained SVG heatmaps.

CSV grids are written ny rows by nx columns at 17 significant digits, the
same layout the CSV ingestion path reads, so every exported panel can be
loaded back bit for bit.  The SVG renderer is decoration: a plain rect
heatmap with a diverging palette, no external tooling involved.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import FieldError
from .flow import Field2D
from .pipeline import atomic_write_text, fmt, harmonized_shots, unit_vector

METHOD_LABELS = {"PODR": "PODR", "RSR": "RSR", "FSR": "FSR (idealized)", "truth": "truth"}


def stream_function(u_x: Field2D) -> Field2D:
    """Cumulative trapezoidal integral of u_x in y, zero on the bottom row."""
    u = u_x.grid()
    dy = 1.0 / (u_x.ny - 1)
    psi = np.zeros_like(u)
    np.cumsum(0.5 * dy * (u[:-1, :] + u[1:, :]), axis=0, out=psi[1:, :])
    return Field2D.from_grid(psi)


def write_grid_csv(field: Field2D, path) -> None:
    rows = [",".join(fmt(v) for v in row) for row in field.grid()]
    atomic_write_text(path, "\n".join(rows) + "\n")


def _diverging_color(t: float) -> str:
    """Map t in [-1, 1] to a blue-white-red hex color."""
    t = max(-1.0, min(1.0, t))
    if t < 0:
        r, g, b = 1.0 + t, 1.0 + t, 1.0
    else:
        r, g, b = 1.0, 1.0 - t, 1.0 - t
    return f"#{int(255 * r):02x}{int(255 * g):02x}{int(255 * b):02x}"


def svg_heatmap(field: Field2D, path, title: str = "") -> None:
    """Minimal vector-graphic heatmap; y increases upward like the domain."""
    g = field.grid()
    scale = float(np.abs(g).max()) or 1.0
    cell = 8
    width, height = field.nx * cell, field.ny * cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height + 20}" viewBox="0 0 {width} {height + 20}">',
        f'<text x="4" y="14" font-family="monospace" font-size="12">{title}</text>',
    ]
    for j in range(field.ny):
        y = 20 + (field.ny - 1 - j) * cell
        for i in range(field.nx):
            color = _diverging_color(g[j, i] / scale)
            parts.append(
                f'<rect x="{i * cell}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{color}"/>'
            )
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")


def emit_visual_comparison(cfg, reports, truth, out_dir=None):
    """Export u_x, u_y and psi panels for each method plus the truth.

    reports maps method name to {"ux": ReadoutReport, "uy": ReadoutReport}
    at one shared shot budget; truth is the (u_x, u_y) field pair.  Returns
    the list of written file paths.
    """
    out_dir = out_dir or os.path.join(cfg.out_dir, "visual")
    os.makedirs(out_dir, exist_ok=True)
    tx, ty = truth
    panels = {"truth": {"ux": unit_vector(tx), "uy": unit_vector(ty)}}
    for method, comp_reports in reports.items():
        if set(comp_reports) != {"ux", "uy"}:
            raise FieldError(f"method {method} must report both components")
        panels[method] = {c: comp_reports[c].reconstruction for c in ("ux", "uy")}

    written = []
    for name, comps in panels.items():
        fields = {
            c: Field2D(nx=cfg.nx, ny=cfg.ny, values=np.asarray(v))
            for c, v in comps.items()
        }
        fields["psi"] = stream_function(fields["ux"])
        label = METHOD_LABELS.get(name, name)
        for c, f in fields.items():
            csv_path = os.path.join(out_dir, f"{name}_{c}.csv")
            write_grid_csv(f, csv_path)
            svg_path = os.path.join(out_dir, f"{name}_{c}.svg")
            svg_heatmap(f, svg_path, title=f"{label} {c}")
            written.extend([csv_path, svg_path])
    return written


def visual_shot_budget(cfg, offline, requested: int) -> int:
    """Shared budget divisible by every component's basis count."""
    return harmonized_shots(
        requested, [offline.components[c].basis.n_b for c in ("ux", "uy")]
    )
