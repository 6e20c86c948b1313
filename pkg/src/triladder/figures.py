"""Dependency-free SVG figures of a sweep point.

Three panels per report: the rung-rung correlation heatmap (shot estimates
below the diagonal, exact values above), correlation against rung distance
with per-distance means, and bond kinetic energies per rung.
"""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .observables import ObservableReport


def _color(value: float, vmax: float) -> str:
    """Diverging red (positive) / blue (negative) scale, white at zero."""
    if value is None or not math.isfinite(value):
        return "#d9d9d9"
    x = max(-1.0, min(1.0, value / vmax)) if vmax > 0 else 0.0
    if x >= 0:
        r, g, b = 255, int(255 * (1 - x)), int(255 * (1 - x))
    else:
        r, g, b = int(255 * (1 + x)), int(255 * (1 + x)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def _svg(width: int, height: int, body: list[str], title: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, f"<title>{escape(title)}</title>",
                      f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _text(x: float, y: float, s: str, anchor: str = "middle", size: int = 11, extra: str = "") -> str:
    return (f'<text x="{x:.1f}" y="{y:.1f}" text-anchor="{anchor}" font-family="sans-serif" '
            f'font-size="{size}" {extra}>{escape(s)}</text>')


def heatmap_matrix(report: ObservableReport) -> np.ndarray:
    """Rung x rung array: shot values below the diagonal, exact above, NaN elsewhere."""
    n = len(report.currents)
    shots = report.shots.get("g_matrix", report.g_matrix)
    m = np.full((n, n), np.nan)
    for (i, j), v in report.g_matrix.items():
        m[i, j] = v
        m[j, i] = shots.get((i, j), v)
    return m


def heatmap_svg(report: ObservableReport, title: str = "") -> str:
    m = heatmap_matrix(report)
    n = m.shape[0]
    cell, left, top = 44, 50, 40
    vmax = float(np.nanmax(np.abs(m))) if np.any(np.isfinite(m)) else 1.0
    body = [_text(left + n * cell / 2, 22, title or "current correlations G (J^2)")]
    for i in range(n):
        for j in range(n):
            v = m[i, j]
            x, y = left + j * cell, top + i * cell
            body.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{_color(v, vmax)}" '
                        f'stroke="#888" stroke-width="0.5" data-value="{"nan" if np.isnan(v) else repr(float(v))}"/>')
            if np.isfinite(v):
                body.append(_text(x + cell / 2, y + cell / 2 + 4, f"{v:.3f}", size=9))
        body.append(_text(left - 10, top + i * cell + cell / 2 + 4, str(i + 1), anchor="end"))
        body.append(_text(left + i * cell + cell / 2, top + n * cell + 16, str(i + 1)))
    body.append(_text(left + n * cell / 2, top + n * cell + 34, "rung (lower left: sampled, upper right: exact)"))
    bar_x = left + n * cell + 20
    for k in range(21):
        v = vmax * (1 - k / 10)
        body.append(f'<rect x="{bar_x}" y="{top + k * n * cell / 21:.1f}" width="14" '
                    f'height="{n * cell / 21 + 0.5:.1f}" fill="{_color(v, vmax)}"/>')
    body.append(_text(bar_x + 18, top + 8, f"{vmax:+.3f}", anchor="start"))
    body.append(_text(bar_x + 18, top + n * cell, f"{-vmax:+.3f}", anchor="start"))
    return _svg(left + n * cell + 100, top + n * cell + 50, body, title or "correlation heatmap")


class _Axes:
    def __init__(self, x0, x1, y0, y1, width=480, height=320, margin=55):
        if y1 - y0 < 1e-12:
            y0, y1 = y0 - 1, y1 + 1
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.w, self.h, self.m = width, height, margin

    def px(self, x):
        return self.m + (x - self.x0) / (self.x1 - self.x0) * (self.w - 2 * self.m)

    def py(self, y):
        return self.h - self.m - (y - self.y0) / (self.y1 - self.y0) * (self.h - 2 * self.m)

    def frame(self, xlabel, ylabel, xticks):
        out = [f'<line x1="{self.m}" y1="{self.h - self.m}" x2="{self.w - self.m}" y2="{self.h - self.m}" '
               f'stroke="black"/>',
               f'<line x1="{self.m}" y1="{self.m}" x2="{self.m}" y2="{self.h - self.m}" stroke="black"/>']
        if self.y0 < 0 < self.y1:
            out.append(f'<line x1="{self.m}" y1="{self.py(0):.1f}" x2="{self.w - self.m}" y2="{self.py(0):.1f}" '
                       f'stroke="#999" stroke-dasharray="4 3"/>')
        for t in xticks:
            out.append(_text(self.px(t), self.h - self.m + 15, str(t)))
        for k in range(5):
            v = self.y0 + k * (self.y1 - self.y0) / 4
            out.append(_text(self.m - 6, self.py(v) + 4, f"{v:.2f}", anchor="end"))
        out.append(_text(self.w / 2, self.h - 12, xlabel))
        out.append(_text(14, self.h / 2, ylabel, extra=f'transform="rotate(-90 14 {self.h / 2})"'))
        return out


def distance_svg(report: ObservableReport, title: str = "") -> str:
    exact = report.g_matrix
    shots = report.shots.get("g_matrix", {})
    errs = report.errors.get("g_matrix", {})
    dists = sorted({j - i for i, j in exact})
    vals = list(exact.values()) + [v + s * errs.get(k, 0) for k, v in shots.items() for s in (-1, 1)]
    lo, hi = min(vals + [0.0]), max(vals + [0.0])
    pad = 0.08 * (hi - lo or 1)
    ax = _Axes(min(dists) - 0.6, max(dists) + 0.6, lo - pad, hi + pad)
    body = [_text(ax.w / 2, 20, title or "G versus rung distance")]
    body += ax.frame("rung distance", "G (J^2)", dists)
    for d in dists:
        pairs = [k for k in exact if k[1] - k[0] == d]
        for n, k in enumerate(pairs):
            x = ax.px(d + 0.12 * (n - (len(pairs) - 1) / 2))
            body.append(f'<circle cx="{x:.1f}" cy="{ax.py(exact[k]):.1f}" r="3.5" fill="none" stroke="#444" '
                        f'class="exact"/>')
            if k in shots:
                e = errs.get(k, 0.0)
                body.append(f'<line x1="{x:.1f}" y1="{ax.py(shots[k] - e):.1f}" x2="{x:.1f}" '
                            f'y2="{ax.py(shots[k] + e):.1f}" stroke="#c33"/>')
                body.append(f'<circle cx="{x:.1f}" cy="{ax.py(shots[k]):.1f}" r="2.5" fill="#c33" class="sampled"/>')
        source = shots if all(k in shots for k in pairs) else exact
        mean = float(np.mean([source[k] for k in pairs]))
        body.append(f'<line x1="{ax.px(d - 0.35):.1f}" y1="{ax.py(mean):.1f}" x2="{ax.px(d + 0.35):.1f}" '
                    f'y2="{ax.py(mean):.1f}" stroke="#1f5fbf" stroke-width="2.5" class="mean"/>')
    return _svg(ax.w, ax.h, body, title or "correlation versus distance")


def bonds_svg(report: ObservableReport, title: str = "") -> str:
    exact = np.asarray(report.bond_o)
    est = report.shots.get("bond_o")
    err = report.errors.get("bond_o")
    vals = list(exact) + ([] if est is None else [v for v in est if np.isfinite(v)])
    lo, hi = min(vals + [0.0]), max(vals + [0.0])
    pad = 0.1 * (hi - lo or 1)
    n = len(exact)
    ax = _Axes(0.4, n + 0.6, lo - pad, hi + pad)
    body = [_text(ax.w / 2, 20, title or f"bond kinetic energy, O_BO = {report.bond_order:.3f}")]
    body += ax.frame("rung", "O_j", list(range(1, n + 1)))
    for k in range(n):
        x = ax.px(k + 1)
        y, y0 = ax.py(exact[k]), ax.py(0)
        fill = "#d9822b" if exact[k] >= 0 else "#2b7bd9"
        body.append(f'<rect x="{x - 12:.1f}" y="{min(y, y0):.1f}" width="24" height="{abs(y - y0):.1f}" '
                    f'fill="{fill}" class="exact"/>')
        if est is not None and np.isfinite(est[k]):
            e = 0.0 if err is None else float(err[k])
            body.append(f'<line x1="{x:.1f}" y1="{ax.py(est[k] - e):.1f}" x2="{x:.1f}" y2="{ax.py(est[k] + e):.1f}" '
                        f'stroke="black"/>')
            body.append(f'<circle cx="{x:.1f}" cy="{ax.py(est[k]):.1f}" r="3" fill="black" class="sampled"/>')
    return _svg(ax.w, ax.h, body, title or "bond kinetic energies")


def emit_figures(reports: dict[str, ObservableReport], out: Path) -> list[Path]:
    """Write heatmap, distance and bond SVGs for every labelled report."""
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for label, rep in sorted(reports.items()):
        for kind, fn in (("heatmap", heatmap_svg), ("distance", distance_svg), ("bonds", bonds_svg)):
            path = out / f"{kind}_{label}.svg"
            path.write_text(fn(rep, title=f"{kind} {label}"))
            written.append(path)
    return written


def report_from_json(data: dict) -> ObservableReport:
    """Rebuild enough of a report from its JSON form to draw it."""
    def pairs(rows):
        return {(r["rung_i"] - 1, r["rung_j"] - 1): r["value"] for r in rows}

    def arr(values):
        return np.array([np.nan if v is None else v for v in values], dtype=float)

    rep = ObservableReport(np.array(data["one_body"]["real"]) + 1j * np.array(data["one_body"]["imag"]),
                           np.array(data["currents"]), pairs(data["g_matrix"]), data["chiral_c"],
                           np.array(data["bond_o"]), data["bond_order"], data["j_scale_rad_per_s"],
                           metadata=data.get("metadata", {}))
    for store, key in ((rep.shots, "shots"), (rep.errors, "errors")):
        for name, val in data.get(key, {}).items():
            if name == "g_matrix":
                store[name] = pairs(val)
            elif isinstance(val, list):
                store[name] = arr(val)
            else:
                store[name] = val
    return rep
