"""Self-contained SVG plots of experiment CSV reports.

The SVG is written by hand; no plotting library is needed.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import SchemaMismatch
from .runner import SCHEMAS

PLOT_KINDS = {"lyapunov": "lyapunov_sweep", "ids": "ids_sweep", "transport": "transport"}

_W, _H, _PAD = 640, 440, 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#7f7f7f", "#9467bd")


def read_csv(path, kind: str) -> dict:
    """Columns of a report as float arrays, after checking the header."""
    schema = SCHEMAS[PLOT_KINDS[kind]]
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path} is empty")
    if rows[0] != schema:
        raise SchemaMismatch(f"{path} has columns {rows[0]}, expected {schema}")
    if len(rows) < 2:
        raise SchemaMismatch(f"{path} has a header but no data rows")
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    return {name: data[:, j] for j, name in enumerate(schema)}


class _Axes:
    def __init__(self, x, y, logx, logy):
        self.logx, self.logy = logx, logy
        fx = np.log10 if logx else (lambda a: np.asarray(a, float))
        fy = np.log10 if logy else (lambda a: np.asarray(a, float))
        self.fx, self.fy = fx, fy
        xs, ys = fx(x), fy(y)
        self.x0, self.x1 = _pad_range(xs)
        self.y0, self.y1 = _pad_range(ys)

    def px(self, x):
        return _PAD + (self.fx(x) - self.x0) / (self.x1 - self.x0) * (_W - 2 * _PAD)

    def py(self, y):
        return _H - _PAD - (self.fy(y) - self.y0) / (self.y1 - self.y0) * (_H - 2 * _PAD)


def _pad_range(v):
    v = np.asarray(v, float)
    v = v[np.isfinite(v)]
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    m = 0.05 * (hi - lo)
    return lo - m, hi + m


def _polyline(ax, x, y, color, dash=None):
    keep = np.isfinite(x) & np.isfinite(y) & ((y > 0) if ax.logy else True) & \
        ((x > 0) if ax.logx else True)
    pts = " ".join(f"{ax.px(a):.2f},{ax.py(b):.2f}" for a, b in zip(x[keep], y[keep]))
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{d} points="{pts}"/>'


def _markers(ax, x, y, color):
    out = []
    for a, b in zip(x, y):
        if np.isfinite(a) and np.isfinite(b) and (b > 0 or not ax.logy) and (a > 0 or not ax.logx):
            out.append(f'<circle cx="{ax.px(a):.2f}" cy="{ax.py(b):.2f}" r="3" fill="{color}"/>')
    return out


def _ticks(lo, hi, log):
    """(position, label) pairs; log axes get 1-2-5 ticks on powers of ten."""
    if not log:
        return [(t, f"{t:.3g}") for t in np.linspace(lo, hi, 5)]
    out = []
    for k in range(int(np.floor(lo)), int(np.ceil(hi)) + 1):
        for m in (1, 2, 5):
            t = k + np.log10(m)
            if lo <= t <= hi:
                out.append((t, m, f"{m * 10.0 ** k:g}"))
    if sum(1 for o in out if o[1] == 1) >= 2:
        out = [o for o in out if o[1] == 1]
    return [(t, label) for t, _, label in out]


def _frame(ax, title, xlabel, ylabel, legend):
    out = [f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
           'fill="none" stroke="black"/>',
           f'<text x="{_W / 2}" y="{_PAD / 2}" text-anchor="middle" font-size="15">{title}</text>',
           f'<text x="{_W / 2}" y="{_H - 15}" text-anchor="middle" font-size="13">{xlabel}</text>',
           f'<text x="18" y="{_H / 2}" text-anchor="middle" font-size="13" '
           f'transform="rotate(-90 18 {_H / 2})">{ylabel}</text>']
    for lo, hi, horizontal, log in ((ax.x0, ax.x1, True, ax.logx), (ax.y0, ax.y1, False, ax.logy)):
        for tick, label in _ticks(lo, hi, log):
            if horizontal:
                p = _PAD + (tick - lo) / (hi - lo) * (_W - 2 * _PAD)
                out.append(f'<text x="{p:.1f}" y="{_H - _PAD + 16}" text-anchor="middle" '
                           f'font-size="10">{label}</text>')
            else:
                p = _H - _PAD - (tick - lo) / (hi - lo) * (_H - 2 * _PAD)
                out.append(f'<text x="{_PAD - 4}" y="{p:.1f}" text-anchor="end" '
                           f'font-size="10">{label}</text>')
    for j, (name, color) in enumerate(legend):
        y = _PAD + 16 + 16 * j
        out.append(f'<line x1="{_PAD + 10}" y1="{y - 4}" x2="{_PAD + 30}" y2="{y - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_PAD + 36}" y="{y}" font-size="11">{name}</text>')
    return out


def _reference(x, y, slope):
    """Power law through the geometric centre of the data with the given slope."""
    lx, ly = np.log(x), np.log(y)
    cx, cy = lx.mean(), ly.mean()
    xs = np.array([x.min(), x.max()])
    return xs, np.exp(cy + slope * (np.log(xs) - cx))


def render(kind: str, data: dict, q: float = 2.0) -> str:
    """SVG text for the report columns ``data``."""
    body, legend = [], []
    if kind == "lyapunov":
        x, y, f = np.abs(data["eps"]), data["gamma_mc"], data["gamma_formula"]
        ax = _Axes(np.concatenate([x, x]), np.concatenate([y, f]), True, True)
        body += _markers(ax, x, y, _COLORS[0])
        order = np.argsort(x)
        body.append(_polyline(ax, x[order], f[order], _COLORS[1]))
        rx, ry = _reference(x, y, 2.0)
        body.append(_polyline(ax, rx, ry, _COLORS[3], "6,4"))
        legend = [("Monte Carlo", _COLORS[0]), ("second order formula", _COLORS[1]),
                  ("slope 2", _COLORS[3])]
        title, xl, yl = "Lyapunov exponent near the critical energy", "|eps|", "gamma"
    elif kind == "ids":
        x, y, f = data["eps"], data["ids_mc"], data["ids_formula"]
        ax = _Axes(np.concatenate([x, x]), np.concatenate([y, f]), False, False)
        body += _markers(ax, x, y, _COLORS[0])
        order = np.argsort(x)
        body.append(_polyline(ax, x[order], f[order], _COLORS[1]))
        legend = [("Monte Carlo", _COLORS[0]), ("linear formula", _COLORS[1])]
        title, xl, yl = "Integrated density of states", "eps", "N(E_c + eps)"
    elif kind == "transport":
        x, g, o = data["T"], data["M_green"], data["M_oracle"]
        ax = _Axes(np.concatenate([x, x]), np.concatenate([g, o]), True, True)
        body.append(_polyline(ax, x, g, _COLORS[0]))
        body += _markers(ax, x, o, _COLORS[1])
        for slope, color, dash in ((q - 0.5, _COLORS[2], "6,4"), (q - 1.0, _COLORS[3], "2,3")):
            rx, ry = _reference(x, g, slope)
            body.append(_polyline(ax, rx, ry, color, dash))
        legend = [("resolvent", _COLORS[0]), ("spectral oracle", _COLORS[1]),
                  (f"T^{q - 0.5:g} (random)", _COLORS[2]), (f"T^{q - 1:g} (every configuration)", _COLORS[3])]
        title, xl, yl = f"Moment growth, q = {q:g}", "T", "M_q(T)"
    else:
        raise SchemaMismatch(f"unknown plot kind {kind!r}; expected one of {sorted(PLOT_KINDS)}")
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
             f'viewBox="0 0 {_W} {_H}">', '<rect width="100%" height="100%" fill="white"/>']
    parts += _frame(ax, title, xl, yl, legend)
    parts += body
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot(csv_path, kind: str, svg_path=None, q: float = 2.0) -> Path:
    """Render ``csv_path`` as an SVG next to it (or at ``svg_path``)."""
    if kind not in PLOT_KINDS:
        raise SchemaMismatch(f"unknown plot kind {kind!r}; expected one of {sorted(PLOT_KINDS)}")
    data = read_csv(csv_path, kind)
    svg_path = Path(svg_path) if svg_path else Path(csv_path).with_suffix(".svg")
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    svg_path.write_text(render(kind, data, q))
    return svg_path
