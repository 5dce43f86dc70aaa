"""Dependency-free SVG line plots of objective versus samples consumed.

Hand-written SVG 1.1 paths: one polyline per trajectory CSV, log-scale
y-axis, legend from file names. Output is deterministic text, so identical
inputs produce byte-identical plots.
"""
from __future__ import annotations

import math
from pathlib import Path

from .core import ConfigError
from .harness import read_trajectory_csv

WIDTH, HEIGHT = 900.0, 560.0
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 80.0, 180.0, 30.0, 60.0
LOG_FLOOR = 1e-16

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
)


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def emit_svg_plot(csv_paths, out_path) -> list[str]:
    """Render the given trajectory CSVs into one SVG file.

    Nonpositive objectives are clipped to 1e-16 for the log scale (a warning
    string is returned per affected file). Returns the list of warnings.
    """
    if not csv_paths:
        raise ConfigError("no trajectory CSVs given")
    warnings: list[str] = []
    series = []
    for path in csv_paths:
        rows = read_trajectory_csv(path)
        xs = [it.cumulative_samples for it in rows]
        ys = []
        clipped = False
        for it in rows:
            if it.objective <= 0.0:
                clipped = True
                ys.append(LOG_FLOOR)
            else:
                ys.append(it.objective)
        if clipped:
            warnings.append(f"{path}: nonpositive objective values clipped to {LOG_FLOOR:g} for log scale")
        series.append((Path(path).stem, xs, [math.log10(y) for y in ys]))

    x_max = max(max(xs) for _, xs, _ in series if xs) or 1
    y_lo = min(min(ys) for _, _, ys in series)
    y_hi = max(max(ys) for _, _, ys in series)
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x: float) -> float:
        return MARGIN_L + plot_w * x / x_max

    def sy(ylog: float) -> float:
        return MARGIN_T + plot_h * (y_hi - ylog) / (y_hi - y_lo)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH:g}" '
        f'height="{HEIGHT:g}" viewBox="0 0 {WIDTH:g} {HEIGHT:g}">\n',
        f'<rect x="0" y="0" width="{WIDTH:g}" height="{HEIGHT:g}" fill="white"/>\n',
        f'<rect x="{MARGIN_L:g}" y="{MARGIN_T:g}" width="{plot_w:g}" height="{plot_h:g}" '
        'fill="none" stroke="#333" stroke-width="1"/>\n',
    ]

    for xt in _ticks(0.0, float(x_max)):
        parts.append(
            f'<line x1="{sx(xt):.2f}" y1="{MARGIN_T + plot_h:.2f}" x2="{sx(xt):.2f}" '
            f'y2="{MARGIN_T + plot_h + 5:.2f}" stroke="#333"/>\n'
            f'<text x="{sx(xt):.2f}" y="{MARGIN_T + plot_h + 20:.2f}" font-size="12" '
            f'text-anchor="middle">{xt:.3g}</text>\n'
        )
    lo_dec, hi_dec = math.floor(y_lo), math.ceil(y_hi)
    dec_step = max(1, (hi_dec - lo_dec) // 6)
    for dec in range(lo_dec, hi_dec + 1, dec_step):
        if not y_lo <= dec <= y_hi:
            continue
        parts.append(
            f'<line x1="{MARGIN_L - 5:.2f}" y1="{sy(dec):.2f}" x2="{MARGIN_L:.2f}" '
            f'y2="{sy(dec):.2f}" stroke="#333"/>\n'
            f'<text x="{MARGIN_L - 10:.2f}" y="{sy(dec) + 4:.2f}" font-size="12" '
            f'text-anchor="end">1e{dec}</text>\n'
        )
    parts.append(
        f'<text x="{MARGIN_L + plot_w / 2:.2f}" y="{HEIGHT - 15:.2f}" font-size="13" '
        'text-anchor="middle">cumulative samples</text>\n'
        f'<text x="20" y="{MARGIN_T + plot_h / 2:.2f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 20 {MARGIN_T + plot_h / 2:.2f})">objective (log scale)</text>\n'
    )

    for i, (name, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(min(max(y, y_lo), y_hi)):.2f}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>\n'
        )
        ly = MARGIN_T + 15 + 18 * i
        parts.append(
            f'<line x1="{MARGIN_L + plot_w + 10:.2f}" y1="{ly:.2f}" '
            f'x2="{MARGIN_L + plot_w + 30:.2f}" y2="{ly:.2f}" stroke="{color}" stroke-width="2"/>\n'
            f'<text x="{MARGIN_L + plot_w + 35:.2f}" y="{ly + 4:.2f}" font-size="12">{name}</text>\n'
        )

    parts.append("</svg>\n")
    Path(out_path).write_text("".join(parts))
    return warnings
