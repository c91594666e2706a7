"""Minimal SVG line charts.

Deterministic output: no timestamps, no randomness, fixed float formatting.
CSV files remain the canonical record; these charts exist so a run can be
eyeballed without any plotting stack installed.
"""

from __future__ import annotations

import numpy as np

WIDTH = 640
HEIGHT = 440
MARGIN_LEFT = 72
MARGIN_RIGHT = 16
MARGIN_TOP = 34
MARGIN_BOTTOM = 52
N_TICKS = 5

PALETTE = ("#1f77b4", "#7f7f7f", "#d62728", "#2ca02c", "#9467bd", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _finite_xy(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = min(x.size, y.size)
    x, y = x[:n], y[:n]
    keep = np.isfinite(x) & np.isfinite(y)
    return x[keep], y[keep]


def _data_range(values: np.ndarray) -> tuple[float, float]:
    lo = float(values.min())
    hi = float(values.max())
    if lo == hi:
        pad = abs(lo) * 0.05 if lo != 0.0 else 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.04
    return lo - pad, hi + pad


def line_chart(
    series: list[tuple[str, np.ndarray, np.ndarray]],
    x_label: str,
    y_label: str,
    title: str,
    path: str,
) -> None:
    """Write a polyline chart of one or more (label, x, y) series.

    Non-finite points are dropped. Series with fewer than two finite
    points are skipped; an all-empty chart still renders its axes.
    """
    cleaned = []
    for label, x, y in series:
        xf, yf = _finite_xy(x, y)
        if xf.size >= 2:
            cleaned.append((label, xf, yf))

    if cleaned:
        all_x = np.concatenate([s[1] for s in cleaned])
        all_y = np.concatenate([s[2] for s in cleaned])
        x_lo, x_hi = _data_range(all_x)
        y_lo, y_hi = _data_range(all_y)
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def sx(v):
        return MARGIN_LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return MARGIN_TOP + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="20" text-anchor="middle" font-size="14">'
        f"{title}</text>",
    ]

    ax_y = MARGIN_TOP + plot_h
    parts.append(
        f'<line x1="{MARGIN_LEFT}" y1="{ax_y}" x2="{MARGIN_LEFT + plot_w}" '
        f'y2="{ax_y}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" '
        f'y2="{ax_y}" stroke="black"/>'
    )

    for i in range(N_TICKS):
        f = i / (N_TICKS - 1)
        xv = x_lo + f * (x_hi - x_lo)
        yv = y_lo + f * (y_hi - y_lo)
        px = sx(xv)
        py = sy(yv)
        parts.append(
            f'<line x1="{px:.2f}" y1="{ax_y}" x2="{px:.2f}" y2="{ax_y + 5}" '
            f'stroke="black"/>'
        )
        parts.append(
            f'<text x="{px:.2f}" y="{ax_y + 18}" text-anchor="middle">'
            f"{_fmt(xv)}</text>"
        )
        parts.append(
            f'<line x1="{MARGIN_LEFT - 5}" y1="{py:.2f}" x2="{MARGIN_LEFT}" '
            f'y2="{py:.2f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{MARGIN_LEFT - 8}" y="{py + 4:.2f}" text-anchor="end">'
            f"{_fmt(yv)}</text>"
        )

    parts.append(
        f'<text x="{MARGIN_LEFT + plot_w / 2:.0f}" y="{HEIGHT - 12}" '
        f'text-anchor="middle">{x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{MARGIN_TOP + plot_h / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN_TOP + plot_h / 2:.0f})">{y_label}</text>'
    )

    for idx, (label, xf, yf) in enumerate(cleaned):
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xf, yf))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        lx = MARGIN_LEFT + plot_w - 8
        ly = MARGIN_TOP + 14 + 16 * idx
        parts.append(
            f'<line x1="{lx - 60}" y1="{ly - 4}" x2="{lx - 36}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(f'<text x="{lx - 30}" y="{ly}">{label}</text>')

    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def trajectory_charts(
    named_series: list[tuple[str, dict[str, np.ndarray]]], out_dir: str, stem: str
) -> list[str]:
    """Standard q-gamma, p-q, e-gamma charts for one or more trajectories.

    Each entry pairs a legend label with a Trajectory.series() dict.
    Returns the written file names (relative to out_dir).
    """
    import os

    specs = [
        ("q_gamma", "gamma", "q", "distortion", "q [kPa]", "deviator stress vs distortion"),
        ("p_q", "p", "q", "p [kPa]", "q [kPa]", "effective stress path"),
        ("e_gamma", "gamma", "e", "distortion", "void ratio", "void ratio vs distortion"),
    ]
    written = []
    for suffix, xk, yk, xl, yl, title in specs:
        series = [(label, s[xk], s[yk]) for label, s in named_series]
        name = f"{stem}_{suffix}.svg"
        line_chart(series, xl, yl, title, os.path.join(out_dir, name))
        written.append(name)
    return written
