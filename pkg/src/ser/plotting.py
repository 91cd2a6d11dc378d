"""Standalone SVG rendering for loss curves, spectrogram heat maps and waveforms."""

from __future__ import annotations

import math

import numpy as np

WIDTH, HEIGHT, MARGIN = 640, 360, 50


def _header(width, height):
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _axes(parts, x_label, y_label, width=WIDTH, height=HEIGHT):
    x0, y0, x1 = MARGIN, height - MARGIN, width - 10
    parts.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="10" stroke="black"/>')
    parts.append(f'<text class="xlabel" x="{(x0 + x1) / 2}" y="{height - 10}" '
                 f'text-anchor="middle" font-size="12">{x_label}</text>')
    parts.append(f'<text class="ylabel" x="14" y="{(10 + y0) / 2}" font-size="12" '
                 f'transform="rotate(-90 14 {(10 + y0) / 2})" text-anchor="middle">{y_label}</text>')


def loss_curve_svg(train_loss, val_loss, title: str = "") -> str:
    """Two polylines (train, validation) over epochs, one x tick per epoch."""
    parts = _header(WIDTH, HEIGHT)
    _axes(parts, "epoch", "loss")
    n = len(train_loss)
    if title:
        parts.append(f'<text x="{WIDTH / 2}" y="16" text-anchor="middle" font-size="13">{title}</text>')
    if n:
        values = [v for v in list(train_loss) + list(val_loss) if math.isfinite(v)]
        top = max(values) if values else 1.0
        top = top if top > 0 else 1.0
        x_span = WIDTH - 10 - MARGIN
        y_span = HEIGHT - MARGIN - 20

        def xy(i, v):
            x = MARGIN + (x_span * (i + 0.5) / n)
            y = HEIGHT - MARGIN - y_span * (v / top)
            return f"{_fmt(x)},{_fmt(y)}"

        for i in range(n):
            x = MARGIN + x_span * (i + 0.5) / n
            parts.append(f'<line class="xtick" x1="{_fmt(x)}" y1="{HEIGHT - MARGIN}" '
                         f'x2="{_fmt(x)}" y2="{HEIGHT - MARGIN + 5}" stroke="black"/>')
        for name, series, color in (("train", train_loss, "#1f77b4"), ("val", val_loss, "#ff7f0e")):
            pts = " ".join(xy(i, v) for i, v in enumerate(series))
            parts.append(f'<polyline class="{name}" fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        parts.append(f'<text x="{WIDTH - 80}" y="30" fill="#1f77b4" font-size="12">train</text>')
        parts.append(f'<text x="{WIDTH - 80}" y="46" fill="#ff7f0e" font-size="12">validation</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def spectrogram_svg(values, cell: int = 3) -> str:
    """Grayscale heat map; low frequencies at the bottom. Size is cell * (cols, rows)."""
    v = np.asarray(values, dtype=np.float64)
    rows, cols = v.shape
    lo, hi = float(v.min()), float(v.max())
    norm = (v - lo) / (hi - lo) if hi > lo else np.full(v.shape, 0.5)
    width, height = cols * cell, rows * cell
    parts = _header(width, height)
    for r in range(rows):
        y = (rows - 1 - r) * cell
        for c in range(cols):
            g = int(round(255 * norm[r, c]))
            parts.append(f'<rect x="{c * cell}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="rgb({g},{g},{g})"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def waveform_points(samples, max_points: int = 2000) -> np.ndarray:
    s = np.asarray(samples, dtype=np.float64)
    step = max(1, math.ceil(len(s) / max_points))
    return s[::step]


def waveform_svg(samples, sample_rate: int, max_points: int = 2000) -> str:
    pts = waveform_points(samples, max_points)
    parts = _header(WIDTH, HEIGHT)
    _axes(parts, "time (s)", "amplitude")
    n = len(pts)
    if n:
        x_span = WIDTH - 10 - MARGIN
        mid = (HEIGHT - MARGIN + 10) / 2
        half = (HEIGHT - MARGIN - 10) / 2
        coords = " ".join(
            f"{_fmt(MARGIN + x_span * i / max(n - 1, 1))},{_fmt(mid - half * p)}" for i, p in enumerate(pts)
        )
        parts.append(f'<polyline class="waveform" fill="none" stroke="black" stroke-width="1" points="{coords}"/>')
    duration = len(samples) / sample_rate
    parts.append(f'<text x="{WIDTH - 10}" y="{HEIGHT - MARGIN + 18}" text-anchor="end" '
                 f'font-size="11">{duration:.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
