"""Small deterministic SVG charts, no plotting dependency.

Two chart types cover the package's reporting needs: grouped boxplots for
simulation summaries and line charts for sensitivity curves.  Everything is
computed with fixed formatting so the same inputs always produce the same
bytes.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = ["render_boxplot", "render_lines", "save_svg"]

_W, _H = 640, 400
_MARGIN = {"left": 62, "right": 16, "top": 34, "bottom": 46}
_PALETTE = ("#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _yaxis(lo: float, hi: float) -> tuple[float, float, list[float]]:
    if not np.isfinite(lo) or not np.isfinite(hi):
        lo, hi = 0.0, 1.0
    if hi <= lo:
        pad = max(abs(lo), 1.0) * 0.1
        lo, hi = lo - pad, hi + pad
    span = hi - lo
    lo -= 0.05 * span
    hi += 0.05 * span
    ticks = [lo + (hi - lo) * k / 4 for k in range(5)]
    return lo, hi, ticks


def _frame(title: str, ylabel: str, lo: float, hi: float, ticks: list[float]) -> list[str]:
    x0, x1 = _MARGIN["left"], _W - _MARGIN["right"]
    y0, y1 = _H - _MARGIN["bottom"], _MARGIN["top"]

    def sy(v: float) -> float:
        return y0 + (v - lo) / (hi - lo) * (y1 - y0)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="13">'
        f"{_esc(title)}</text>",
        f'<text x="14" y="{(y0 + y1) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2})">{_esc(ylabel)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for tv in ticks:
        yy = _fmt(sy(tv))
        out.append(
            f'<line x1="{x0 - 4}" y1="{yy}" x2="{x0}" y2="{yy}" stroke="black"/>'
        )
        out.append(
            f'<text x="{x0 - 7}" y="{yy}" text-anchor="end" dy="3">{_fmt(tv)}</text>'
        )
    return out


def render_boxplot(
    groups: Sequence[tuple[str, Sequence[float]]],
    *,
    title: str = "",
    ylabel: str = "",
) -> str:
    """Quartile boxes with 1.5 IQR whiskers and outlier dots, one per group.

    Groups render left to right in the given order; an empty group keeps its
    slot and is labelled "(no data)".
    """
    all_vals = [v for _, vals in groups for v in vals]
    lo, hi, ticks = _yaxis(
        min(all_vals) if all_vals else 0.0, max(all_vals) if all_vals else 1.0
    )
    out = _frame(title, ylabel, lo, hi, ticks)
    x0, x1 = _MARGIN["left"], _W - _MARGIN["right"]
    y0, y1 = _H - _MARGIN["bottom"], _MARGIN["top"]

    def sy(v: float) -> float:
        return y0 + (v - lo) / (hi - lo) * (y1 - y0)

    k = max(len(groups), 1)
    slot = (x1 - x0) / k
    half = min(slot * 0.3, 34.0)
    for i, (label, vals) in enumerate(groups):
        cx = x0 + slot * (i + 0.5)
        color = _PALETTE[i % len(_PALETTE)]
        out.append(
            f'<text x="{_fmt(cx)}" y="{y0 + 16}" text-anchor="middle">'
            f"{_esc(label)}</text>"
        )
        if len(vals) == 0:
            out.append(
                f'<text x="{_fmt(cx)}" y="{y0 + 30}" text-anchor="middle" '
                f'fill="#888">(no data)</text>'
            )
            continue
        a = np.asarray(vals, dtype=float)
        q1, q2, q3 = np.quantile(a, [0.25, 0.5, 0.75], method="linear")
        iqr = q3 - q1
        in_lo = a[a >= q1 - 1.5 * iqr]
        in_hi = a[a <= q3 + 1.5 * iqr]
        wlo = float(in_lo.min()) if in_lo.size else float(q1)
        whi = float(in_hi.max()) if in_hi.size else float(q3)
        outliers = a[(a < q1 - 1.5 * iqr) | (a > q3 + 1.5 * iqr)]
        bx, bw = _fmt(cx - half), _fmt(2 * half)
        out.append(
            f'<rect x="{bx}" y="{_fmt(sy(q3))}" width="{bw}" '
            f'height="{_fmt(sy(q1) - sy(q3))}" fill="{color}" fill-opacity="0.35" '
            f'stroke="{color}"/>'
        )
        out.append(
            f'<line x1="{bx}" y1="{_fmt(sy(q2))}" x2="{_fmt(cx + half)}" '
            f'y2="{_fmt(sy(q2))}" stroke="{color}" stroke-width="2"/>'
        )
        for wv, qv in ((wlo, q1), (whi, q3)):
            out.append(
                f'<line x1="{_fmt(cx)}" y1="{_fmt(sy(qv))}" x2="{_fmt(cx)}" '
                f'y2="{_fmt(sy(wv))}" stroke="{color}"/>'
            )
            out.append(
                f'<line x1="{_fmt(cx - half / 2)}" y1="{_fmt(sy(wv))}" '
                f'x2="{_fmt(cx + half / 2)}" y2="{_fmt(sy(wv))}" stroke="{color}"/>'
            )
        for ov in sorted(float(v) for v in outliers):
            out.append(
                f'<circle cx="{_fmt(cx)}" cy="{_fmt(sy(ov))}" r="2.5" '
                f'fill="none" stroke="{color}"/>'
            )
    out.append("</svg>")
    return "\n".join(out)


def render_lines(
    series: Sequence[tuple[str, Sequence[tuple[float, float | None]]]],
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    vline: float | None = None,
) -> str:
    """Line chart; a None ordinate breaks the line, leaving a gap."""
    xs = [p[0] for _, pts in series for p in pts]
    ys = [p[1] for _, pts in series for p in pts if p[1] is not None]
    ylo, yhi, ticks = _yaxis(min(ys) if ys else 0.0, max(ys) if ys else 1.0)
    out = _frame(title, ylabel, ylo, yhi, ticks)
    x0, x1 = _MARGIN["left"], _W - _MARGIN["right"]
    y0, y1 = _H - _MARGIN["bottom"], _MARGIN["top"]
    xlo = min(xs) if xs else 0.0
    xhi = max(xs) if xs else 1.0
    if xhi <= xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5

    def sx(v: float) -> float:
        return x0 + (v - xlo) / (xhi - xlo) * (x1 - x0)

    def sy(v: float) -> float:
        return y0 + (v - ylo) / (yhi - ylo) * (y1 - y0)

    out.append(
        f'<text x="{(x0 + x1) / 2}" y="{_H - 10}" text-anchor="middle">'
        f"{_esc(xlabel)}</text>"
    )
    for k in range(5):
        tv = xlo + (xhi - xlo) * k / 4
        out.append(
            f'<line x1="{_fmt(sx(tv))}" y1="{y0}" x2="{_fmt(sx(tv))}" '
            f'y2="{y0 + 4}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_fmt(sx(tv))}" y="{y0 + 16}" text-anchor="middle">'
            f"{_fmt(tv)}</text>"
        )
    if vline is not None and xlo <= vline <= xhi:
        out.append(
            f'<line x1="{_fmt(sx(vline))}" y1="{y0}" x2="{_fmt(sx(vline))}" '
            f'y2="{y1}" stroke="#999" stroke-dasharray="4 3"/>'
        )
    for i, (label, pts) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        segment: list[str] = []
        for px, py in sorted(pts, key=lambda p: p[0]):
            if py is None:
                if len(segment) > 1:
                    out.append(
                        f'<polyline points="{" ".join(segment)}" fill="none" '
                        f'stroke="{color}" stroke-width="1.5"/>'
                    )
                segment = []
                continue
            segment.append(f"{_fmt(sx(px))},{_fmt(sy(py))}")
            out.append(
                f'<circle cx="{_fmt(sx(px))}" cy="{_fmt(sy(py))}" r="2" '
                f'fill="{color}"/>'
            )
        if len(segment) > 1:
            out.append(
                f'<polyline points="{" ".join(segment)}" fill="none" '
                f'stroke="{color}" stroke-width="1.5"/>'
            )
        out.append(
            f'<text x="{x1 - 6}" y="{y1 + 14 + 14 * i}" text-anchor="end" '
            f'fill="{color}">{_esc(label)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out)


def save_svg(svg: str, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(svg)
        fh.write("\n")
