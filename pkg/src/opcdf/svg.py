"""Minimal SVG writer for step functions, shaded bands and line charts."""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def _f(x: float) -> str:
    return format(float(x), ".6g")


def _step_points(x: Sequence[float], y: Sequence[float], x_lo: float, x_hi: float, before: float) -> List[Tuple[float, float]]:
    pts = [(x_lo, before)]
    prev = before
    for xi, yi in zip(x, y):
        pts.append((xi, prev))
        pts.append((xi, yi))
        prev = yi
    pts.append((x_hi, prev))
    return pts


class Plot:
    """A single chart with linear axes."""

    def __init__(
        self,
        x_range: Tuple[float, float],
        y_range: Tuple[float, float] = (0.0, 1.0),
        width: int = 640,
        height: int = 400,
        title: str = "",
        x_label: str = "",
        y_label: str = "",
        log_x: bool = False,
    ) -> None:
        self.width, self.height = width, height
        self.margin = 55
        self.log_x = log_x
        x0, x1 = (np.log10(x_range[0]), np.log10(x_range[1])) if log_x else x_range
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x0 + 0.5
        y0, y1 = y_range
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y0 + 0.5
        self.x0, self.x1, self.y0, self.y1 = float(x0), float(x1), float(y0), float(y1)
        self.title, self.x_label, self.y_label = title, x_label, y_label
        self.items: List[str] = []
        self.legend: List[Tuple[str, str]] = []

    def _px(self, x: float) -> float:
        if self.log_x:
            x = np.log10(x)
        return self.margin + (x - self.x0) / (self.x1 - self.x0) * (self.width - 2 * self.margin)

    def _py(self, y: float) -> float:
        return self.height - self.margin - (y - self.y0) / (self.y1 - self.y0) * (self.height - 2 * self.margin)

    def _path(self, pts) -> str:
        return " ".join(("M" if i == 0 else "L") + f"{_f(self._px(x))},{_f(self._py(y))}" for i, (x, y) in enumerate(pts))

    def line(self, x, y, label: str = "", color: str = None) -> None:
        color = color or _PALETTE[len(self.legend) % len(_PALETTE)]
        self.items.append(f'<path d="{self._path(zip(x, y))}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if label:
            self.legend.append((label, color))

    def step(self, x, y, before: float = 0.0, label: str = "", color: str = None) -> None:
        color = color or _PALETTE[len(self.legend) % len(_PALETTE)]
        xs = np.asarray(x, dtype=float)
        pts = _step_points(xs, y, min(self.x0, xs.min() if xs.size else self.x0), max(self.x1, xs.max() if xs.size else self.x1), before)
        pts = [(min(max(px, self.x0), self.x1), py) for px, py in pts]
        self.items.append(f'<path d="{self._path(pts)}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if label:
            self.legend.append((label, color))

    def band(self, x, lower, upper, label: str = "", color: str = "#1f77b4") -> None:
        """Shaded region between a right-continuous lower and a left-continuous upper edge."""
        xs = np.asarray(x, dtype=float)
        lo_pts = _step_points(xs, lower, xs[0], xs[-1], 0.0)[1:]
        up_pts = []
        for i in range(xs.size):
            if i:
                up_pts.append((xs[i - 1], upper[i]))
            up_pts.append((xs[i], upper[i]))
        poly = lo_pts + up_pts[::-1]
        self.items.append(f'<path d="{self._path(poly)} Z" fill="{color}" fill-opacity="0.25" stroke="{color}" stroke-width="1"/>')
        if label:
            self.legend.append((label, color))

    def _axes(self) -> List[str]:
        m, w, h = self.margin, self.width, self.height
        out = [
            f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>',
            f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>',
        ]
        for k in range(5):
            fx = self.x0 + k * (self.x1 - self.x0) / 4
            label = 10**fx if self.log_x else fx
            px = m + k * (w - 2 * m) / 4
            out.append(f'<text x="{_f(px)}" y="{h - m + 16}" font-size="11" text-anchor="middle">{_f(label)}</text>')
            fy = self.y0 + k * (self.y1 - self.y0) / 4
            py = h - m - k * (h - 2 * m) / 4
            out.append(f'<text x="{m - 6}" y="{_f(py + 4)}" font-size="11" text-anchor="end">{_f(fy)}</text>')
        if self.title:
            out.append(f'<text x="{w / 2}" y="{m / 2}" font-size="14" text-anchor="middle">{_escape(self.title)}</text>')
        if self.x_label:
            out.append(f'<text x="{w / 2}" y="{h - 12}" font-size="12" text-anchor="middle">{_escape(self.x_label)}</text>')
        if self.y_label:
            out.append(
                f'<text x="14" y="{h / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {h / 2})">{_escape(self.y_label)}</text>'
            )
        for i, (label, color) in enumerate(self.legend):
            y = m + 14 * i
            out.append(f'<rect x="{w - m - 130}" y="{y - 9}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{w - m - 115}" y="{y}" font-size="11">{_escape(label)}</text>')
        return out

    def render(self) -> str:
        body = "\n".join(self.items + self._axes())
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'
        )


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
