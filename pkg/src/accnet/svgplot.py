"""Tiny self-contained SVG writer for log-log scaling plots.

Deliberately minimal: two decades of ticks, polyline series, straight
reference lines for fitted/predicted slopes, and text annotations.  Output is
plain XML with no randomness, but byte identity across runs is not part of
any contract (structure is)."""

import math

_WIDTH, _HEIGHT = 640, 480
_MARG = 60

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def _transform(xs, ys):
    lx = [math.log10(x) for x in xs]
    ly = [math.log10(y) for y in ys]
    return lx, ly


class LogLogPlot:
    def __init__(self, title="", xlabel="N", ylabel="error"):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.series = []   # (label, xs, ys, dashed)
        self.notes = []

    def add_series(self, label, xs, ys, dashed=False):
        pts = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0 and math.isfinite(y)]
        if pts:
            self.series.append((label, [p[0] for p in pts], [p[1] for p in pts], dashed))

    def add_note(self, text):
        self.notes.append(text)

    def _bounds(self):
        all_lx, all_ly = [], []
        for _, xs, ys, _ in self.series:
            lx, ly = _transform(xs, ys)
            all_lx += lx
            all_ly += ly
        if not all_lx:
            return (0.0, 1.0, 0.0, 1.0)
        pad = 0.05
        x0, x1 = min(all_lx), max(all_lx)
        y0, y1 = min(all_ly), max(all_ly)
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            y1 = y0 + 1.0
        sx, sy = (x1 - x0) * pad, (y1 - y0) * pad
        return (x0 - sx, x1 + sx, y0 - sy, y1 + sy)

    def render(self) -> str:
        x0, x1, y0, y1 = self._bounds()
        w = _WIDTH - 2 * _MARG
        h = _HEIGHT - 2 * _MARG

        def px(lx):
            return _MARG + (lx - x0) / (x1 - x0) * w

        def py(ly):
            return _HEIGHT - _MARG - (ly - y0) / (y1 - y0) * h

        parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}">',
            f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
            f'<text x="{_WIDTH // 2}" y="24" text-anchor="middle" font-size="16">{self.title}</text>',
        ]
        # axes
        parts.append(
            f'<line x1="{_MARG}" y1="{_HEIGHT - _MARG}" x2="{_WIDTH - _MARG}" y2="{_HEIGHT - _MARG}" stroke="black"/>'
        )
        parts.append(f'<line x1="{_MARG}" y1="{_MARG}" x2="{_MARG}" y2="{_HEIGHT - _MARG}" stroke="black"/>')
        # decade ticks
        for ex in range(math.floor(x0), math.ceil(x1) + 1):
            if x0 <= ex <= x1:
                parts.append(
                    f'<line x1="{px(ex):.1f}" y1="{_HEIGHT - _MARG}" x2="{px(ex):.1f}" y2="{_HEIGHT - _MARG + 6}" stroke="black"/>'
                )
                parts.append(
                    f'<text x="{px(ex):.1f}" y="{_HEIGHT - _MARG + 20}" text-anchor="middle" font-size="11">1e{ex}</text>'
                )
        for ey in range(math.floor(y0), math.ceil(y1) + 1):
            if y0 <= ey <= y1:
                parts.append(
                    f'<line x1="{_MARG - 6}" y1="{py(ey):.1f}" x2="{_MARG}" y2="{py(ey):.1f}" stroke="black"/>'
                )
                parts.append(
                    f'<text x="{_MARG - 10}" y="{py(ey):.1f}" text-anchor="end" font-size="11">1e{ey}</text>'
                )
        parts.append(
            f'<text x="{_WIDTH // 2}" y="{_HEIGHT - 12}" text-anchor="middle" font-size="13">{self.xlabel}</text>'
        )
        parts.append(
            f'<text x="16" y="{_HEIGHT // 2}" text-anchor="middle" font-size="13" '
            f'transform="rotate(-90 16 {_HEIGHT // 2})">{self.ylabel}</text>'
        )
        # series
        for i, (label, xs, ys, dashed) in enumerate(self.series):
            lx, ly = _transform(xs, ys)
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(lx, ly))
            color = _COLORS[i % len(_COLORS)]
            dash = ' stroke-dasharray="6,4"' if dashed else ""
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
            parts.append(
                f'<text x="{_WIDTH - _MARG - 4}" y="{_MARG + 16 * (i + 1)}" text-anchor="end" '
                f'font-size="12" fill="{color}">{label}</text>'
            )
        for j, note in enumerate(self.notes):
            parts.append(
                f'<text x="{_MARG + 6}" y="{_MARG + 16 * (j + 1)}" font-size="12">{note}</text>'
            )
        parts.append("</svg>")
        return "\n".join(parts) + "\n"

    def write(self, path):
        with open(path, "w") as f:
            f.write(self.render())
