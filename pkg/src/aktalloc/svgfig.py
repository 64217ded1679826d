"""SVG figures: cell partitions with original and transported centers, and
colored purified allocations.  2-d only; world y points up."""

from __future__ import annotations

import numpy as np

from .purify import PureAllocation
from .transport import RunReport

__all__ = ["allocation_svg", "purify_svg"]

_STYLE = (
    "polygon.cell{fill:#f7f4ea;stroke:#333;stroke-width:1}"
    "circle.center{fill:#111}"
    "circle.transported{fill:none;stroke:#c22;stroke-width:1.5}"
    "line.link{stroke:#999;stroke-width:0.6;stroke-dasharray:3 2}"
)


class _Canvas:
    def __init__(self, lower, upper, size: int, pad: int = 10):
        self.lower = np.asarray(lower, float)
        span = float(np.max(np.asarray(upper, float) - self.lower))
        self.scale = (size - 2 * pad) / span
        self.pad = pad
        self.size = size

    def x(self, wx: float) -> float:
        return self.pad + (wx - self.lower[0]) * self.scale

    def y(self, wy: float) -> float:
        return self.size - self.pad - (wy - self.lower[1]) * self.scale

    def pt(self, p) -> str:
        return f"{self.x(p[0]):.2f},{self.y(p[1]):.2f}"


def _svg_doc(size: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">'
    )
    return "\n".join([head, f"<style>{_STYLE}</style>", *body, "</svg>"]) + "\n"


def allocation_svg(report: RunReport, size: int = 640) -> str:
    """One polygon per positive-volume cell, a dot per original center, a
    ring per transported center, and a dashed link between the two."""
    if report.window.dim != 2:
        raise ValueError("SVG output is only available in dimension 2")
    cv = _Canvas(report.window.lower, report.window.upper, size)
    body = []
    vols = report.volumes()
    for i in range(report.n_cells):
        if vols[i] <= 0:
            continue
        lo = report.cell_lower[i]
        hi = report.cell_upper[i]
        pts = " ".join(
            cv.pt(p) for p in ([lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]])
        )
        body.append(f'<polygon class="cell" data-cell="{i}" points="{pts}"/>')
    for i in range(report.n_cells):
        o = int(report.cell_owner[i])
        if o < 0:
            continue
        orig = report.points[o]
        moved = report.cell_carried[i]
        body.append(
            f'<line class="link" x1="{cv.x(orig[0]):.2f}" y1="{cv.y(orig[1]):.2f}" '
            f'x2="{cv.x(moved[0]):.2f}" y2="{cv.y(moved[1]):.2f}"/>'
        )
        body.append(
            f'<circle class="transported" data-cell="{i}" cx="{cv.x(moved[0]):.2f}" '
            f'cy="{cv.y(moved[1]):.2f}" r="3.5"/>'
        )
        body.append(
            f'<circle class="center" cx="{cv.x(orig[0]):.2f}" cy="{cv.y(orig[1]):.2f}" r="2.5"/>'
        )
    return _svg_doc(size, body)


def _palette(i: int) -> str:
    hue = (i * 137.508) % 360.0
    return f"hsl({hue:.1f},62%,72%)"


def purify_svg(alloc: PureAllocation, size: int = 640) -> str:
    """Grid cells colored by owner with the centers overlaid."""
    grid = alloc.grid
    if grid.dim != 2:
        raise ValueError("SVG output is only available in dimension 2")
    cv = _Canvas(grid.window.lower, grid.window.upper, size)
    h = grid.spacing
    body = []
    owners = sorted({int(o) for o in alloc.owner.ravel() if o >= 0})
    color = {o: _palette(k) for k, o in enumerate(owners)}
    ax0 = grid.axis_centers(0)
    ax1 = grid.axis_centers(1)
    for i in range(grid.shape[0]):
        for j in range(grid.shape[1]):
            o = int(alloc.owner[i, j])
            if o < 0:
                continue
            x = cv.x(ax0[i] - h / 2)
            y = cv.y(ax1[j] + h / 2)
            w_pix = h * cv.scale
            body.append(
                f'<rect class="patch" data-owner="{o}" x="{x:.2f}" y="{y:.2f}" '
                f'width="{w_pix:.2f}" height="{w_pix:.2f}" fill="{color[o]}"/>'
            )
    for o in owners:
        p = alloc.centers[o]
        if np.all(p >= grid.window.lower) and np.all(p <= grid.window.upper):
            body.append(
                f'<circle class="center" cx="{cv.x(p[0]):.2f}" cy="{cv.y(p[1]):.2f}" r="3"/>'
            )
    return _svg_doc(size, body)
