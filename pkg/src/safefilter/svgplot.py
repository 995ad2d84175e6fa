"""Static SVG rendering of a planned path around the obstacle.

Pure text generation: the same inputs always produce byte-identical output
(coordinates are formatted with a fixed %.6g), so plots can be regression
tested like any other artifact. No drawing dependency.
"""

from __future__ import annotations

import numpy as np

__all__ = ["render_trajectory_svg"]

_WIDTH = 640.0
_HEIGHT = 480.0
_MARGIN = 40.0
_MAX_POINTS = 4000


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _downsample(n: int) -> np.ndarray:
    stride = max(1, n // _MAX_POINTS)
    idx = np.arange(0, n, stride)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def render_trajectory_svg(
    px: np.ndarray,
    py: np.ndarray,
    rx: np.ndarray,
    ry: np.ndarray,
    obstacle_center,
    obstacle_radius: float,
) -> str:
    """Plan view of the travelled path, the reference, and the obstacle disk."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    rx = np.asarray(rx, dtype=float)
    ry = np.asarray(ry, dtype=float)
    if px.size < 1 or px.shape != py.shape or rx.shape != ry.shape:
        raise ValueError("coordinate arrays must be non-empty and matched")
    cx, cy = float(obstacle_center[0]), float(obstacle_center[1])
    rr = float(obstacle_radius)

    xs = np.concatenate([px, rx, [cx - rr, cx + rr]])
    ys = np.concatenate([py, ry, [cy - rr, cy + rr]])
    x_lo, x_hi = float(xs.min()) - 0.5, float(xs.max()) + 0.5
    y_lo, y_hi = float(ys.min()) - 0.5, float(ys.max()) + 0.5
    # One scale for both axes so circles stay circular.
    scale = min(
        (_WIDTH - 2 * _MARGIN) / (x_hi - x_lo),
        (_HEIGHT - 2 * _MARGIN) / (y_hi - y_lo),
    )

    def to_px(x: float, y: float) -> tuple[float, float]:
        return (
            _MARGIN + (x - x_lo) * scale,
            _HEIGHT - _MARGIN - (y - y_lo) * scale,
        )

    def polyline(x: np.ndarray, y: np.ndarray) -> str:
        idx = _downsample(x.size)
        pts = " ".join(
            "{},{}".format(*map(_fmt, to_px(float(x[i]), float(y[i]))))
            for i in idx
        )
        return pts

    ocx, ocy = to_px(cx, cy)
    start = to_px(float(px[0]), float(py[0]))
    end = to_px(float(px[-1]), float(py[-1]))
    goal = to_px(float(rx[-1]), float(ry[-1]))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(_WIDTH)}" '
        f'height="{_fmt(_HEIGHT)}" viewBox="0 0 {_fmt(_WIDTH)} {_fmt(_HEIGHT)}">',
        f'<rect width="{_fmt(_WIDTH)}" height="{_fmt(_HEIGHT)}" fill="#ffffff"/>',
        f'<circle cx="{_fmt(ocx)}" cy="{_fmt(ocy)}" r="{_fmt(rr * scale)}" '
        f'fill="#e8e8e8" stroke="#888888" stroke-width="1.5"/>',
        f'<polyline points="{polyline(rx, ry)}" fill="none" stroke="#999999" '
        f'stroke-width="1" stroke-dasharray="6 4"/>',
        f'<polyline points="{polyline(px, py)}" fill="none" stroke="#1f6fb4" '
        f'stroke-width="2"/>',
        f'<circle cx="{_fmt(start[0])}" cy="{_fmt(start[1])}" r="4" fill="#2c9a2c"/>',
        f'<circle cx="{_fmt(end[0])}" cy="{_fmt(end[1])}" r="4" fill="#1f6fb4"/>',
        f'<circle cx="{_fmt(goal[0])}" cy="{_fmt(goal[1])}" r="4" fill="none" '
        f'stroke="#c23b3b" stroke-width="2"/>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"
