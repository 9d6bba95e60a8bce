"""SVG rendering of vector maps (plot output only)."""
from __future__ import annotations

from typing import Sequence

from .vector_core import DEFAULT_WINDOW, ElementType, PerceptionWindow, VectorMap

_CLASS_COLORS = {
    ElementType.LANE_DIVIDER: "#e8841a",
    ElementType.PEDESTRIAN_CROSSING: "#2f6fde",
    ElementType.ROAD_BOUNDARY: "#d0342c",
    ElementType.CENTERLINE: "#3a9e4e",
}


def render_svg(maps: Sequence[VectorMap],
               window: PerceptionWindow = DEFAULT_WINDOW,
               scale: float = 10.0) -> str:
    """Draw maps into an SVG string; y grows upward, ego at the center."""
    w = (window.x_max - window.x_min) * scale
    h = (window.y_max - window.y_min) * scale

    def sx(x: float) -> float:
        return (x - window.x_min) * scale

    def sy(y: float) -> float:
        return (window.y_max - y) * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" '
        f'height="{h:.0f}" viewBox="0 0 {w:.0f} {h:.0f}">',
        f'<rect width="{w:.0f}" height="{h:.0f}" fill="#fafafa"/>',
    ]
    for vmap in maps:
        for inst in vmap.instances:
            color = _CLASS_COLORS.get(inst.element_type, "#888888")
            pts = " ".join(f"{sx(p.x):.2f},{sy(p.y):.2f}" for p in inst.points)
            parts.append(f'<polyline points="{pts}" fill="none" '
                         f'stroke="{color}" stroke-width="2" '
                         f'opacity="{0.4 + 0.6 * inst.confidence:.2f}"/>')
    parts.append(f'<circle cx="{sx(0):.2f}" cy="{sy(0):.2f}" r="5" '
                 f'fill="#222222"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def write_svg(maps: Sequence[VectorMap], path: str,
              window: PerceptionWindow = DEFAULT_WINDOW) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(maps, window))
        fh.write("\n")
