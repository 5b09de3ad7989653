"""
Static SVG figures: spiderweb dimension profiles, density overlays and the
two-panel left-behind scatter.

Figures are drawn with matplotlib's object API (no pyplot state) and saved
through the SVG backend with a fixed hash salt and no date stamp, so
identical inputs give identical bytes. Canvas sizes are given in points;
one point is one SVG user unit.
"""
import io
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import matplotlib
import numpy as np
from matplotlib.colors import to_rgba
from matplotlib.figure import Figure
from matplotlib.lines import Line2D
from matplotlib.patches import Polygon, Rectangle

from pymicg.exceptions import ChartError
from pymicg.index import DimensionProfile
from pymicg.stats import DensityCurve

SVG_NS = "http://www.w3.org/2000/svg"
SPIDER_CANVAS = (800, 800)
CANVAS = (900, 600)
SPIDER_RADIUS = 280.0
POINTS_PER_INCH = 72.0

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")

# sex|area conventions: colour by sex, marker by area
GROUP_STYLES: Dict[str, Tuple[str, str]] = {
    "male|urban": ("#1f77b4", "o"),
    "male|rural": ("#1f77b4", "^"),
    "female|urban": ("#d62728", "o"),
    "female|rural": ("#d62728", "^"),
}
HIGHLIGHT_COLOR = "#7b2d8e"

SVG_STYLE = {
    "svg.hashsalt": "pymicg",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "axes.unicode_minus": False,
    "path.simplify": False,
}


def _figure(canvas: Tuple[int, int]) -> Figure:
    width, height = canvas
    return Figure(figsize=(width / POINTS_PER_INCH, height / POINTS_PER_INCH), dpi=POINTS_PER_INCH,
                  facecolor="#ffffff")


def _to_svg(fig: Figure, header: Optional[str] = None) -> str:
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None}, facecolor=fig.get_facecolor())
    svg = buffer.getvalue()
    return with_header(svg, header) if header else svg


def with_header(svg: str, header: str) -> str:
    """Insert a comment right after the XML declaration of an emitted document."""
    declaration, _, rest = svg.partition("\n")
    return f"{declaration}\n<!-- {header.replace('--', '- -')} -->\n{rest}"


def _pixel_axes(fig: Figure, canvas: Tuple[int, int]):
    """Axes spanning the canvas whose data units are canvas points, y pointing down."""
    ax = fig.add_axes((0.0, 0.0, 1.0, 1.0))
    ax.set_xlim(0, canvas[0])
    ax.set_ylim(canvas[1], 0)
    ax.set_axis_off()
    return ax


def _panel_axes(fig: Figure, canvas: Tuple[int, int], left: float, top: float, width: float, height: float):
    """Axes placed by its top-left corner and size in canvas points."""
    cw, ch = canvas
    return fig.add_axes((left / cw, (ch - top - height) / ch, width / cw, height / ch))


@dataclass(frozen=True)
class SpiderwebSpec:
    """Axis labels in display order and series of percentages in [0, 100], one per axis."""
    axes: Tuple[str, ...]
    series: Mapping[str, Sequence[float]]
    colors: Optional[Sequence[str]] = None
    markers: Optional[Sequence[str]] = None
    grid_step: float = 20.0
    title: str = ""

    def validate(self) -> None:
        if len(self.axes) < 3:
            raise ChartError(f"a spiderweb needs at least 3 axes, got {len(self.axes)}")
        if not self.series:
            raise ChartError("a spiderweb needs at least one series")
        if not 0 < self.grid_step <= 100:
            raise ChartError(f"grid step must lie in (0, 100], got {self.grid_step}")
        for label, values in self.series.items():
            if len(values) != len(self.axes):
                raise ChartError(f"series {label!r} has {len(values)} values for {len(self.axes)} axes")
            for axis, value in zip(self.axes, values):
                if not (math.isfinite(value) and 0 <= value <= 100):
                    raise ChartError(f"series {label!r} value {value!r} on axis {axis!r} is outside [0, 100]")

    def grid_levels(self) -> Iterator[float]:
        level = self.grid_step
        while level <= 100 + 1e-9:
            yield level
            level += self.grid_step


def spiderweb_vertex(index: int, count: int, value: float,
                     center: Tuple[float, float] = (SPIDER_CANVAS[0] / 2, SPIDER_CANVAS[1] / 2),
                     radius: float = SPIDER_RADIUS) -> Tuple[float, float]:
    """Axis 0 points to 12 o'clock; later axes follow clockwise."""
    angle = 2.0 * math.pi * index / count
    r = radius * value / 100.0
    return center[0] + r * math.sin(angle), center[1] - r * math.cos(angle)


def _style(label: str, position: int, spec_colors: Optional[Sequence[str]],
           spec_markers: Optional[Sequence[str]]) -> Tuple[str, str]:
    color, marker = GROUP_STYLES.get(label, (PALETTE[position % len(PALETTE)], "o"))
    if spec_colors:
        color = spec_colors[position % len(spec_colors)]
    if spec_markers:
        marker = spec_markers[position % len(spec_markers)]
    return color, marker


def _legend_handles(entries: Sequence[Tuple[str, str, str]]) -> List[Line2D]:
    return [Line2D([], [], color=color, marker=marker, linewidth=2, markersize=6, label=label)
            for label, color, marker in entries]


@matplotlib.rc_context(SVG_STYLE)
def spiderweb_svg(spec: SpiderwebSpec, header: Optional[str] = None) -> str:
    """
    One closed polygon per series, gridline polygons every ``grid_step``
    percent. Element ids: ``gridline-<level>``, ``spoke-<i>``, ``series-<i>``,
    ``vertices-<i>`` and ``legend``.
    """
    spec.validate()
    width, height = SPIDER_CANVAS
    center = (width / 2, height / 2)
    n = len(spec.axes)
    fig = _figure(SPIDER_CANVAS)
    ax = _pixel_axes(fig, SPIDER_CANVAS)
    if spec.title:
        ax.text(center[0], 28, spec.title, ha="center", va="center", fontsize=16)

    for level in spec.grid_levels():
        ring = [spiderweb_vertex(i, n, level) for i in range(n)]
        ax.add_patch(Polygon(ring, closed=True, fill=False, edgecolor="#bbbbbb", linewidth=0.8,
                             gid=f"gridline-{level:g}"))
        ax.text(center[0] + 4, spiderweb_vertex(0, n, level)[1] - 3, f"{level:g}%", fontsize=9,
                color="#777777", ha="left", va="bottom")
    for i, label in enumerate(spec.axes):
        x, y = spiderweb_vertex(i, n, 100)
        ax.add_line(Line2D([center[0], x], [center[1], y], color="#bbbbbb", linewidth=0.8, gid=f"spoke-{i}"))
        lx, ly = spiderweb_vertex(i, n, 100 * (SPIDER_RADIUS + 22) / SPIDER_RADIUS)
        ha = "center" if abs(lx - center[0]) < 1 else ("left" if lx > center[0] else "right")
        ax.text(lx, ly, label, fontsize=11, color="#333333", ha=ha, va="center")

    entries = []
    for position, (label, values) in enumerate(spec.series.items()):
        color, marker = _style(label, position, spec.colors, spec.markers)
        vertices = [spiderweb_vertex(i, n, float(v)) for i, v in enumerate(values)]
        ax.add_patch(Polygon(vertices, closed=True, facecolor=to_rgba(color, 0.12),
                             edgecolor=color, linewidth=2, gid=f"series-{position}"))
        xs, ys = zip(*vertices)
        ax.add_line(Line2D(xs, ys, linestyle="none", marker=marker, markersize=6, color=color,
                           gid=f"vertices-{position}"))
        entries.append((label, color, marker))
    legend = ax.legend(handles=_legend_handles(entries), loc="lower left", frameon=False, fontsize=11)
    legend.set_gid("legend")
    return _to_svg(fig, header)


def group_spiderweb(profile: DimensionProfile, title: str = "", colors: Optional[Sequence[str]] = None) -> SpiderwebSpec:
    """One series per group label, axes in the profile's (catalog) column order."""
    series = {label: [round(v, 6) for v in profile.series(label)] for label in profile.labels}
    return SpiderwebSpec(tuple(str(c) for c in profile.frame.columns), series, colors=colors, title=title)


def _nice_ceiling(value: float) -> float:
    if value <= 0:
        return 1.0
    magnitude = 10 ** math.floor(math.log10(value))
    for factor in (1, 2, 2.5, 5, 10):
        if factor * magnitude >= value:
            return factor * magnitude
    return 10 * magnitude


@matplotlib.rc_context(SVG_STYLE)
def density_svg(curves: Mapping[str, DensityCurve], title: str = "", colors: Optional[Sequence[str]] = None,
                show_median: bool = True, header: Optional[str] = None) -> str:
    """Overlaid densities on [0, 1] (``curve-<i>``); dotted ``median-<i>`` lines mark sample medians."""
    if not curves:
        raise ChartError("density chart needs at least one curve")
    for label, curve in curves.items():
        if len(curve.grid) == 0 or len(curve.grid) != len(curve.heights):
            raise ChartError(f"curve {label!r} is empty")
    top_value = _nice_ceiling(1.05 * max(float(np.max(c.heights)) for c in curves.values()))
    fig = _figure(CANVAS)
    ax = _panel_axes(fig, CANVAS, 80, 50, 620, 470)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, top_value)
    ax.set_xticks([i / 5 for i in range(6)])
    ax.set_yticks([top_value * i / 4 for i in range(5)])
    ax.set_xlabel("MICG")
    ax.set_ylabel("density")
    if title:
        fig.text(0.5, 1 - 28 / CANVAS[1], title, ha="center", va="center", fontsize=16)

    for position, (label, curve) in enumerate(curves.items()):
        color = colors[position % len(colors)] if colors else PALETTE[position % len(PALETTE)]
        ax.plot(curve.grid, curve.heights, color=color, linewidth=2, label=label, gid=f"curve-{position}")
        if show_median and curve.median is not None:
            ax.axvline(curve.median, color=color, linestyle=":", linewidth=1.5, gid=f"median-{position}")
    legend = ax.legend(loc="upper left", bbox_to_anchor=(1.02, 1.0), frameon=False)
    legend.set_gid("legend")
    return _to_svg(fig, header)


def bottom_indices(values: Sequence[float], q: float) -> np.ndarray:
    """Positions of the ``q`` percent lowest values (at least one; ties by position)."""
    if not (math.isfinite(q) and 0 < q < 100):
        raise ChartError(f"q must lie in (0, 100), got {q}")
    values = np.asarray(values, dtype=float)
    count = max(1, math.ceil(len(values) * q / 100.0 - 1e-9))
    return np.argsort(values, kind="stable")[:count]


@dataclass(frozen=True)
class HighlightBox:
    """Rank span and value range of the bottom-q% children in one panel."""
    first_rank: int
    last_rank: int
    lower: float
    upper: float
    count: int


def highlight_box(values: Sequence[float], ranks: Sequence[int], chosen: Sequence[int]) -> HighlightBox:
    values = np.asarray(values, dtype=float)
    ranks = np.asarray(ranks, dtype=int)
    chosen = np.asarray(chosen, dtype=int)
    return HighlightBox(int(ranks[chosen].min()), int(ranks[chosen].max()),
                        float(values[chosen].min()), float(values[chosen].max()), len(chosen))


@matplotlib.rc_context(SVG_STYLE)
def scatter_lnb_svg(achievements: Sequence[float], opportunity_means: Sequence[float], groups: Sequence[str],
                    q: float = 10.0, title: str = "", header: Optional[str] = None) -> str:
    """
    Panel (a) plots achievements and panel (b) opportunity means, children
    ordered along x by ascending opportunity mean. A box (``highlight-a``,
    ``highlight-b``) encloses the bottom-q% by opportunity in both panels.
    """
    a = np.asarray(achievements, dtype=float)
    o = np.asarray(opportunity_means, dtype=float)
    if not (len(a) == len(o) == len(groups)):
        raise ChartError("achievements, opportunity means and groups must be aligned")
    if len(a) == 0:
        raise ChartError("scatter needs at least one child")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(o))):
        raise ChartError("scatter values must be finite")
    if a.min() < 0 or a.max() > 1 or o.min() < 0 or o.max() > 1:
        raise ChartError("scatter values must lie in [0, 1]")
    chosen = bottom_indices(o, q)
    order = np.argsort(o, kind="stable")
    ranks = np.empty(len(o), dtype=int)
    ranks[order] = np.arange(len(o))
    labels = np.array([str(g) for g in groups], dtype=object)

    styles: Dict[str, Tuple[str, str]] = {}
    for i in order:
        styles.setdefault(labels[i], GROUP_STYLES.get(labels[i], (PALETTE[len(styles) % len(PALETTE)], "o")))

    fig = _figure(CANVAS)
    if title:
        fig.text(0.5, 1 - 24 / CANVAS[1], title, ha="center", va="center", fontsize=16)
    panels = {
        "a": (_panel_axes(fig, CANVAS, 70, 50, 300, 470), a, "achievement"),
        "b": (_panel_axes(fig, CANVAS, 450, 50, 300, 470), o, "opportunity (posterior mean)"),
    }
    for name, (ax, values, y_label) in panels.items():
        ax.set_gid(f"panel-{name}")
        ax.set_xlim(-0.5, len(o) - 0.5)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xticks([])
        ax.set_yticks([i / 5 for i in range(6)])
        ax.set_xlabel("children by opportunity rank")
        ax.set_ylabel(y_label)
        ax.set_title(f"({name})", loc="left", fontsize=13)
        for k, (label, (color, marker)) in enumerate(styles.items()):
            members = order[labels[order] == label]
            ax.plot(ranks[members], values[members], linestyle="none", marker=marker, markersize=5,
                    color=color, label=label, gid=f"points-{name}-{k}")
        box = highlight_box(values, ranks, chosen)
        ax.add_patch(Rectangle((box.first_rank - 0.5, box.lower - 0.01), box.last_rank - box.first_rank + 1,
                               box.upper - box.lower + 0.02, fill=False, edgecolor=HIGHLIGHT_COLOR,
                               linewidth=2, gid=f"highlight-{name}"))
    handles, names = panels["b"][0].get_legend_handles_labels()
    ranked = sorted(zip(names, handles))
    legend = fig.legend([h for _, h in ranked], [n for n, _ in ranked], loc="upper left",
                        bbox_to_anchor=(770 / CANVAS[0], 1 - 60 / CANVAS[1]), frameon=False)
    legend.set_gid("legend")
    return _to_svg(fig, header)


def highlighted_groups(groups: Sequence[str], opportunity_means: Sequence[float], q: float) -> Dict[str, int]:
    """Group counts within the bottom-q% set."""
    counts: Dict[str, int] = {}
    for i in bottom_indices(opportunity_means, q):
        counts[str(groups[i])] = counts.get(str(groups[i]), 0) + 1
    return dict(sorted(counts.items()))
