"""Static SVG line charts emitted as plain text.

Output depends only on the input rows, so regenerating from the same CSV gives
byte-identical files.
"""
from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from html import escape
from pathlib import Path

from .persistence import atomic_write_text, read_csv

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 640, 420
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 150, 40, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
N_TICKS = 5


@dataclass(frozen=True, slots=True)
class LineSeries:
    name: str
    xs: tuple[float, ...]
    ys: tuple[float, ...]


@dataclass(frozen=True, slots=True)
class AxisRange:
    lo: float
    hi: float

    @classmethod
    def enclosing(cls, values: Sequence[float], pad: float = 0.05) -> "AxisRange":
        lo, hi = min(values), max(values)
        if hi == lo:
            return cls(lo - 0.5, hi + 0.5)
        span = hi - lo
        return cls(lo - pad * span, hi + pad * span)

    def scale(self, value: float, length: float) -> float:
        return (value - self.lo) / (self.hi - self.lo) * length


def _num(v: float) -> str:
    return format(v, ".6g")


def line_chart_svg(title: str, x_label: str, y_label: str, series: Sequence[LineSeries]) -> str:
    """Render the series as one self-contained SVG document."""
    x_range = AxisRange.enclosing([x for s in series for x in s.xs])
    y_range = AxisRange.enclosing([y for s in series for y in s.ys])
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(x: float) -> str:
        return format(MARGIN_LEFT + x_range.scale(x, plot_w), ".2f")

    def py(y: float) -> str:
        return format(MARGIN_TOP + plot_h - y_range.scale(y, plot_h), ".2f")

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}"'
        f' data-xmin="{_num(x_range.lo)}" data-xmax="{_num(x_range.hi)}"'
        f' data-ymin="{_num(y_range.lo)}" data-ymax="{_num(y_range.hi)}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>',
    ]
    for i in range(N_TICKS + 1):
        xv = x_range.lo + (x_range.hi - x_range.lo) * i / N_TICKS
        yv = y_range.lo + (y_range.hi - y_range.lo) * i / N_TICKS
        out.append(f'<text x="{px(xv)}" y="{HEIGHT - MARGIN_BOTTOM + 16}" text-anchor="middle" font-size="11">{_num(xv)}</text>')
        out.append(f'<text x="{MARGIN_LEFT - 6}" y="{py(yv)}" text-anchor="end" font-size="11">{_num(yv)}</text>')
    out.append(f'<text x="{MARGIN_LEFT + plot_w / 2:.0f}" y="{HEIGHT - 10}" text-anchor="middle" font-size="13">{escape(x_label)}</text>')
    out.append(f'<text x="16" y="{MARGIN_TOP + plot_h / 2:.0f}" text-anchor="middle" font-size="13"'
               f' transform="rotate(-90 16 {MARGIN_TOP + plot_h / 2:.0f})">{escape(y_label)}</text>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(f"{px(x)},{py(y)}" for x, y in zip(s.xs, s.ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"><title>{escape(s.name)}</title></polyline>')
        ly = MARGIN_TOP + 16 + 18 * i
        lx = WIDTH - MARGIN_RIGHT + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly + 4}" font-size="11">{escape(s.name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _column(rows: Sequence[Mapping[str, str]], name: str) -> tuple[float, ...]:
    return tuple(float(r[name]) for r in rows)


def _grouped(rows: Sequence[Mapping[str, str]], *keys: str) -> list[tuple[tuple[str, ...], list[Mapping[str, str]]]]:
    groups: dict[tuple[str, ...], list[Mapping[str, str]]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    return sorted(groups.items(), key=lambda item: tuple(float(v) for v in item[0]))


def entropy_series(rows: Sequence[Mapping[str, str]]) -> list[LineSeries]:
    """Measured entropy per (sigma, K) and both lower-bound curves per sigma in entropy-scan rows."""
    series = []
    for (sigma,), by_sigma in _grouped(rows, "sigma"):
        label = f"s={float(sigma):g}"
        for (depth,), group in _grouped(by_sigma, "K"):
            group = sorted(group, key=lambda r: float(r["beta"]))
            series.append(LineSeries(f"entropy {label} K={depth}", _column(group, "beta"), _column(group, "s_mean")))
        # bounds depend on sigma and beta only
        by_beta = {r["beta"]: r for r in by_sigma}
        ordered = sorted(by_beta.values(), key=lambda r: float(r["beta"]))
        xs = _column(ordered, "beta")
        series.append(LineSeries(f"mean-field bound {label}", xs, _column(ordered, "mean_field_bound")))
        series.append(LineSeries(f"improved bound {label}", xs, _column(ordered, "improved_bound")))
    return series


def free_energy_series(rows: Sequence[Mapping[str, str]]) -> list[LineSeries]:
    """One f-versus-K curve per (model, sigma, beta) in aggregate rows."""
    groups: dict[tuple[str, str, str], list[Mapping[str, str]]] = {}
    for r in rows:
        groups.setdefault((r["model"], r["sigma"], r["beta"]), []).append(r)
    series = []
    for (model, sigma, beta), group in sorted(groups.items()):
        group = sorted(group, key=lambda r: int(r["K"]))
        if len(group) < 2:
            continue
        series.append(LineSeries(f"{model} s={float(sigma):g} b={float(beta):g}", _column(group, "K"), _column(group, "f_mean")))
    return series


def concentration_series(rows: Sequence[Mapping[str, str]]) -> list[LineSeries]:
    """Tail fraction and its bound against K, one pair per (sigma, beta)."""
    series = []
    for (sigma, beta), group in _grouped(rows, "sigma", "beta"):
        group = sorted(group, key=lambda r: int(r["K"]))
        xs = _column(group, "K")
        label = f"s={float(sigma):g} b={float(beta):g}"
        series.append(LineSeries(f"tail fraction {label}", xs, _column(group, "fraction")))
        series.append(LineSeries(f"bound {label}", xs, _column(group, "bound")))
    return series


PLOTS = {
    "entropy.csv": ("entropy.svg", "Entropy and lower bounds", "beta", "s", entropy_series),
    "aggregate.csv": ("free_energy.svg", "Free energy versus depth", "K", "f", free_energy_series),
    "concentration.csv": ("concentration.svg", "Concentration tail", "K", "P(|dev| >= 2^-K/4)", concentration_series),
}


def plot_file(csv_path: str | Path, out_dir: str | Path | None = None) -> Path | None:
    """Render the chart matching a known CSV name; None when there is nothing to draw."""
    csv_path = Path(csv_path)
    if csv_path.name not in PLOTS:
        raise ValueError(f"no chart defined for {csv_path.name}; expected one of {sorted(PLOTS)}")
    svg_name, title, x_label, y_label, builder = PLOTS[csv_path.name]
    rows = read_csv(csv_path) if csv_path.is_file() else []
    series = [s for s in builder(rows) if s.xs] if rows else []
    if not series:
        logger.warning("nothing to plot in %s", csv_path)
        return None
    target = Path(out_dir or csv_path.parent) / svg_name
    atomic_write_text(target, line_chart_svg(title, x_label, y_label, series))
    logger.info("wrote %s", target)
    return target


def plot_directory(run_dir: str | Path) -> list[Path]:
    """Render every known CSV present in a run directory."""
    run_dir = Path(run_dir)
    written = [plot_file(run_dir / name) for name in sorted(PLOTS) if (run_dir / name).is_file()]
    if not written:
        logger.warning("no plottable CSV files in %s", run_dir)
    return [p for p in written if p is not None]
