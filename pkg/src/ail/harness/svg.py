"""Tiny SVG line-chart writer (fixed canvas, linear axes, one polyline per series)."""

from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 800, 500
MARGIN = 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd")


def _num(v: float) -> str:
    return format(v, ".6g")


def line_chart(series: dict, title: str = "", xlabel: str = "t", ylabel: str = "") -> str:
    """Render ``{name: (xs, ys)}`` as an SVG document."""
    xs_all = [x for xs, _ in series.values() for x in xs] or [0.0]
    ys_all = [y for _, ys in series.values() for y in ys] or [0.0]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(min(ys_all), 0.0), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def sx(x):
        return MARGIN + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
           f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
           f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
           f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle">{escape(title)}</text>',
           f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="15" y="{HEIGHT / 2}" transform="rotate(-90 15 {HEIGHT / 2})" '
           f'text-anchor="middle">{escape(ylabel)}</text>']
    for val, anchor, x, y in ((x0, "start", MARGIN, HEIGHT - MARGIN + 18),
                              (x1, "end", WIDTH - MARGIN, HEIGHT - MARGIN + 18),
                              (y0, "end", MARGIN - 6, HEIGHT - MARGIN),
                              (y1, "end", MARGIN - 6, MARGIN + 5)):
        out.append(f'<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="12">{_num(val)}</text>')
    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 5}" y="{MARGIN + 15 * (i + 1)}" '
                   f'text-anchor="end" fill="{color}" font-size="12">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
