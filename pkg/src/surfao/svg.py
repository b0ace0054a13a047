"""SVG rendering of the functional outlier map."""

from xml.sax.saxutils import escape, quoteattr

import numpy as np

WIDTH = 640
HEIGHT = 480
MARGIN = (60, 20, 30, 55)  # left, right, top, bottom


def _nice_ticks(hi, count=5):
    if not hi > 0:
        return [0.0]
    raw = hi / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    return list(np.arange(0.0, hi + 0.5 * step, step))


class PlotFrame:
    """Linear map from data coordinates to SVG pixel coordinates."""

    def __init__(self, x_max, y_max):
        left, right, top, bottom = MARGIN
        self.x_max = float(x_max) if x_max > 0 else 1.0
        self.y_max = float(y_max) if y_max > 0 else 1.0
        self.x0 = float(left)
        self.y0 = float(HEIGHT - bottom)
        self.sx = (WIDTH - left - right) / self.x_max
        self.sy = (HEIGHT - top - bottom) / self.y_max

    def to_px(self, x, y):
        return self.x0 + self.sx * x, self.y0 - self.sy * y

    def to_data(self, px, py):
        return (px - self.x0) / self.sx, (self.y0 - py) / self.sy


def fom_svg(result, title=None, highlight=None):
    """SVG document of the (fAO, vAO) scatter with the dashed cutoff curve.

    ``result`` is a :class:`~surfao.functional.FomResult`.  Flagged
    observations are drawn as red squares, the rest as grey circles; every
    marker carries its id and exact coordinates as ``data-*`` attributes.
    """
    fx, fy = result.cutoff.polyline()
    x_max = 1.08 * max(np.max(result.fao), np.max(fx) if fx.size else 0.0)
    y_max = 1.08 * max(np.max(result.vao), np.max(fy) if fy.size else 0.0)
    frame = PlotFrame(x_max, y_max)
    highlight = set(highlight or ())

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(
        f'<g id="frame" data-x0="{frame.x0!r}" data-y0="{frame.y0!r}" '
        f'data-sx="{frame.sx!r}" data-sy="{frame.sy!r}" font-family="sans-serif" font-size="11">'
    )
    left, right, top, bottom = MARGIN
    out.append(f'<line x1="{frame.x0}" y1="{frame.y0}" x2="{WIDTH - right}" y2="{frame.y0}" stroke="black"/>')
    out.append(f'<line x1="{frame.x0}" y1="{frame.y0}" x2="{frame.x0}" y2="{top}" stroke="black"/>')
    for t in _nice_ticks(frame.x_max):
        px, _ = frame.to_px(t, 0)
        if px <= WIDTH - right + 0.5:
            out.append(f'<line x1="{px:.2f}" y1="{frame.y0}" x2="{px:.2f}" y2="{frame.y0 + 4}" stroke="black"/>')
            out.append(f'<text x="{px:.2f}" y="{frame.y0 + 16}" text-anchor="middle">{t:.4g}</text>')
    for t in _nice_ticks(frame.y_max):
        _, py = frame.to_px(0, t)
        if py >= top - 0.5:
            out.append(f'<line x1="{frame.x0 - 4}" y1="{py:.2f}" x2="{frame.x0}" y2="{py:.2f}" stroke="black"/>')
            out.append(f'<text x="{frame.x0 - 7}" y="{py + 4:.2f}" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text class="axis-label" x="{(frame.x0 + WIDTH - right) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="13">fAO</text>')
    out.append(
        f'<text class="axis-label" x="16" y="{(top + frame.y0) / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {(top + frame.y0) / 2:.1f})">vAO</text>'
    )
    if fx.size:
        pts = " ".join("{:.3f},{:.3f}".format(*frame.to_px(a, b)) for a, b in zip(fx, fy))
        out.append(
            f'<polyline class="cutoff" points="{pts}" fill="none" stroke="black" '
            f'stroke-width="1.2" stroke-dasharray="6,4" data-cfo-star="{float(result.cutoff.cfo_star)!r}"/>'
        )
    for rec in result.records():
        px, py = frame.to_px(rec.fao, rec.vao)
        data = f'data-id={quoteattr(rec.id)} data-fao="{rec.fao!r}" data-vao="{rec.vao!r}"'
        stroke = ' stroke="blue" stroke-width="2"' if rec.id in highlight else ""
        if rec.flagged:
            out.append(
                f'<rect class="marker flagged" x="{px - 4:.6f}" y="{py - 4:.6f}" width="8" height="8" '
                f'fill="red"{stroke} {data}><title>{escape(rec.id)}</title></rect>'
            )
        else:
            out.append(
                f'<circle class="marker regular" cx="{px:.6f}" cy="{py:.6f}" r="3.5" '
                f'fill="#555555"{stroke} {data}><title>{escape(rec.id)}</title></circle>'
            )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
