"""Deterministic PNG rendering of a :class:`ChartSpec`.

Everything is drawn into a numpy RGB canvas with integer pixel coordinates
and encoded with zlib, so output depends only on the chart spec (and the zlib
build).
"""

from __future__ import annotations

import hashlib
import struct
import zlib

import numpy as np

from ..errors import ChartError
from .font import GLYPH_H, text_mask
from .spec import ChartSpec, Panel


def _hex(color: str) -> tuple[int, int, int]:
    color = color.lstrip("#")
    return tuple(int(color[i:i + 2], 16) for i in (0, 2, 4))  # type: ignore[return-value]


UP = _hex("#26A69A")
DOWN = _hex("#EF5350")
BUY = _hex("#00A040")
SELL = _hex("#E00000")
BACKGROUND = (255, 255, 255)
FRAME = (200, 200, 200)
GUIDE = (150, 150, 150)
TEXT = (40, 40, 40)
NEUTRAL_BAR = (120, 144, 156)

SERIES_COLORS = {
    "sma10": _hex("#FF9800"),
    "sma50": _hex("#2962FF"),
    "bb_upper": _hex("#9C27B0"),
    "bb_mid": _hex("#BA68C8"),
    "bb_lower": _hex("#9C27B0"),
    "rsi14": _hex("#7E57C2"),
    "macd_line": _hex("#2962FF"),
    "macd_signal": _hex("#FF6D00"),
    "kdj_k": _hex("#2962FF"),
    "kdj_d": _hex("#FF6D00"),
    "kdj_j": _hex("#AB47BC"),
    "close": _hex("#263238"),
}
_FALLBACK = [_hex("#1E88E5"), _hex("#F4511E"), _hex("#43A047"), _hex("#8E24AA")]

PAD_LEFT = 6
PAD_RIGHT = 64
PAD_TOP = 12
PAD_BOTTOM = 4
DATE_ROW = 11
TITLE_ROW = 12


class Canvas:
    def __init__(self, width: int, height: int):
        self.w = width
        self.h = height
        self.px = np.empty((height, width, 3), dtype=np.uint8)
        self.px[:] = BACKGROUND

    def rect(self, x0: int, y0: int, x1: int, y1: int, color) -> None:
        """Fill the inclusive rectangle, clipped to the canvas."""
        x0, x1 = sorted((x0, x1))
        y0, y1 = sorted((y0, y1))
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, self.w - 1), min(y1, self.h - 1)
        if x0 <= x1 and y0 <= y1:
            self.px[y0:y1 + 1, x0:x1 + 1] = color

    def points(self, xs: np.ndarray, ys: np.ndarray, color) -> None:
        ok = (xs >= 0) & (xs < self.w) & (ys >= 0) & (ys < self.h)
        self.px[ys[ok], xs[ok]] = color

    def segment(self, x0: float, y0: float, x1: float, y1: float, color, thick: int = 1) -> None:
        steps = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
        t = np.linspace(0.0, 1.0, steps + 1)
        xs = np.rint(x0 + (x1 - x0) * t).astype(np.int64)
        ys = np.rint(y0 + (y1 - y0) * t).astype(np.int64)
        for d in range(thick):
            self.points(xs, ys + d, color)

    def hline(self, x0: int, x1: int, y: int, color, dash: int = 0) -> None:
        xs = np.arange(x0, x1 + 1)
        if dash:
            xs = xs[(xs - x0) // dash % 2 == 0]
        self.points(xs, np.full(xs.shape, y), color)

    def text(self, x: int, y: int, s: str, color=TEXT) -> None:
        mask = text_mask(s)
        ys, xs = np.nonzero(mask)
        self.points(xs + x, ys + y, color)

    def triangle(self, cx: int, cy: int, size: int, up: bool, color) -> None:
        for row in range(size + 1):
            half = row
            y = cy - size + row if up else cy + size - row
            self.rect(cx - half, y, cx + half, y, color)

    def to_png(self) -> bytes:
        return encode_png(self.px)


def encode_png(rgb: np.ndarray) -> bytes:
    """Encode an ``(h, w, 3)`` uint8 array as an 8-bit RGB PNG."""
    h, w, _ = rgb.shape

    def chunk(tag: bytes, data: bytes) -> bytes:
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data))

    raw = np.zeros((h, 1 + w * 3), dtype=np.uint8)
    raw[:, 1:] = rgb.reshape(h, w * 3)
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw.tobytes(), 6))
        + chunk(b"IEND", b"")
    )


def png_size(data: bytes) -> tuple[int, int]:
    """(width, height) from a PNG header."""
    if data[:8] != b"\x89PNG\r\n\x1a\n" or data[12:16] != b"IHDR":
        raise ValueError("not a PNG image")
    return struct.unpack(">II", data[16:24])


def _fmt(v: float) -> str:
    a = abs(v)
    if a >= 1e6:
        return f"{v / 1e6:.1f}M"
    if a >= 1e3:
        return f"{v / 1e3:.1f}K"
    if a >= 10:
        return f"{v:.1f}"
    return f"{v:.2f}"


def _value_range(panel: Panel) -> tuple[float, float]:
    vals: list[float] = []
    for v in panel.series.values():
        vals.extend(x for x in v if x is not None)
    if panel.ohlc:
        vals.extend(x[1] for x in panel.ohlc)
        vals.extend(x[2] for x in panel.ohlc)
    vals.extend(panel.guides)
    vals.extend(m.price for m in panel.markers)
    if panel.kind == "histogram":
        vals.append(0.0)
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi == lo:
        pad = abs(lo) * 0.01 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    if panel.kind == "histogram" and lo >= 0:
        return 0.0, hi + pad
    return lo - pad, hi + pad


def _draw_panel(c: Canvas, panel: Panel, top: int, *, title: str, last: bool) -> None:
    bottom = top + panel.height - 1
    head = PAD_TOP + (TITLE_ROW if title else 0)
    foot = PAD_BOTTOM + (DATE_ROW if last else 0)
    x0, x1 = PAD_LEFT, c.w - PAD_RIGHT
    y0, y1 = top + head, bottom - foot
    if y1 - y0 < 4 or x1 - x0 < 4:
        # too small for a plot area: shrink the decorations
        y0, y1 = top + 1, bottom - 1
        x0, x1 = 0, c.w - 1
    if title:
        c.text(PAD_LEFT, top + 2, title)
    c.text(PAD_LEFT, top + head - GLYPH_H - 3, panel.label)

    # frame
    c.hline(x0, x1, y0, FRAME)
    c.hline(x0, x1, y1, FRAME)
    c.rect(x0, y0, x0, y1, FRAME)
    c.rect(x1, y0, x1, y1, FRAME)

    n = len(panel.dates)
    if n == 0:
        return
    lo, hi = _value_range(panel)
    step = (x1 - x0) / n

    def X(i: int) -> float:
        return x0 + (i + 0.5) * step

    def Y(v: float) -> float:
        return y1 - (v - lo) / (hi - lo) * (y1 - y0)

    c.text(x1 + 4, y0, _fmt(hi))
    c.text(x1 + 4, y1 - GLYPH_H + 1, _fmt(lo))

    for g in panel.guides:
        gy = int(round(Y(g)))
        c.hline(x0 + 1, x1 - 1, gy, GUIDE, dash=4)
        if y0 + GLYPH_H < gy < y1 - GLYPH_H:
            c.text(x1 + 4, gy - GLYPH_H // 2, _fmt(g), GUIDE)

    half = max(int(step * 0.35), 0)
    if panel.kind == "histogram" and panel.bar_series is not None:
        base = int(round(Y(0.0)))
        for i, v in enumerate(panel.series[panel.bar_series]):
            if v is None:
                continue
            color = NEUTRAL_BAR if panel.bar_series == "volume" else (UP if v >= 0 else DOWN)
            xc = int(round(X(i)))
            c.rect(xc - half, base, xc + half, int(round(Y(v))), color)

    if panel.ohlc is not None:
        for i, (o, h, l, cl) in enumerate(panel.ohlc):
            color = UP if cl >= o else DOWN
            xc = int(round(X(i)))
            c.rect(xc, int(round(Y(h))), xc, int(round(Y(l))), color)
            c.rect(xc - half, int(round(Y(o))), xc + half, int(round(Y(cl))), color)

    k = 0
    for name, values in panel.series.items():
        if name == panel.bar_series:
            continue
        color = SERIES_COLORS.get(name)
        if color is None:
            color = _FALLBACK[k % len(_FALLBACK)]
            k += 1
        thick = 2 if name == "close" else 1
        for i in range(1, n):
            a, b = values[i - 1], values[i]
            if a is None or b is None:
                continue
            c.segment(X(i - 1), Y(a), X(i), Y(b), color, thick)
        if n == 1 and values[0] is not None:
            c.rect(int(X(0)) - 1, int(Y(values[0])) - 1, int(X(0)) + 1, int(Y(values[0])) + 1, color)

    index = {d: i for i, d in enumerate(panel.dates)}
    size = max(4, min(8, int(step)))
    for m in panel.markers:
        xc, yc = int(round(X(index[m.date]))), int(round(Y(m.price)))
        if m.kind == "BUY":
            c.triangle(xc, yc + size + 2, size, True, BUY)
        else:
            c.triangle(xc, yc - size - 2, size, False, SELL)

    if last:
        ty = bottom - DATE_ROW + 2
        first_label = panel.dates[0].isoformat()
        last_label = panel.dates[-1].isoformat()
        c.text(x0, ty, first_label)
        c.text(max(x0, x1 - 6 * len(last_label)), ty, last_label)


def render_png(spec: ChartSpec) -> bytes:
    """Render ``spec`` to PNG bytes; identical specs give identical bytes."""
    if spec.width <= 0 or spec.height <= 0:
        raise ChartError(f"chart dimensions must be positive, got {spec.width}x{spec.height}")
    spec.validate()
    canvas = Canvas(spec.width, spec.height)
    top = 0
    for i, panel in enumerate(spec.panels):
        _draw_panel(canvas, panel, top, title=spec.title if i == 0 else "",
                    last=i == len(spec.panels) - 1)
        if i:
            canvas.hline(0, spec.width - 1, top, FRAME)
        top += panel.height
    return canvas.to_png()


def chart_digest(png: bytes) -> str:
    return hashlib.sha256(png).hexdigest()


__all__ = ["render_png", "encode_png", "png_size", "chart_digest", "Canvas"]
