"""Chart descriptions and deterministic PNG rendering."""

from .raster import chart_digest, encode_png, png_size, render_png
from .spec import (
    SIGNAL_SIZE,
    SIGNAL_WINDOW,
    TECHNICAL_SIZE,
    TECHNICAL_WINDOW,
    ChartSpec,
    Marker,
    Panel,
    build_signal_chart,
    build_technical_chart,
)

__all__ = [
    "ChartSpec", "Panel", "Marker",
    "build_technical_chart", "build_signal_chart",
    "render_png", "encode_png", "png_size", "chart_digest",
    "TECHNICAL_SIZE", "SIGNAL_SIZE", "TECHNICAL_WINDOW", "SIGNAL_WINDOW",
]
