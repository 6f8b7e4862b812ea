import datetime as dt
import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_bars
from finvision.charting import (ChartSpec, Panel, build_signal_chart, build_technical_chart, chart_digest,
                                encode_png, png_size, render_png)
from finvision.charting.font import glyph, text_mask
from finvision.charting.spec import split_heights
from finvision.errors import ChartError
from finvision.market_data import Bar, compute_indicators
from finvision.synthetic import bars_from_closes, business_days

# Recorded on first render and reviewed by eye: ten candles with a rising
# drift and volume bars; signal chart with one green BUY and one red SELL.
GOLDEN_TECHNICAL = "b8567c7d0e0d4d83b27477cd3b0a258d8559bc7e366c8d127109c275c7fb4213"
GOLDEN_SIGNAL = "125a27161702ca4410c73a00fd9e2bedadce258284d452cd4553e9dd9e2c3fa4"


def _golden_bars():
    days = business_days(dt.date(2023, 3, 1), count=10)
    return bars_from_closes(days, [100, 101.5, 100.8, 102.2, 103.0, 102.1, 101.4, 103.3, 104.0, 103.6], seed=42)


def _decode(png: bytes) -> np.ndarray:
    """Minimal decoder for the filter-0 RGB PNGs this package writes."""
    w, h = png_size(png)
    pos, idat = 8, b""
    while pos < len(png):
        (length,) = struct.unpack(">I", png[pos:pos + 4])
        tag = png[pos + 4:pos + 8]
        if tag == b"IDAT":
            idat += png[pos + 8:pos + 8 + length]
        pos += 12 + length
    raw = np.frombuffer(zlib.decompress(idat), dtype=np.uint8).reshape(h, 1 + 3 * w)
    assert np.all(raw[:, 0] == 0)
    return raw[:, 1:].reshape(h, w, 3)


def test_golden_digests():
    bars = _golden_bars()
    tech = build_technical_chart(bars, compute_indicators(bars), window=10, size=(400, 300), title="GOLD 10")
    sig = build_signal_chart(bars, [(bars[2].date, "BUY"), (bars[6].date, "SELL"), (bars[8].date, "HOLD")],
                             window=10, size=(400, 200), title="GOLD SIG")
    assert chart_digest(render_png(tech)) == GOLDEN_TECHNICAL
    assert chart_digest(render_png(sig)) == GOLDEN_SIGNAL


def test_technical_chart_structure():
    bars = random_bars(120, seed=1)
    frame = compute_indicators(bars)
    spec = build_technical_chart(bars, frame)
    assert not spec.truncated
    assert (spec.width, spec.height) == (1200, 900)
    assert [p.kind for p in spec.panels] == ["candlestick", "histogram", "line-set", "histogram", "line-set"]
    assert sum(p.height for p in spec.panels) == 900
    assert all(len(p.dates) == 60 for p in spec.panels)
    assert spec.panels[2].guides == (30.0, 70.0)
    assert spec.panels[3].bar_series == "macd_hist"


def test_overlays_equal_indicator_frame_verbatim():
    bars = random_bars(150, seed=4)
    frame = compute_indicators(bars)
    price = build_technical_chart(bars, frame).panels[0]
    for name in ("sma10", "sma50", "bb_upper", "bb_mid", "bb_lower"):
        want = frame.series(name)[-60:]
        got = np.array([np.nan if v is None else v for v in price.series[name]])
        assert np.array_equal(got, want, equal_nan=True)
    assert price.ohlc == tuple((b.open, b.high, b.low, b.close) for b in bars[-60:])


def test_short_history_sets_truncation_flag():
    bars = random_bars(20, seed=2)
    spec = build_technical_chart(bars, compute_indicators(bars))
    assert spec.truncated and len(spec.panels[0].dates) == 20
    assert render_png(spec)[:8] == b"\x89PNG\r\n\x1a\n"


def test_misaligned_frame_and_empty_bars():
    bars = random_bars(70, seed=3)
    with pytest.raises(ChartError, match="aligned"):
        build_technical_chart(bars, compute_indicators(bars[:-1]))
    with pytest.raises(ChartError):
        build_technical_chart([], compute_indicators(bars))
    with pytest.raises(ChartError):
        build_signal_chart([], [])


def _sentinel(bars, before: int):
    """Replace the first ``before`` bars with absurd values."""
    out = []
    for i, b in enumerate(bars):
        if i < before:
            out.append(Bar(b.date, 9e6, 9e6, 9e6, 9e6, 9e12))
        else:
            out.append(b)
    return out


def test_builders_read_only_their_window():
    bars = random_bars(300, seed=8)
    tail = 60 + 200  # indicator lookback used by the pipeline
    frame = compute_indicators(bars[-tail:])
    a = build_technical_chart(bars, frame)
    # bars older than the window and frame entries older than the window are never read
    poisoned = _sentinel(bars, len(bars) - 60)
    b = build_technical_chart(poisoned, frame)
    assert a.to_dict() == b.to_dict()
    s1 = build_signal_chart(bars, [(bars[-3].date, "BUY")])
    s2 = build_signal_chart(_sentinel(bars, len(bars) - 30), [(bars[-3].date, "BUY")])
    assert s1.to_dict() == s2.to_dict()


def test_signal_markers_at_close():
    bars = random_bars(30, seed=5)
    spec = build_signal_chart(bars, [(bars[4].date, "BUY"), (bars[11].date, "SELL")])
    (panel,) = spec.panels
    assert panel.kind == "line-set"
    assert [(m.date, m.kind, m.price) for m in panel.markers] == [
        (bars[4].date, "BUY", bars[4].close), (bars[11].date, "SELL", bars[11].close)]


def test_all_hold_and_empty_decisions_have_no_markers():
    bars = random_bars(30, seed=6)
    assert build_signal_chart(bars, [(b.date, "HOLD") for b in bars]).panels[0].markers == ()
    assert build_signal_chart(bars, []).panels[0].markers == ()


def test_decision_outside_range_rejected():
    bars = random_bars(40, seed=7)
    with pytest.raises(ChartError, match="outside"):
        build_signal_chart(bars, [(bars[0].date, "BUY")])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(["BUY", "SELL", "HOLD"]), min_size=30, max_size=30))
def test_marker_count_equals_non_hold_decisions(actions):
    bars = random_bars(30, seed=9)
    spec = build_signal_chart(bars, list(zip([b.date for b in bars], actions)))
    assert len(spec.panels[0].markers) == sum(a != "HOLD" for a in actions)


def test_render_is_deterministic_and_sized():
    bars = random_bars(90, seed=10)
    spec = build_technical_chart(bars, compute_indicators(bars), size=(800, 600))
    a, b = render_png(spec), render_png(spec)
    assert a == b
    assert png_size(a) == (800, 600)
    assert _decode(a).shape == (600, 800, 3)


def test_marker_colors_present():
    bars = random_bars(30, seed=11)
    img = _decode(render_png(build_signal_chart(bars, [(bars[5].date, "BUY"), (bars[20].date, "SELL")])))
    colors = {tuple(c) for c in img.reshape(-1, 3)}
    assert (0x00, 0xA0, 0x40) in colors and (0xE0, 0x00, 0x00) in colors


def test_candle_colors_present():
    bars = random_bars(60, seed=12)
    img = _decode(render_png(build_technical_chart(bars, compute_indicators(bars))))
    colors = {tuple(c) for c in img.reshape(-1, 3)}
    assert (0x26, 0xA6, 0x9A) in colors and (0xEF, 0x53, 0x50) in colors


def test_invalid_specs_rejected():
    d = (dt.date(2023, 1, 2),)
    good = Panel(kind="line-set", height=10, dates=d, series={"x": (1.0,)})
    with pytest.raises(ChartError, match="dimensions"):
        render_png(ChartSpec("t", 0, 10, (good,)))
    with pytest.raises(ChartError, match="sum"):
        ChartSpec("t", 10, 11, (good,)).validate()
    with pytest.raises(ChartError, match="OHLC"):
        Panel(kind="candlestick", height=10, dates=d).validate()
    with pytest.raises(ChartError, match="axis"):
        from finvision.charting import Marker
        Panel(kind="line-set", height=10, dates=d, markers=(Marker(dt.date(2024, 1, 1), "BUY", 1.0),)).validate()
    with pytest.raises(ChartError, match="points"):
        Panel(kind="line-set", height=10, dates=d, series={"x": (1.0, 2.0)}).validate()


def test_spec_json_side_car():
    bars = random_bars(30, seed=13)
    spec = build_signal_chart(bars, [(bars[1].date, "BUY")])
    text = spec.to_json()
    assert '"markers"' in text and bars[1].date.isoformat() in text


def test_encode_png_round_trip():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(7, 5, 3), dtype=np.uint8)
    assert np.array_equal(_decode(encode_png(img)), img)


def test_split_heights_and_font():
    assert sum(split_heights(901, [0.45, 0.12, 0.14, 0.15, 0.14])) == 901
    with pytest.raises(ChartError):
        split_heights(3, [1, 1, 1, 1])
    assert len(glyph("A")) == 7
    assert text_mask("AB", 2).shape == (14, 22)
