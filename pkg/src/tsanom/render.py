"""Deterministic line-plot rendering of a segment to PNG.

Text is drawn from an embedded 5x7 bitmap font and lines are drawn without
anti-aliasing, so the output bytes depend only on the segment and config.
Ground-truth intervals are never drawn.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw

from .core import Segment
from .errors import RenderError

RGB = tuple[int, int, int]


@dataclass(frozen=True)
class RenderConfig:
    width_px: int = 1200
    height_px: int = 400
    line_width_px: int = 1
    x_axis_mode: str = "index"  # index | timestamp
    tick_count_target: int = 8
    font_size_pt: int = 10
    margin_px: int = 40
    background: RGB = (255, 255, 255)
    foreground: RGB = (31, 119, 180)
    axis_color: RGB = (0, 0, 0)
    grid_color: RGB = (225, 225, 225)

    def __post_init__(self) -> None:
        if self.width_px < 100 or self.height_px < 100:
            raise ValueError("width_px and height_px must be >= 100")
        if self.tick_count_target < 2:
            raise ValueError("tick_count_target must be >= 2")
        if self.x_axis_mode not in ("index", "timestamp"):
            raise ValueError(f"unknown x_axis_mode {self.x_axis_mode!r}")
        if self.line_width_px < 1:
            raise ValueError("line_width_px must be >= 1")


# --------------------------------------------------------------------------
# bitmap font
# --------------------------------------------------------------------------

_GLYPHS: dict[str, tuple[str, ...]] = {
    "0": (".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."),
    "1": ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "2": (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    "3": ("#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."),
    "4": ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    "5": ("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),
    "6": ("..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."),
    "7": ("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),
    "8": (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    "9": (".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."),
    "-": (".....", ".....", ".....", "#####", ".....", ".....", "....."),
    "+": (".....", "..#..", "..#..", "#####", "..#..", "..#..", "....."),
    ".": (".....", ".....", ".....", ".....", ".....", ".##..", ".##.."),
    ":": (".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."),
    "/": (".....", "....#", "...#.", "..#..", ".#...", "#....", "....."),
    " ": (".....",) * 7,
    "a": (".....", ".....", ".###.", "....#", ".####", "#...#", ".####"),
    "d": ("....#", "....#", ".##.#", "#..##", "#...#", "#...#", ".####"),
    "e": (".....", ".....", ".###.", "#...#", "#####", "#....", ".###."),
    "i": ("..#..", ".....", ".##..", "..#..", "..#..", "..#..", ".###."),
    "l": (".##..", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "m": (".....", ".....", "##.#.", "#.#.#", "#.#.#", "#...#", "#...#"),
    "n": (".....", ".....", "#.##.", "##..#", "#...#", "#...#", "#...#"),
    "t": (".#...", ".#...", "###..", ".#...", ".#...", ".#..#", "..##."),
    "u": (".....", ".....", "#...#", "#...#", "#...#", "#..##", ".##.#"),
    "v": (".....", ".....", "#...#", "#...#", "#...#", ".#.#.", "..#.."),
    "x": (".....", ".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#"),
}
_GLYPH_W, _GLYPH_H = 5, 7
_BITMAPS = {
    ch: np.array([[c == "#" for c in row] for row in rows], dtype=bool) for ch, rows in _GLYPHS.items()
}


def _font_scale(cfg: RenderConfig) -> int:
    return max(1, round(cfg.font_size_pt * 4 / 3 / _GLYPH_H))


def text_size(text: str, scale: int) -> tuple[int, int]:
    if not text:
        return 0, 0
    return (len(text) * (_GLYPH_W + 1) - 1) * scale, _GLYPH_H * scale


def draw_text(canvas: np.ndarray, x: int, y: int, text: str, color: RGB, scale: int) -> None:
    h, w, _ = canvas.shape
    for k, ch in enumerate(text):
        bm = _BITMAPS.get(ch, _BITMAPS[" "])
        if scale > 1:
            bm = np.kron(bm, np.ones((scale, scale), dtype=bool))
        x0 = x + k * (_GLYPH_W + 1) * scale
        ys, xs = np.nonzero(bm)
        ys = ys + y
        xs = xs + x0
        ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
        canvas[ys[ok], xs[ok]] = color


# --------------------------------------------------------------------------
# ticks
# --------------------------------------------------------------------------


def nice_ticks(lo: float, hi: float, target: int) -> tuple[list[float], float]:
    """Round-multiple ticks within [lo, hi] whose count is closest to ``target``."""
    span = hi - lo
    if span <= 0:
        return [lo], 1.0
    best: tuple[int, float] | None = None
    exp0 = math.floor(math.log10(span / target))
    for e in range(exp0 - 1, exp0 + 2):
        for mult in (1, 2, 2.5, 5):
            step = mult * 10.0**e
            first = math.ceil(lo / step - 1e-9)
            last = math.floor(hi / step + 1e-9)
            count = last - first + 1
            score = abs(count - target)
            if count >= 2 and (best is None or (score, -step) < (best[0], -best[1])):
                best = (score, step)
    step = best[1] if best else span
    first = math.ceil(lo / step - 1e-9)
    last = math.floor(hi / step + 1e-9)
    return [round(k * step, 12) for k in range(first, last + 1)], step


def format_number(v: float, step: float) -> str:
    if step >= 1 and float(v).is_integer():
        return str(int(v))
    decimals = max(0, -math.floor(math.log10(step) + 1e-12))
    if not math.isclose(round(step, decimals), step, rel_tol=1e-9):
        decimals += 1
    text = f"{v:.{decimals}f}"
    return "0" if text.strip("-0.") == "" else text


_TIME_STEPS = [
    (timedelta(seconds=s), fmt)
    for s, fmt in (
        (1, "%Y-%m-%d %H:%M:%S"), (5, "%Y-%m-%d %H:%M:%S"), (10, "%Y-%m-%d %H:%M:%S"),
        (15, "%Y-%m-%d %H:%M:%S"), (30, "%Y-%m-%d %H:%M:%S"),
        (60, "%Y-%m-%d %H:%M"), (300, "%Y-%m-%d %H:%M"), (600, "%Y-%m-%d %H:%M"),
        (900, "%Y-%m-%d %H:%M"), (1800, "%Y-%m-%d %H:%M"),
        (3600, "%Y-%m-%d %H:%M"), (7200, "%Y-%m-%d %H:%M"), (10800, "%Y-%m-%d %H:%M"),
        (21600, "%Y-%m-%d %H:%M"), (43200, "%Y-%m-%d %H:%M"),
        (86400, "%Y-%m-%d"), (2 * 86400, "%Y-%m-%d"), (7 * 86400, "%Y-%m-%d"),
        (14 * 86400, "%Y-%m-%d"), (30 * 86400, "%Y-%m-%d"), (91 * 86400, "%Y-%m-%d"),
        (365 * 86400, "%Y-%m-%d"),
    )
]
_EPOCH = datetime(1970, 1, 1)


def time_ticks(t0: datetime, t1: datetime, target: int, max_count: int) -> list[tuple[float, str]]:
    """Ticks at round time units; returns (epoch seconds, label) pairs."""
    s0 = (t0 - _EPOCH).total_seconds()
    s1 = (t1 - _EPOCH).total_seconds()
    best = None
    for step, fmt in _TIME_STEPS:
        st = step.total_seconds()
        first = math.ceil(s0 / st)
        last = math.floor(s1 / st)
        count = last - first + 1
        if count < 1 or count > max_count:
            continue
        score = abs(count - target)
        if best is None or score < best[0]:
            best = (score, st, fmt, first, last)
    if best is None:
        return [(s0, t0.strftime("%Y-%m-%d %H:%M:%S")), (s1, t1.strftime("%Y-%m-%d %H:%M:%S"))]
    _, st, fmt, first, last = best
    out = []
    for k in range(first, last + 1):
        sec = k * st
        out.append((sec, (_EPOCH + timedelta(seconds=sec)).strftime(fmt)))
    return out


# --------------------------------------------------------------------------
# layout and drawing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PlotLayout:
    y_range: tuple[float, float]
    y_ticks: list[tuple[float, str]]
    x_ticks: list[tuple[float, str]]  # (fractional 1-based index position, label)
    plot_box: tuple[int, int, int, int]  # left, top, right, bottom


def y_range_for(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = float(min(values)), float(max(values))
    if hi == lo:
        return lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _x_ticks(segment: Segment, cfg: RenderConfig, plot_w: int, scale: int) -> list[tuple[float, str]]:
    n = len(segment.series)
    stamps = segment.series.timestamps
    char_w = (_GLYPH_W + 1) * scale
    if cfg.x_axis_mode == "timestamp" and stamps is not None:
        if isinstance(stamps[0], datetime):
            secs = np.array([(t - _EPOCH).total_seconds() for t in stamps])
            max_count = max(2, plot_w // (char_w * 20))
            ticks = time_ticks(stamps[0], stamps[-1], cfg.tick_count_target, max_count)
            idx = np.arange(1, n + 1, dtype=np.float64)
            return [(float(np.interp(s, secs, idx)), lab) for s, lab in ticks]
        nums = np.asarray(stamps, dtype=np.float64)
        vals, step = nice_ticks(float(nums[0]), float(nums[-1]), cfg.tick_count_target)
        idx = np.arange(1, n + 1, dtype=np.float64)
        return [(float(np.interp(v, nums, idx)), format_number(v, step)) for v in vals]
    vals, step = nice_ticks(1.0, float(n), cfg.tick_count_target)
    return [(v, format_number(v, step)) for v in vals]


def plot_layout(segment: Segment, cfg: RenderConfig) -> PlotLayout:
    values = segment.series.values
    scale = _font_scale(cfg)
    y0, y1 = y_range_for(values)
    yv, ystep = nice_ticks(y0, y1, max(2, cfg.tick_count_target // 2 + 1))
    y_ticks = [(v, format_number(v, ystep)) for v in yv]
    label_w = max(text_size(lab, scale)[0] for _, lab in y_ticks)
    th = _GLYPH_H * scale
    left = max(cfg.margin_px, label_w + 14)
    top = max(cfg.margin_px // 2, th + 10)
    right = cfg.width_px - max(cfg.margin_px // 2, 10)
    bottom = cfg.height_px - max(cfg.margin_px, 2 * th + 16)
    if right - left < 10 or bottom - top < 10:
        raise RenderError("image too small for its margins")
    x_ticks = _x_ticks(segment, cfg, right - left, scale)
    return PlotLayout((y0, y1), y_ticks, x_ticks, (left, top, right, bottom))


def render_plot(segment: Segment, cfg: RenderConfig | None = None) -> bytes:
    cfg = cfg or RenderConfig()
    values = np.asarray(segment.series.values, dtype=np.float64)
    n = values.size
    if n < 2:
        raise RenderError("need at least two points to render")
    lay = plot_layout(segment, cfg)
    left, top, right, bottom = lay.plot_box
    scale = _font_scale(cfg)
    th = _GLYPH_H * scale
    y0, y1 = lay.y_range

    def px(i: float) -> int:
        return int(round(left + (i - 1) / (n - 1) * (right - left)))

    def py(v: float) -> int:
        return int(round(bottom - (v - y0) / (y1 - y0) * (bottom - top)))

    img = Image.new("RGB", (cfg.width_px, cfg.height_px), cfg.background)
    draw = ImageDraw.Draw(img)
    for v, _ in lay.y_ticks:
        draw.line([(left, py(v)), (right, py(v))], fill=cfg.grid_color, width=1)
    for pos, _ in lay.x_ticks:
        draw.line([(px(pos), top), (px(pos), bottom)], fill=cfg.grid_color, width=1)

    xs = np.rint(left + np.arange(n) / (n - 1) * (right - left)).astype(np.int64)
    ys = np.rint(bottom - (values - y0) / (y1 - y0) * (bottom - top)).astype(np.int64)
    draw.line(list(zip(xs.tolist(), ys.tolist())), fill=cfg.foreground, width=cfg.line_width_px)

    draw.line([(left, top), (left, bottom), (right, bottom)], fill=cfg.axis_color, width=1)
    for v, _ in lay.y_ticks:
        draw.line([(left - 5, py(v)), (left, py(v))], fill=cfg.axis_color, width=1)
    for pos, _ in lay.x_ticks:
        draw.line([(px(pos), bottom), (px(pos), bottom + 5)], fill=cfg.axis_color, width=1)

    canvas = np.asarray(img).copy()
    for v, lab in lay.y_ticks:
        w, _ = text_size(lab, scale)
        draw_text(canvas, left - 8 - w, py(v) - th // 2, lab, cfg.axis_color, scale)
    for pos, lab in lay.x_ticks:
        w, _ = text_size(lab, scale)
        x = min(max(px(pos) - w // 2, 0), cfg.width_px - w)
        draw_text(canvas, x, bottom + 8, lab, cfg.axis_color, scale)
    x_title = "time" if cfg.x_axis_mode == "timestamp" and segment.series.timestamps is not None else "index"
    w, _ = text_size(x_title, scale)
    draw_text(canvas, (left + right) // 2 - w // 2, bottom + th + 14, x_title, cfg.axis_color, scale)
    draw_text(canvas, 4, max(2, top - th - 6), "value", cfg.axis_color, scale)

    buf = io.BytesIO()
    Image.fromarray(canvas, "RGB").save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()
